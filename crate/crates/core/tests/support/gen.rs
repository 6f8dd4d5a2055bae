//! Random sessions for oracle and property tests.

use agent_radar::graph::{build_topology, LayerSpec, TopologyKind, TopologyParams};
use agent_radar::harness::{AgentProfile, Decider, ScriptedBackend, SessionConfig};
use agent_radar::SteeringMode;
use agent_radar::{AgentId, CommGraph, DecayParams, Round, TranscriptStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB: &[&str] = &[
    "pilot", "simulator", "training", "vestibule", "airline", "answer", "option", "critic", "wiki", "entity",
    "history", "banana", "the", "is", "flight",
];

pub struct RandomSession {
    pub graph: CommGraph,
    pub store: TranscriptStore,
    pub rounds: u32,
    pub query: String,
    pub params: DecayParams,
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> CommGraph {
    let seed = rng.random::<u64>();
    match rng.random_range(0..4) {
        0 => build_topology(TopologyKind::FullyConnected, n, &TopologyParams::default(), seed).unwrap(),
        1 => {
            let params = TopologyParams {
                edge_probability: rng.random_range(0.0..=1.0),
                ..Default::default()
            };
            build_topology(TopologyKind::Random, n, &params, seed).unwrap()
        }
        2 => {
            let params = TopologyParams {
                layers: LayerSpec::Count(rng.random_range(1..=n)),
                ..Default::default()
            };
            build_topology(TopologyKind::Layered, n, &params, seed).unwrap()
        }
        _ => {
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..n).map(move |b| (a, b)))
                .filter(|&(a, b)| a != b)
                .filter(|_| rng.random_bool(0.35))
                .collect();
            CommGraph::from_edges(n, TopologyKind::Custom, seed, edges, None).unwrap()
        }
    }
}

pub fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let words = rng.random_range(1..=6);
    let mut s: Vec<&str> = (0..words).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
    if rng.random_bool(0.2) {
        s.push("3.14");
    }
    let mut text = s.join(" ");
    if let Some(first) = text.get(0..1) {
        let upper = first.to_uppercase();
        text.replace_range(0..1, &upper);
    }
    text.push(['.', '!', '?', '.'][rng.random_range(0..4)]);
    text
}

pub fn random_message(rng: &mut ChaCha8Rng) -> String {
    let count = rng.random_range(0..=8);
    let mut text = String::new();
    for i in 0..count {
        if i > 0 {
            text.push_str(if rng.random_bool(0.2) { "\n" } else { " " });
        }
        text.push_str(&random_sentence(rng));
    }
    text
}

pub fn random_params(rng: &mut ChaCha8Rng) -> DecayParams {
    DecayParams {
        lambda_s: rng.random_range(0.05..0.99),
        lambda_t: rng.random_range(0.05..0.99),
        theta: rng.random_range(-0.3..0.9),
        ..Default::default()
    }
}

/// N <= 5 agents, T <= 3 rounds, <= 8 sentences per message.
pub fn random_session(seed: u64) -> RandomSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=5);
    let rounds = rng.random_range(1..=3);
    let graph = random_graph(&mut rng, n);
    let mut store = TranscriptStore::new();
    for t in 1..=rounds {
        for a in 0..n {
            let text = random_message(&mut rng);
            store.append_message(AgentId(a), Round::new(t).unwrap(), text, format!("role{a}"));
        }
    }
    let qwords = rng.random_range(1..=4);
    let query = (0..qwords)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ");
    let params = random_params(&mut rng);
    RandomSession {
        graph,
        store,
        rounds,
        query,
        params,
    }
}

/// A runnable scripted session over a random graph.
pub fn random_scripted(seed: u64) -> (SessionConfig, ScriptedBackend) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.random_range(1..=5);
    let rounds = rng.random_range(1..=3);
    let graph = random_graph(&mut rng, n);
    let profiles = (0..n)
        .map(|i| AgentProfile {
            name: format!("Agent{i}"),
            prompt: format!("You are agent {i}."),
        })
        .collect();
    let outputs = (0..n)
        .map(|_| (0..rounds).map(|_| random_message(&mut rng)).collect())
        .collect();
    let mut cfg = SessionConfig::new(graph, rounds, random_sentence(&mut rng), profiles);
    cfg.decay = random_params(&mut rng);
    if rng.random_bool(0.5) {
        cfg.query = Some(VOCAB[rng.random_range(0..VOCAB.len())].to_string());
    }
    cfg.steering.mode = if rng.random_bool(0.5) {
        SteeringMode::AnchorExport
    } else {
        SteeringMode::PromptAppend
    };
    cfg.seed = seed;
    (cfg, ScriptedBackend::new(outputs, Decider::Majority))
}
