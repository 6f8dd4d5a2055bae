//! Brute-force reference for hop distances and sentence selection.
//!
//! Nothing here calls the library's graph search, pool construction, decay
//! or cosine code. The encoder and the sentence splitter are inputs to the
//! scoring equations, so those are taken from the library as given.

use std::collections::BTreeSet;

use agent_radar::select::{segment_sentences, EmbeddingProvider};
use agent_radar::{CommGraph, DecayParams, Message, TranscriptStore};

/// Shortest directed path length by enumerating every simple path.
pub fn path_distance(graph: &CommGraph, from: usize, to: usize) -> Option<usize> {
    if from == to {
        return Some(0);
    }
    let n = graph.n_agents();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|a| graph.edges().filter(|&(x, _)| x == a).map(|(_, y)| y).collect())
        .collect();
    let mut best: Option<usize> = None;
    let mut visited = vec![false; n];
    fn dfs(node: usize, to: usize, len: usize, adj: &[Vec<usize>], visited: &mut [bool], best: &mut Option<usize>) {
        if node == to {
            *best = Some(best.map_or(len, |b| b.min(len)));
            return;
        }
        visited[node] = true;
        for &next in &adj[node] {
            if !visited[next] {
                dfs(next, to, len + 1, adj, visited, best);
            }
        }
        visited[node] = false;
    }
    dfs(from, to, 0, &adj, &mut visited, &mut best);
    best
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// One oracle verdict per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSentence {
    pub message_id: u64,
    pub ordinal: usize,
    pub phi_s: f64,
    pub phi_t: f64,
    pub phi_sem: f64,
    pub score: f64,
}

/// Scores every sentence visible to `receiver` at round `t` from scratch.
pub fn score_all(
    store: &TranscriptStore,
    graph: &CommGraph,
    receiver: usize,
    t: u32,
    query: &str,
    params: &DecayParams,
    enc: &dyn EmbeddingProvider,
) -> Vec<OracleSentence> {
    let q = enc.embed(query).unwrap();
    let mut visible: Vec<&Message> = store
        .messages()
        .iter()
        .filter(|m| m.round.get() < t)
        .filter(|m| m.author.index() < graph.n_agents())
        .filter(|m| path_distance(graph, m.author.index(), receiver).is_some())
        .collect();
    visible.sort_by_key(|m| m.round.get());

    let mut out = Vec::new();
    for m in visible {
        let d = path_distance(graph, m.author.index(), receiver).unwrap() as i32;
        let phi_s = if params.disable_spatial || d <= 1 { 1.0 } else { params.lambda_s.powi(d - 1) };
        let age = (t - m.round.get() - 1) as i32;
        let phi_t = if params.disable_temporal { 1.0 } else { params.lambda_t.powi(age) };
        for s in segment_sentences(m) {
            let e = enc.embed(&s.text).unwrap();
            let phi_sem = cosine(e.values(), q.values());
            out.push(OracleSentence {
                message_id: m.id.0,
                ordinal: s.ordinal,
                phi_s,
                phi_t,
                phi_sem,
                score: phi_s * phi_t * phi_sem,
            });
        }
    }
    out
}

/// Anchor keys `(message_id, ordinal)` in chronological order.
pub fn anchors(
    store: &TranscriptStore,
    graph: &CommGraph,
    receiver: usize,
    t: u32,
    query: &str,
    params: &DecayParams,
    enc: &dyn EmbeddingProvider,
) -> Vec<(u64, usize)> {
    score_all(store, graph, receiver, t, query, params, enc)
        .into_iter()
        .filter(|s| s.score >= params.theta)
        .map(|s| (s.message_id, s.ordinal))
        .collect()
}

pub fn key_set(keys: &[(u64, usize)]) -> BTreeSet<(u64, usize)> {
    keys.iter().copied().collect()
}
