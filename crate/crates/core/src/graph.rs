//! Directed communication topology between agents.
//!
//! An edge `(from, to)` means the output of `from` is delivered to `to`.
//! Distances are always measured sender → receiver, so the neighborhood of
//! an agent is the set of agents that can *reach* it.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default edge probability for [`TopologyKind::Random`].
pub const DEFAULT_EDGE_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl AgentId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for AgentId {
    fn from(v: usize) -> Self {
        AgentId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    FullyConnected,
    Random,
    Layered,
    Debate,
    Custom,
}

impl TopologyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::FullyConnected => "fully_connected",
            TopologyKind::Random => "random",
            TopologyKind::Layered => "layered",
            TopologyKind::Debate => "debate",
            TopologyKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fully_connected" | "complete" | "full" => Ok(TopologyKind::FullyConnected),
            "random" => Ok(TopologyKind::Random),
            "layered" => Ok(TopologyKind::Layered),
            "debate" => Ok(TopologyKind::Debate),
            "custom" => Ok(TopologyKind::Custom),
            other => Err(GraphError::UnknownKind(other.to_string())),
        }
    }
}

/// Shortest directed path length, or explicitly unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HopDistance {
    Finite(usize),
    Unreachable,
}

impl HopDistance {
    pub fn finite(self) -> Option<usize> {
        match self {
            HopDistance::Finite(d) => Some(d),
            HopDistance::Unreachable => None,
        }
    }

    pub fn is_reachable(self) -> bool {
        matches!(self, HopDistance::Finite(_))
    }
}

/// How agents are grouped into layers for [`TopologyKind::Layered`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// Randomly assign agents (seeded) to this many non-empty layers.
    Count(usize),
    /// Explicit groups, earliest layer first.
    Groups(Vec<Vec<usize>>),
}

/// Generator parameters. Fields irrelevant to the chosen kind are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyParams {
    pub edge_probability: f64,
    pub layers: LayerSpec,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            edge_probability: DEFAULT_EDGE_PROBABILITY,
            layers: LayerSpec::Count(2),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("graph must contain at least one agent")]
    Empty,
    #[error("edge probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("layer count {layers} is invalid for {n_agents} agents")]
    InvalidLayerCount { layers: usize, n_agents: usize },
    #[error("layer assignment is invalid: {0}")]
    InvalidLayers(String),
    #[error("agent {id} out of range for graph with {n_agents} agents")]
    AgentOutOfRange { id: usize, n_agents: usize },
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) connects agents in the same or a later layer")]
    LayerViolation(usize, usize),
    #[error("unknown topology kind '{0}'")]
    UnknownKind(String),
    #[error("custom graphs are loaded from an edge list, not generated")]
    NotGenerated,
    #[error("graph json: {0}")]
    Json(String),
}

/// Immutable directed communication graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n_agents: usize,
    kind: TopologyKind,
    seed: u64,
    edges: BTreeSet<(usize, usize)>,
    /// Layer index per agent; present only for layered graphs.
    layers: Option<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from an explicit edge list, validating every endpoint.
    pub fn from_edges(
        n_agents: usize,
        kind: TopologyKind,
        seed: u64,
        edges: impl IntoIterator<Item = (usize, usize)>,
        layers: Option<Vec<usize>>,
    ) -> Result<Self, GraphError> {
        if n_agents == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for (from, to) in edges {
            for id in [from, to] {
                if id >= n_agents {
                    return Err(GraphError::AgentOutOfRange { id, n_agents });
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            set.insert((from, to));
        }
        if let Some(layer_of) = &layers {
            if layer_of.len() != n_agents {
                return Err(GraphError::InvalidLayers(format!(
                    "{} layer entries for {} agents",
                    layer_of.len(),
                    n_agents
                )));
            }
            if let Some(&(a, b)) = set.iter().find(|&&(a, b)| layer_of[a] >= layer_of[b]) {
                return Err(GraphError::LayerViolation(a, b));
            }
        }
        let mut incoming = vec![Vec::new(); n_agents];
        for &(from, to) in &set {
            incoming[to].push(from);
        }
        Ok(Self {
            n_agents,
            kind,
            seed,
            edges: set,
            layers,
            incoming,
        })
    }

    pub fn fully_connected(n_agents: usize) -> Result<Self, GraphError> {
        build_topology(TopologyKind::FullyConnected, n_agents, &TopologyParams::default(), 0)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: AgentId, to: AgentId) -> bool {
        self.edges.contains(&(from.0, to.0))
    }

    pub fn layers(&self) -> Option<&[usize]> {
        self.layers.as_deref()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (0..self.n_agents).map(AgentId)
    }

    fn check(&self, id: AgentId) -> Result<(), GraphError> {
        if id.0 >= self.n_agents {
            Err(GraphError::AgentOutOfRange {
                id: id.0,
                n_agents: self.n_agents,
            })
        } else {
            Ok(())
        }
    }

    /// Directed BFS distance from `from` to `to`.
    pub fn hop_distance(&self, from: AgentId, to: AgentId) -> Result<HopDistance, GraphError> {
        self.check(from)?;
        self.check(to)?;
        // Search backwards from the receiver so one pass serves every sender.
        Ok(self.distances_to(to)[from.0])
    }

    /// Distance from every agent to `target`, indexed by sender.
    pub fn distances_to(&self, target: AgentId) -> Vec<HopDistance> {
        let mut dist = vec![HopDistance::Unreachable; self.n_agents];
        if target.0 >= self.n_agents {
            return dist;
        }
        dist[target.0] = HopDistance::Finite(0);
        let mut queue = VecDeque::from([(target.0, 0usize)]);
        while let Some((node, d)) = queue.pop_front() {
            for &pred in &self.incoming[node] {
                if dist[pred] == HopDistance::Unreachable {
                    dist[pred] = HopDistance::Finite(d + 1);
                    queue.push_back((pred, d + 1));
                }
            }
        }
        dist
    }

    /// Agents whose directed distance to `node` is at most `k`, including `node`.
    pub fn k_hop_neighborhood(&self, node: AgentId, k: usize) -> Result<BTreeSet<AgentId>, GraphError> {
        self.check(node)?;
        Ok(self
            .distances_to(node)
            .into_iter()
            .enumerate()
            .filter_map(|(j, d)| match d {
                HopDistance::Finite(d) if d <= k => Some(AgentId(j)),
                _ => None,
            })
            .collect())
    }

    /// Every agent with a directed path to `node`, plus `node` itself.
    pub fn reachable_set(&self, node: AgentId) -> Result<BTreeSet<AgentId>, GraphError> {
        self.k_hop_neighborhood(node, self.n_agents - 1)
    }

    /// Deterministic per-round execution order.
    ///
    /// Layered graphs run layer by layer (ascending id within a layer);
    /// every other kind runs in ascending id order.
    pub fn execution_order(&self) -> Vec<AgentId> {
        let mut order: Vec<usize> = (0..self.n_agents).collect();
        if let Some(layer_of) = &self.layers {
            order.sort_by_key(|&i| (layer_of[i], i));
        }
        order.into_iter().map(AgentId).collect()
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n_agents: self.n_agents,
            kind: self.kind,
            seed: self.seed,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            layers: self.layers.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
        file.try_into()
    }
}

/// On-disk graph representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n_agents: usize,
    pub kind: TopologyKind,
    pub seed: u64,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
}

impl TryFrom<GraphFile> for CommGraph {
    type Error = GraphError;

    fn try_from(file: GraphFile) -> Result<Self, Self::Error> {
        let graph = CommGraph::from_edges(
            file.n_agents,
            file.kind,
            file.seed,
            file.edges.iter().map(|e| (e[0], e[1])),
            file.layers,
        )?;
        if file.kind == TopologyKind::FullyConnected || file.kind == TopologyKind::Debate {
            let expected = graph.n_agents * (graph.n_agents - 1);
            if graph.edge_count() != expected {
                return Err(GraphError::Json(format!(
                    "{} graph has {} edges, expected {}",
                    file.kind.as_str(),
                    graph.edge_count(),
                    expected
                )));
            }
        }
        Ok(graph)
    }
}

/// Generates a topology. Identical arguments always yield identical edge sets.
pub fn build_topology(
    kind: TopologyKind,
    n_agents: usize,
    params: &TopologyParams,
    seed: u64,
) -> Result<CommGraph, GraphError> {
    if n_agents == 0 {
        return Err(GraphError::Empty);
    }
    match kind {
        TopologyKind::Custom => Err(GraphError::NotGenerated),
        TopologyKind::FullyConnected | TopologyKind::Debate => {
            let edges = all_pairs(n_agents);
            CommGraph::from_edges(n_agents, kind, seed, edges, None)
        }
        TopologyKind::Random => {
            let p = params.edge_probability;
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(GraphError::InvalidProbability(p));
            }
            let edges = all_pairs(n_agents)
                .enumerate()
                .filter(|&(slot, _)| pair_uniform(seed, slot as u64) < p)
                .map(|(_, e)| e)
                .collect::<Vec<_>>();
            CommGraph::from_edges(n_agents, kind, seed, edges, None)
        }
        TopologyKind::Layered => {
            let layer_of = assign_layers(n_agents, &params.layers, seed)?;
            let edges = all_pairs(n_agents)
                .filter(|&(a, b)| layer_of[b] == layer_of[a] + 1)
                .collect::<Vec<_>>();
            CommGraph::from_edges(n_agents, kind, seed, edges, Some(layer_of))
        }
    }
}

fn all_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
}

/// Counter-based uniform draw in [0, 1) for edge slot `slot`.
fn pair_uniform(seed: u64, slot: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    rng.random::<f64>()
}

fn assign_layers(n_agents: usize, spec: &LayerSpec, seed: u64) -> Result<Vec<usize>, GraphError> {
    match spec {
        LayerSpec::Count(layers) => {
            let layers = *layers;
            if layers == 0 || layers > n_agents {
                return Err(GraphError::InvalidLayerCount { layers, n_agents });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut agents: Vec<usize> = (0..n_agents).collect();
            // Fisher-Yates via rand's shuffle would tie us to its internals; keep it explicit.
            for i in (1..n_agents).rev() {
                let j = rng.random_range(0..=i);
                agents.swap(i, j);
            }
            let mut layer_of = vec![0; n_agents];
            for (pos, &agent) in agents.iter().enumerate() {
                layer_of[agent] = if pos < layers { pos } else { rng.random_range(0..layers) };
            }
            Ok(layer_of)
        }
        LayerSpec::Groups(groups) => {
            if groups.is_empty() || groups.len() > n_agents {
                return Err(GraphError::InvalidLayerCount {
                    layers: groups.len(),
                    n_agents,
                });
            }
            let mut layer_of = vec![usize::MAX; n_agents];
            for (layer, group) in groups.iter().enumerate() {
                if group.is_empty() {
                    return Err(GraphError::InvalidLayers(format!("layer {layer} is empty")));
                }
                for &agent in group {
                    if agent >= n_agents {
                        return Err(GraphError::AgentOutOfRange { id: agent, n_agents });
                    }
                    if layer_of[agent] != usize::MAX {
                        return Err(GraphError::InvalidLayers(format!("agent {agent} assigned twice")));
                    }
                    layer_of[agent] = layer;
                }
            }
            if let Some(missing) = layer_of.iter().position(|&l| l == usize::MAX) {
                return Err(GraphError::InvalidLayers(format!("agent {missing} has no layer")));
            }
            Ok(layer_of)
        }
    }
}
