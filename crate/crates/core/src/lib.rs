//! Sentence-level context selection for multi-agent LLM systems.
//!
//! Agents talk over a directed [`graph::CommGraph`] in rounds. Every output
//! lands in an append-only [`transcript::TranscriptStore`]. Before an agent
//! speaks, [`select::select_context`] scores each sentence of its context
//! pool by semantic similarity to the query, discounted by how many hops
//! away the author sits and how many rounds ago it was said. The surviving
//! sentences become anchors that [`steering`] hands to an attention-steering
//! backend, while the full history stays in the prompt.
//! [`harness::run_session`] drives whole sessions.

pub mod graph;
pub mod harness;
pub mod select;
pub mod steering;
pub mod transcript;
pub mod transport;

pub use graph::{build_topology, AgentId, CommGraph, GraphError, HopDistance, LayerSpec, TopologyKind, TopologyParams};
pub use select::{
    select_context, DecayParams, EmbeddingProvider, LocalHashEncoder, Matcher, ScoredSentence, SelectError,
    SelectedContext,
};
pub use steering::{SteeringMode, SteeringRequest};
pub use transcript::{ContextPool, Message, MessageId, Round, TranscriptStore};
