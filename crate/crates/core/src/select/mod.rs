//! Sentence-level context selection.
//!
//! Every sentence in a receiver's context pool is scored as
//! `phi_s * phi_t * phi_sem`: spatial decay over hop distance, temporal
//! decay over round age, and semantic similarity to the current query.
//! Sentences scoring at least `theta` become anchors; the query itself is
//! always part of the selected context.

pub mod bm25;
pub mod decay;
pub mod embed;
pub mod segment;

use serde::{Deserialize, Serialize};

use crate::graph::{AgentId, CommGraph, HopDistance};
use crate::transcript::{ContextPool, Round};

pub use bm25::{bm25_score, Bm25Params, CorpusStats};
pub use decay::{message_relevance, sentence_score, spatial_decay, temporal_decay, DecayError};
pub use embed::{
    cosine_similarity, EmbedError, EmbeddingProvider, EmbeddingVector, LocalHashEncoder, RemoteEncoder,
    RemoteEncoderConfig,
};
pub use segment::{segment_sentences, sentence_spans, Sentence};

pub const DEFAULT_LAMBDA_S: f64 = 0.92;
pub const DEFAULT_LAMBDA_T: f64 = 0.92;
pub const DEFAULT_THETA: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    #[default]
    DenseCosine,
    #[serde(rename = "bm25")]
    LexicalBm25,
}

impl std::str::FromStr for Matcher {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dense" | "dense_cosine" | "cosine" => Ok(Matcher::DenseCosine),
            "bm25" | "lexical" | "lexical_bm25" => Ok(Matcher::LexicalBm25),
            other => Err(format!("unknown matcher '{other}' (expected dense or bm25)")),
        }
    }
}

/// Scoring hyperparameters and ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayParams {
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub theta: f64,
    pub disable_spatial: bool,
    pub disable_temporal: bool,
    pub matcher: Matcher,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            lambda_s: DEFAULT_LAMBDA_S,
            lambda_t: DEFAULT_LAMBDA_T,
            theta: DEFAULT_THETA,
            disable_spatial: false,
            disable_temporal: false,
            matcher: Matcher::DenseCosine,
        }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<(), SelectError> {
        if !self.disable_spatial {
            decay::check_rate(self.lambda_s)?;
        }
        if !self.disable_temporal {
            decay::check_rate(self.lambda_t)?;
        }
        if self.theta.is_nan() {
            return Err(SelectError::InvalidTheta);
        }
        Ok(())
    }
}

/// A sentence with its full score decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    #[serde(flatten)]
    pub sentence: Sentence,
    pub author: AgentId,
    pub round: Round,
    pub phi_s: f64,
    pub phi_t: f64,
    pub r: f64,
    pub phi_sem: f64,
    pub score: f64,
}

/// The query plus every anchor sentence, in chronological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedContext {
    pub receiver: AgentId,
    pub t: Round,
    pub query: String,
    pub params: DecayParams,
    pub encoder: String,
    pub anchors: Vec<ScoredSentence>,
}

impl SelectedContext {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("selection serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error(transparent)]
    Decay(#[from] DecayError),
    #[error("threshold must be a number")]
    InvalidTheta,
    #[error("pool was built for round {pool}, selection requested for round {requested}")]
    RoundMismatch { pool: Round, requested: Round },
    #[error("message {message} by agent {author} cannot reach receiver {receiver}")]
    UnreachableAuthor {
        message: u64,
        author: AgentId,
        receiver: AgentId,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Scores every sentence in the pool, in pool order.
pub fn score_pool(
    pool: &ContextPool,
    graph: &CommGraph,
    query: &str,
    t: Round,
    params: &DecayParams,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<ScoredSentence>, SelectError> {
    params.validate()?;
    if pool.t != t {
        return Err(SelectError::RoundMismatch {
            pool: pool.t,
            requested: t,
        });
    }
    let distances = graph.distances_to(pool.receiver);

    let mut weighted = Vec::new();
    for message in &pool.messages {
        let d = distances
            .get(message.author.index())
            .copied()
            .unwrap_or(HopDistance::Unreachable);
        if !d.is_reachable() {
            return Err(SelectError::UnreachableAuthor {
                message: message.id.0,
                author: message.author,
                receiver: pool.receiver,
            });
        }
        let phi_s = if params.disable_spatial { 1.0 } else { spatial_decay(d, params.lambda_s)? };
        let phi_t = if params.disable_temporal {
            1.0
        } else {
            temporal_decay(message.round, t, params.lambda_t)?
        };
        for sentence in segment_sentences(message) {
            weighted.push((sentence, message.author, message.round, phi_s, phi_t));
        }
    }

    let texts: Vec<&str> = weighted.iter().map(|(s, ..)| s.text.as_str()).collect();
    let semantic = match params.matcher {
        Matcher::DenseCosine => {
            let query_vec = provider.embed(query)?;
            provider
                .embed_batch(&texts)?
                .iter()
                .map(|e| cosine_similarity(e, &query_vec))
                .collect::<Result<Vec<_>, _>>()?
        }
        Matcher::LexicalBm25 => CorpusStats::build(texts.iter().copied(), Bm25Params::default()).normalized_scores(query),
    };

    Ok(weighted
        .into_iter()
        .zip(semantic)
        .map(|((sentence, author, round, phi_s, phi_t), phi_sem)| {
            let r = message_relevance(phi_s, phi_t);
            ScoredSentence {
                sentence,
                author,
                round,
                phi_s,
                phi_t,
                r,
                phi_sem,
                score: sentence_score(r, phi_sem),
            }
        })
        .collect())
}

/// Keeps every scored sentence with `score >= theta`, preserving order.
pub fn apply_threshold(scored: &[ScoredSentence], theta: f64) -> Vec<ScoredSentence> {
    scored.iter().filter(|s| s.score >= theta).cloned().collect()
}

/// Builds the attention-steered context for `pool.receiver` at round `t`.
pub fn select_context(
    pool: &ContextPool,
    graph: &CommGraph,
    query: &str,
    t: Round,
    params: &DecayParams,
    provider: &dyn EmbeddingProvider,
) -> Result<SelectedContext, SelectError> {
    let scored = score_pool(pool, graph, query, t, params, provider)?;
    Ok(SelectedContext {
        receiver: pool.receiver,
        t,
        query: query.to_string(),
        params: *params,
        encoder: provider.name().to_string(),
        anchors: apply_threshold(&scored, params.theta),
    })
}
