//! Append-only record of every agent output, and the per-receiver context pool.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::{AgentId, CommGraph, GraphError};

/// Communication round, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Round(u32);

impl Round {
    pub const FIRST: Round = Round(1);

    pub fn new(t: u32) -> Result<Self, TranscriptError> {
        if t == 0 {
            Err(TranscriptError::ZeroRound)
        } else {
            Ok(Round(t))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn next(self) -> Round {
        Round(self.0 + 1)
    }
}

impl TryFrom<u32> for Round {
    type Error = TranscriptError;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        Round::new(v)
    }
}

impl From<Round> for u32 {
    fn from(r: Round) -> u32 {
        r.0
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One agent output. Field order matches the JSON lines interchange format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub author: AgentId,
    pub round: Round,
    #[serde(default)]
    pub role_label: String,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("rounds start at 1")]
    ZeroRound,
    #[error("duplicate message id {0}")]
    DuplicateId(MessageId),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Append-only message store. There is deliberately no removal API.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranscriptStore {
    messages: Vec<Message>,
    next_id: u64,
}

impl TranscriptStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a store from previously persisted messages, keeping their ids.
    pub fn from_messages(messages: Vec<Message>) -> Result<Self, TranscriptError> {
        let mut seen = HashSet::new();
        for m in &messages {
            if !seen.insert(m.id) {
                return Err(TranscriptError::DuplicateId(m.id));
            }
        }
        let next_id = messages.iter().map(|m| m.id.0 + 1).max().unwrap_or(0);
        Ok(Self { messages, next_id })
    }

    pub fn append_message(
        &mut self,
        author: AgentId,
        round: Round,
        text: impl Into<String>,
        role_label: impl Into<String>,
    ) -> MessageId {
        let id = MessageId(self.next_id);
        self.next_id += 1;
        self.messages.push(Message {
            id,
            author,
            round,
            role_label: role_label.into(),
            text: text.into(),
        });
        id
    }

    pub fn get(&self, id: MessageId) -> Option<&Message> {
        self.messages.iter().find(|m| m.id == id)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn last_round(&self) -> Option<Round> {
        self.messages.iter().map(|m| m.round).max()
    }

    /// Messages visible to `receiver` at round `t`: everything from earlier
    /// rounds whose author can reach the receiver (the receiver included).
    pub fn context_pool(&self, graph: &CommGraph, receiver: AgentId, t: Round) -> Result<ContextPool, TranscriptError> {
        let reach = graph.reachable_set(receiver)?;
        let mut messages: Vec<Message> = self
            .messages
            .iter()
            .filter(|m| m.round < t && reach.contains(&m.author))
            .cloned()
            .collect();
        // Stable sort keeps append order inside a round.
        messages.sort_by_key(|m| m.round);
        Ok(ContextPool { receiver, t, messages })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut messages = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let m: Message = serde_json::from_str(line).map_err(|e| TranscriptError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            messages.push(m);
        }
        Self::from_messages(messages)
    }

    /// SHA-256 over the canonical JSON lines form.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_jsonl().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The full, unpruned history available to one receiver at one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPool {
    pub receiver: AgentId,
    pub t: Round,
    pub messages: Vec<Message>,
}

impl ContextPool {
    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }
}
