//! Round-based multi-agent sessions.
//!
//! Each round, every agent (in the graph's execution order) gets its context
//! pool, a selection over that pool, a steering request, and one backend
//! call. Outputs of round `t` only become visible from round `t + 1`. After
//! the last round the decision node produces the final answer.

pub mod backend;
pub mod chat;
pub mod config;

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::graph::{AgentId, CommGraph};
use crate::select::{select_context, DecayParams, EmbeddingProvider, SelectError, SelectedContext};
use crate::steering::{build_request, render_prompt, SteeringError, SteeringMode, SteeringRequest, DEFAULT_AMPLIFICATION};
use crate::transcript::{Message, MessageId, Round, TranscriptError, TranscriptStore};

pub use backend::{answer_line, AgentBackend, BackendError, Decider, RemoteBackend, ScriptedBackend, StepInput};
pub use chat::{ChatClient, ChatConfig, ChatError, ChatExchange, ChatMessage, ChatRequest, API_KEY_ENV};
pub use config::{ConfigError, SessionFile};

pub const DEFAULT_FINAL_INSTRUCTION: &str =
    "You are the final decision maker. Read the task and the agents' outputs, then give the final answer. \
     For multiple-choice tasks, return only one option letter.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteeringConfig {
    pub mode: SteeringMode,
    pub amplification: f64,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            mode: SteeringMode::AnchorExport,
            amplification: DEFAULT_AMPLIFICATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinalReferConfig {
    /// Agents whose last-round outputs reach the decision node; all when unset.
    pub inputs: Option<Vec<AgentId>>,
    pub instruction: String,
}

impl Default for FinalReferConfig {
    fn default() -> Self {
        Self {
            inputs: None,
            instruction: DEFAULT_FINAL_INSTRUCTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub graph: CommGraph,
    pub rounds: u32,
    pub task: String,
    /// Query given to every agent; defaults to the task text.
    pub query: Option<String>,
    pub profiles: Vec<AgentProfile>,
    pub decay: DecayParams,
    pub steering: SteeringConfig,
    pub final_refer: FinalReferConfig,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(graph: CommGraph, rounds: u32, task: impl Into<String>, profiles: Vec<AgentProfile>) -> Self {
        Self {
            graph,
            rounds,
            task: task.into(),
            query: None,
            profiles,
            decay: DecayParams::default(),
            steering: SteeringConfig::default(),
            final_refer: FinalReferConfig::default(),
            seed: 0,
        }
    }

    pub fn query(&self) -> &str {
        self.query.as_deref().unwrap_or(&self.task)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rounds == 0 {
            return Err(HarnessError::Config("rounds must be at least 1".into()));
        }
        if self.profiles.len() != self.graph.n_agents() {
            return Err(HarnessError::Config(format!(
                "{} profiles for {} agents",
                self.profiles.len(),
                self.graph.n_agents()
            )));
        }
        if let Some(inputs) = &self.final_refer.inputs {
            if inputs.is_empty() {
                return Err(HarnessError::Config("final_refer.inputs is empty".into()));
            }
            if let Some(bad) = inputs.iter().find(|a| a.index() >= self.graph.n_agents()) {
                return Err(HarnessError::Config(format!("final_refer input {bad} is not an agent")));
            }
        }
        self.decay.validate()?;
        Ok(())
    }
}

/// One agent inference, as recorded in the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub agent: AgentId,
    pub round: Round,
    pub message_id: MessageId,
    pub backend: String,
    pub request: SteeringRequest,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepAudit {
    pub selection: SelectedContext,
    pub inference: InferenceRecord,
}

/// A line of the audit JSON lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AuditRecord {
    Selection(SelectedContext),
    Inference(InferenceRecord),
    FinalRefer { inputs: Vec<MessageId>, answer: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub transcript: TranscriptStore,
    pub steps: Vec<StepAudit>,
    pub final_inputs: Vec<MessageId>,
    pub final_answer: String,
}

impl SessionResult {
    pub fn audit_records(&self) -> Vec<AuditRecord> {
        let mut out = Vec::with_capacity(self.steps.len() * 2 + 1);
        for step in &self.steps {
            out.push(AuditRecord::Selection(step.selection.clone()));
            out.push(AuditRecord::Inference(step.inference.clone()));
        }
        out.push(AuditRecord::FinalRefer {
            inputs: self.final_inputs.clone(),
            answer: self.final_answer.clone(),
        });
        out
    }

    pub fn audit_jsonl(&self) -> String {
        audit_to_jsonl(&self.audit_records())
    }
}

pub fn audit_to_jsonl(records: &[AuditRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("audit record serializes") + "\n")
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Steering(#[from] SteeringError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("agent {agent} at round {round}: {source}")]
    Backend {
        agent: AgentId,
        round: Round,
        #[source]
        source: BackendError,
    },
    #[error("final decision: {0}")]
    FinalRefer(BackendError),
    #[error("final decision node received no inputs")]
    NoFinalInputs,
}

/// A failed session with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("session failed after {} messages: {error}", transcript.len())]
pub struct SessionFailure {
    pub error: HarnessError,
    pub transcript: TranscriptStore,
    pub steps: Vec<StepAudit>,
}

/// Runs a whole session.
pub fn run_session(
    config: &SessionConfig,
    backend: &mut dyn AgentBackend,
    provider: &dyn EmbeddingProvider,
) -> Result<SessionResult, SessionFailure> {
    let mut transcript = TranscriptStore::new();
    let mut steps = Vec::new();
    match drive(config, backend, provider, &mut transcript, &mut steps) {
        Ok((final_inputs, final_answer)) => Ok(SessionResult {
            transcript,
            steps,
            final_inputs,
            final_answer,
        }),
        Err(error) => Err(SessionFailure {
            error,
            transcript,
            steps,
        }),
    }
}

fn drive(
    config: &SessionConfig,
    backend: &mut dyn AgentBackend,
    provider: &dyn EmbeddingProvider,
    transcript: &mut TranscriptStore,
    steps: &mut Vec<StepAudit>,
) -> Result<(Vec<MessageId>, String), HarnessError> {
    config.validate()?;
    let graph = &config.graph;
    let order = graph.execution_order();
    let query = config.query();

    let mut round = Round::FIRST;
    for _ in 0..config.rounds {
        // Pools are frozen at round start, so appends below cannot leak
        // same-round outputs into later agents' selections.
        let frozen = transcript.clone();
        for &agent in &order {
            let profile = &config.profiles[agent.index()];
            let pool = frozen.context_pool(graph, agent, round)?;
            let selection = select_context(&pool, graph, query, round, &config.decay, provider)?;
            debug_assert!(selection.anchors.iter().all(|a| a.round < round));
            let rendered = render_prompt(query, &pool, &profile.prompt);
            let request = build_request(config.steering.mode, &selection, &rendered, config.steering.amplification)?;
            let output = backend
                .generate(&StepInput {
                    agent,
                    round,
                    profile,
                    request: &request,
                    selected: &selection,
                })
                .map_err(|source| HarnessError::Backend { agent, round, source })?;
            let message_id = transcript.append_message(agent, round, output.clone(), profile.name.clone());
            steps.push(StepAudit {
                selection,
                inference: InferenceRecord {
                    agent,
                    round,
                    message_id,
                    backend: backend.kind().to_string(),
                    request,
                    output,
                },
            });
        }
        round = round.next();
    }

    let last = Round::new(config.rounds).expect("validated rounds >= 1");
    let wanted: Vec<AgentId> = match &config.final_refer.inputs {
        Some(ids) => ids.clone(),
        None => order.clone(),
    };
    let inputs: Vec<Message> = transcript
        .messages()
        .iter()
        .filter(|m| m.round == last && wanted.contains(&m.author))
        .cloned()
        .collect();
    let answer = final_refer(&config.task, &inputs, &config.final_refer.instruction, backend)?;
    Ok((inputs.iter().map(|m| m.id).collect(), answer))
}

/// The decision node over the given agent outputs.
pub fn final_refer(
    task: &str,
    inputs: &[Message],
    instruction: &str,
    backend: &mut dyn AgentBackend,
) -> Result<String, HarnessError> {
    if inputs.is_empty() {
        return Err(HarnessError::NoFinalInputs);
    }
    backend
        .decide(task, inputs, instruction)
        .map_err(HarnessError::FinalRefer)
}

/// Outcome of re-running selection from persisted files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub checked: usize,
    /// `(line number, expected, replayed)` for every differing selection.
    pub mismatches: Vec<(usize, String, String)>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("audit line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// Re-runs every recorded selection against the persisted transcript and
/// compares the serialized results byte for byte.
pub fn replay_selections(
    transcript_jsonl: &str,
    audit_jsonl: &str,
    graph: &CommGraph,
    provider: &dyn EmbeddingProvider,
) -> Result<ReplayReport, ReplayError> {
    let store = TranscriptStore::from_jsonl(transcript_jsonl)?;
    let mut report = ReplayReport::default();
    let mut pools = HashMap::new();
    for (i, line) in audit_jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AuditRecord = serde_json::from_str(line).map_err(|e| ReplayError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let AuditRecord::Selection(recorded) = record else {
            continue;
        };
        let key = (recorded.receiver, recorded.t);
        let pool = match pools.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(store.context_pool(graph, recorded.receiver, recorded.t)?),
        };
        let replayed = select_context(pool, graph, &recorded.query, recorded.t, &recorded.params, provider)?;
        let expected = serde_json::to_string(&AuditRecord::Selection(recorded)).expect("serializes");
        let actual = serde_json::to_string(&AuditRecord::Selection(replayed)).expect("serializes");
        report.checked += 1;
        if expected != line || actual != line {
            report.mismatches.push((i + 1, line.to_string(), actual));
        }
    }
    Ok(report)
}
