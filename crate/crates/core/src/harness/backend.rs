//! Agent inference backends: scripted (deterministic) and remote chat.

use serde::{Deserialize, Serialize};

use super::chat::{ChatClient, ChatError, ChatMessage, ChatRequest};
use super::AgentProfile;
use crate::graph::AgentId;
use crate::select::SelectedContext;
use crate::steering::{SteeringMode, SteeringRequest};
use crate::transcript::{Message, Round};

/// Everything a backend may use to produce one agent output.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub agent: AgentId,
    pub round: Round,
    pub profile: &'a AgentProfile,
    pub request: &'a SteeringRequest,
    pub selected: &'a SelectedContext,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("no scripted output for agent {agent} at round {round}")]
    MissingScript { agent: AgentId, round: u32 },
    #[error(transparent)]
    Chat(#[from] ChatError),
}

pub trait AgentBackend {
    fn kind(&self) -> &'static str;

    fn generate(&mut self, step: &StepInput<'_>) -> Result<String, BackendError>;

    /// The decision node: aggregates agent outputs into a final answer.
    fn decide(&mut self, task: &str, inputs: &[Message], instruction: &str) -> Result<String, BackendError>;
}

/// The last non-empty line of an output, trimmed.
pub fn answer_line(text: &str) -> &str {
    text.lines().rev().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decider {
    /// Answer line of the first input.
    Echo,
    /// Most frequent answer line; ties go to the first seen.
    #[default]
    Majority,
    Fixed(String),
}

impl Decider {
    pub fn decide(&self, inputs: &[Message]) -> String {
        match self {
            Decider::Echo => inputs.first().map(|m| answer_line(&m.text)).unwrap_or("").to_string(),
            Decider::Fixed(answer) => answer.clone(),
            Decider::Majority => {
                let mut tally: Vec<(&str, usize)> = Vec::new();
                for m in inputs {
                    let line = answer_line(&m.text);
                    match tally.iter_mut().find(|(l, _)| *l == line) {
                        Some((_, n)) => *n += 1,
                        None => tally.push((line, 1)),
                    }
                }
                // max_by_key keeps the last maximum; scan manually to keep the first.
                let mut best: Option<(&str, usize)> = None;
                for (line, n) in tally {
                    if best.is_none_or(|(_, b)| n > b) {
                        best = Some((line, n));
                    }
                }
                best.map(|(l, _)| l.to_string()).unwrap_or_default()
            }
        }
    }
}

/// Fixed outputs per agent and round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedBackend {
    /// `outputs[agent][round - 1]`.
    pub outputs: Vec<Vec<String>>,
    #[serde(default)]
    pub decider: Decider,
}

impl ScriptedBackend {
    pub fn new(outputs: Vec<Vec<String>>, decider: Decider) -> Self {
        Self { outputs, decider }
    }

    /// Checks the script covers every `(agent, round)` of a session.
    pub fn covers(&self, n_agents: usize, rounds: u32) -> Result<(), BackendError> {
        for agent in 0..n_agents {
            for round in 1..=rounds {
                if self.lookup(AgentId(agent), round).is_none() {
                    return Err(BackendError::MissingScript {
                        agent: AgentId(agent),
                        round,
                    });
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, agent: AgentId, round: u32) -> Option<&String> {
        self.outputs.get(agent.index())?.get(round as usize - 1)
    }
}

impl AgentBackend for ScriptedBackend {
    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn generate(&mut self, step: &StepInput<'_>) -> Result<String, BackendError> {
        self.lookup(step.agent, step.round.get())
            .cloned()
            .ok_or(BackendError::MissingScript {
                agent: step.agent,
                round: step.round.get(),
            })
    }

    fn decide(&mut self, _task: &str, inputs: &[Message], _instruction: &str) -> Result<String, BackendError> {
        Ok(self.decider.decide(inputs))
    }
}

/// Chat-completion backend. With [`SteeringMode::AnchorExport`] the anchor
/// spans travel alongside the prompt for a steering-aware server.
#[derive(Debug)]
pub struct RemoteBackend {
    client: ChatClient,
    seed: Option<u64>,
}

impl RemoteBackend {
    pub fn new(client: ChatClient, seed: Option<u64>) -> Self {
        Self { client, seed }
    }

    pub fn client(&self) -> &ChatClient {
        &self.client
    }
}

impl AgentBackend for RemoteBackend {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn generate(&mut self, step: &StepInput<'_>) -> Result<String, BackendError> {
        let steering = match step.request.backend {
            SteeringMode::AnchorExport => Some(step.request.to_anchor_export()),
            SteeringMode::PromptAppend => None,
        };
        let request = ChatRequest {
            messages: vec![ChatMessage::user(step.request.full_prompt.clone())],
            steering,
            seed: self.seed,
        };
        Ok(self.client.chat(&request)?)
    }

    fn decide(&mut self, task: &str, inputs: &[Message], instruction: &str) -> Result<String, BackendError> {
        let mut prompt = format!("Task: {task}\n");
        for m in inputs {
            prompt.push_str(&format!("\nAgent {}, role is {}, output is:\n{}\n", m.author, m.role_label, m.text));
        }
        let request = ChatRequest {
            messages: vec![ChatMessage::system(instruction), ChatMessage::user(prompt)],
            steering: None,
            seed: self.seed,
        };
        let reply = self.client.chat(&request)?;
        Ok(answer_line(&reply).to_string())
    }
}
