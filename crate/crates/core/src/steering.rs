//! Turns a [`SelectedContext`] into model input: either a prompt with byte
//! spans for an external attention-steering server, or a prompt with the
//! anchors appended as plain text.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::select::SelectedContext;
use crate::transcript::{ContextPool, MessageId};

pub const DEFAULT_AMPLIFICATION: f64 = 1.0;

const TASK_PREFIX: &str = "Task: ";
const KEY_CONTEXT_HEADER: &str = "\n\nKey context:\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMode {
    #[default]
    AnchorExport,
    PromptAppend,
}

/// A rendered prompt plus where each pooled message body landed in it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub prompt: String,
    /// Byte span of the query text inside `prompt`.
    pub task_span: [usize; 2],
    offsets: HashMap<MessageId, usize>,
}

impl RenderedPrompt {
    pub fn message_offset(&self, id: MessageId) -> Option<usize> {
        self.offsets.get(&id).copied()
    }
}

/// Canonical layout: profile, task block, then each pooled message as
/// `Agent <id>, role is <label>, output is:` followed by its full text.
pub fn render_prompt(query: &str, pool: &ContextPool, profile: &str) -> RenderedPrompt {
    let mut prompt = String::with_capacity(
        profile.len() + query.len() + pool.messages.iter().map(|m| m.text.len() + 48).sum::<usize>(),
    );
    prompt.push_str(profile);
    prompt.push_str("\n\n");
    prompt.push_str(TASK_PREFIX);
    let task_start = prompt.len();
    prompt.push_str(query);
    let task_span = [task_start, prompt.len()];
    prompt.push('\n');

    let mut offsets = HashMap::with_capacity(pool.messages.len());
    for m in &pool.messages {
        prompt.push_str(&format!("\nAgent {}, role is {}, output is:\n", m.author, m.role_label));
        offsets.insert(m.id, prompt.len());
        prompt.push_str(&m.text);
        prompt.push('\n');
    }
    RenderedPrompt {
        prompt,
        task_span,
        offsets,
    }
}

/// What an inference backend receives for one agent step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringRequest {
    pub full_prompt: String,
    pub anchor_spans: Vec<[usize; 2]>,
    pub backend: SteeringMode,
    pub amplification: f64,
}

/// Wire format consumed by an attention-steering server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorExport {
    pub prompt: String,
    pub anchors: Vec<[usize; 2]>,
    pub amplification: f64,
}

impl SteeringRequest {
    pub fn to_anchor_export(&self) -> AnchorExport {
        AnchorExport {
            prompt: self.full_prompt.clone(),
            anchors: self.anchor_spans.clone(),
            amplification: self.amplification,
        }
    }

    pub fn decode_spans(&self) -> Vec<&str> {
        self.anchor_spans
            .iter()
            .map(|&[s, e]| &self.full_prompt[s..e])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SteeringError {
    #[error("anchor references message {0}, which is not in the rendered prompt")]
    MissingMessage(MessageId),
    #[error("anchor span {start}..{end} falls outside the rendered prompt")]
    SpanOutOfRange { start: usize, end: usize },
    #[error("amplification must be positive and finite, got {0}")]
    InvalidAmplification(f64),
}

/// Relocates every anchor into prompt coordinates, adds the task span and
/// merges overlapping or touching spans.
pub fn make_anchor_spans(
    selected: &SelectedContext,
    rendered: &RenderedPrompt,
    amplification: f64,
) -> Result<SteeringRequest, SteeringError> {
    if !(amplification > 0.0 && amplification.is_finite()) {
        return Err(SteeringError::InvalidAmplification(amplification));
    }
    let mut spans = vec![rendered.task_span];
    for anchor in &selected.anchors {
        let id = anchor.sentence.message_id;
        let base = rendered
            .message_offset(id)
            .ok_or(SteeringError::MissingMessage(id))?;
        let (start, end) = (base + anchor.sentence.start(), base + anchor.sentence.end());
        if end > rendered.prompt.len() || !rendered.prompt.is_char_boundary(start) || !rendered.prompt.is_char_boundary(end) {
            return Err(SteeringError::SpanOutOfRange { start, end });
        }
        spans.push([start, end]);
    }
    Ok(SteeringRequest {
        full_prompt: rendered.prompt.clone(),
        anchor_spans: merge_spans(spans),
        backend: SteeringMode::AnchorExport,
        amplification,
    })
}

fn merge_spans(mut spans: Vec<[usize; 2]>) -> Vec<[usize; 2]> {
    spans.sort_unstable();
    let mut merged: Vec<[usize; 2]> = Vec::with_capacity(spans.len());
    for span in spans {
        match merged.last_mut() {
            Some(last) if span[0] <= last[1] => last[1] = last[1].max(span[1]),
            _ => merged.push(span),
        }
    }
    merged
}

/// Appends a `Key context:` block listing anchor texts in order.
pub fn apply_prompt_append(selected: &SelectedContext, full_prompt: &str) -> String {
    let mut out = String::from(full_prompt);
    out.push_str(KEY_CONTEXT_HEADER);
    if selected.anchors.is_empty() {
        out.push_str("(none)\n");
    }
    for anchor in &selected.anchors {
        out.push_str("- ");
        out.push_str(&anchor.sentence.text);
        out.push('\n');
    }
    out
}

/// Builds the backend request for either steering mode.
pub fn build_request(
    mode: SteeringMode,
    selected: &SelectedContext,
    rendered: &RenderedPrompt,
    amplification: f64,
) -> Result<SteeringRequest, SteeringError> {
    match mode {
        SteeringMode::AnchorExport => make_anchor_spans(selected, rendered, amplification),
        SteeringMode::PromptAppend => Ok(SteeringRequest {
            full_prompt: apply_prompt_append(selected, &rendered.prompt),
            anchor_spans: Vec::new(),
            backend: SteeringMode::PromptAppend,
            amplification,
        }),
    }
}
