//! Persisted run traces: one conversation per JSONL line, plus per-run
//! metadata (strategy, tool calls, forced conclusion, token counts).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::conversation::{ChatMessage, ConversationState, Phase, Role};
use crate::engine::{RunOutcome, ToolCall};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMessage {
    pub role: Role,
    pub phase: Phase,
    pub content: String,
}

impl From<&ChatMessage> for TraceMessage {
    fn from(m: &ChatMessage) -> Self {
        TraceMessage {
            role: m.role,
            phase: m.phase,
            content: m.content.clone(),
        }
    }
}

/// One persisted run. `answer` is empty when no answer was extracted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub problem_id: String,
    pub messages: Vec<TraceMessage>,
    pub answer: String,
    pub token_count: u64,
    pub strategy: String,
    pub tool_calls: Vec<ToolCall>,
    pub forced_conclusion: bool,
    pub generated_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl RunTrace {
    pub fn from_outcome(outcome: &RunOutcome, strategy: impl Into<String>) -> Self {
        let problem = outcome.trace.problem.as_ref();
        RunTrace {
            problem_id: problem.map(|p| p.id.clone()).unwrap_or_default(),
            messages: outcome.trace.messages().iter().map(TraceMessage::from).collect(),
            answer: outcome.answer.clone().unwrap_or_default(),
            token_count: outcome.generated_tokens,
            strategy: strategy.into(),
            tool_calls: outcome.tool_calls.clone(),
            forced_conclusion: outcome.forced_conclusion,
            generated_tokens: outcome.generated_tokens,
            gold: problem.and_then(|p| p.answer.clone()),
            category: problem.map(|p| p.category.clone()),
        }
    }

    /// Rebuilds a conversation value from the persisted messages (turn
    /// indices are the array positions).
    pub fn to_conversation(&self) -> Result<ConversationState, crate::conversation::ConversationError> {
        let mut state = ConversationState::new();
        for m in &self.messages {
            state.push(m.role, m.phase, m.content.clone())?;
        }
        Ok(state)
    }
}

pub fn write_jsonl<W: Write>(out: &mut W, traces: &[RunTrace]) -> std::io::Result<()> {
    for t in traces {
        let line = serde_json::to_string(t)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<RunTrace>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}
