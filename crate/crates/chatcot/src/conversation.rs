//! Typed multi-turn conversation state.
//!
//! A conversation is an alternating sequence of agent and model messages,
//! each tagged with the protocol phase it belongs to. The first
//! `memory_len` messages are the knowledge-memory prefix and never change
//! after initialization.

use serde::{Deserialize, Serialize};

/// Who produced a message: the rule-based agent or the chat model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Agent,
    Model,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Agent => Role::Model,
            Role::Model => Role::Agent,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Role::Agent => "agent",
            Role::Model => "model",
        }
    }
}

/// Which step of the protocol a message belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ToolKnowledge,
    TaskKnowledge,
    FormatExemplar,
    ProblemStart,
    Reasoning,
    ToolSelection,
    ToolArgs,
    ToolResult,
    Feedback,
    Conclusion,
}

impl Phase {
    pub const fn as_str(self) -> &'static str {
        match self {
            Phase::ToolKnowledge => "tool_knowledge",
            Phase::TaskKnowledge => "task_knowledge",
            Phase::FormatExemplar => "format_exemplar",
            Phase::ProblemStart => "problem_start",
            Phase::Reasoning => "reasoning",
            Phase::ToolSelection => "tool_selection",
            Phase::ToolArgs => "tool_args",
            Phase::ToolResult => "tool_result",
            Phase::Feedback => "feedback",
            Phase::Conclusion => "conclusion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub phase: Phase,
    pub turn_index: usize,
}

impl ChatMessage {
    pub fn new(role: Role, phase: Phase, content: impl Into<String>, turn_index: usize) -> Self {
        ChatMessage {
            role,
            content: content.into(),
            phase,
            turn_index,
        }
    }
}

/// Which benchmark family a problem comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    MathStyle,
    HotpotStyle,
}

/// A titled candidate paragraph (multi-hop QA distractor setting).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub title: String,
    pub text: String,
}

/// One task instance: statement, optional reference solution and answer
/// key, plus category metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemRecord {
    pub id: String,
    pub statement: String,
    pub solution: Option<String>,
    pub answer: Option<String>,
    pub category: String,
    pub dataset: DatasetKind,
    /// Candidate paragraph collection; non-empty for `HotpotStyle`.
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConversationError {
    #[error("role order violation: expected {expected:?} at turn {turn}")]
    RoleOrderViolation { expected: Role, turn: usize },
    #[error("conversation already concluded")]
    ConversationConcluded,
    #[error("message content is empty")]
    EmptyContent,
    #[error("turn index {got} does not match position {expected}")]
    TurnIndexMismatch { got: usize, expected: usize },
    #[error("conversation has no reasoning content")]
    NoReasoningContent,
    #[error("invalid problem record: {0}")]
    InvalidProblem(String),
}

impl ProblemRecord {
    pub fn math(
        id: impl Into<String>,
        statement: impl Into<String>,
        solution: Option<String>,
        answer: Option<String>,
        category: impl Into<String>,
    ) -> Result<Self, ConversationError> {
        let statement = statement.into();
        if statement.is_empty() {
            return Err(ConversationError::InvalidProblem(
                "statement is empty".into(),
            ));
        }
        Ok(ProblemRecord {
            id: id.into(),
            statement,
            solution,
            answer,
            category: category.into(),
            dataset: DatasetKind::MathStyle,
            paragraphs: Vec::new(),
        })
    }

    pub fn hotpot(
        id: impl Into<String>,
        statement: impl Into<String>,
        answer: Option<String>,
        paragraphs: Vec<Paragraph>,
    ) -> Result<Self, ConversationError> {
        let statement = statement.into();
        if statement.is_empty() {
            return Err(ConversationError::InvalidProblem(
                "statement is empty".into(),
            ));
        }
        if paragraphs.is_empty() {
            return Err(ConversationError::InvalidProblem(
                "hotpot-style record needs a candidate paragraph collection".into(),
            ));
        }
        Ok(ProblemRecord {
            id: id.into(),
            statement,
            solution: None,
            answer,
            category: "distractor".into(),
            dataset: DatasetKind::HotpotStyle,
            paragraphs,
        })
    }
}

pub const DEFAULT_MAX_TURNS: usize = 12;

/// Ordered message history plus the protocol bookkeeping around it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConversationState {
    messages: Vec<ChatMessage>,
    memory_len: usize,
    pub max_turns: usize,
    pub problem: Option<ProblemRecord>,
    concluded: bool,
}

impl Default for ConversationState {
    fn default() -> Self {
        Self::new()
    }
}

impl ConversationState {
    pub fn new() -> Self {
        ConversationState {
            messages: Vec::new(),
            memory_len: 0,
            max_turns: DEFAULT_MAX_TURNS,
            problem: None,
            concluded: false,
        }
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn memory_len(&self) -> usize {
        self.memory_len
    }

    pub fn concluded(&self) -> bool {
        self.concluded
    }

    pub fn last(&self) -> Option<&ChatMessage> {
        self.messages.last()
    }

    /// The immutable knowledge-memory prefix.
    pub fn memory_prefix(&self) -> &[ChatMessage] {
        &self.messages[..self.memory_len]
    }

    /// Marks everything appended so far as the knowledge-memory prefix.
    pub fn seal_memory(&mut self) {
        self.memory_len = self.messages.len();
    }

    pub fn conclude(&mut self) {
        self.concluded = true;
    }

    fn expected_role(&self) -> Role {
        match self.messages.last() {
            None => Role::Agent,
            Some(m) => m.role.other(),
        }
    }

    /// Appends a message, enforcing alternation, turn indexing, non-empty
    /// content, and the concluded flag.
    pub fn append(&mut self, msg: ChatMessage) -> Result<(), ConversationError> {
        if self.concluded {
            return Err(ConversationError::ConversationConcluded);
        }
        if msg.content.is_empty() {
            return Err(ConversationError::EmptyContent);
        }
        let expected = self.expected_role();
        if msg.role != expected {
            return Err(ConversationError::RoleOrderViolation {
                expected,
                turn: self.messages.len(),
            });
        }
        if msg.turn_index != self.messages.len() {
            return Err(ConversationError::TurnIndexMismatch {
                got: msg.turn_index,
                expected: self.messages.len(),
            });
        }
        self.messages.push(msg);
        Ok(())
    }

    /// Convenience append that assigns the turn index.
    pub fn push(
        &mut self,
        role: Role,
        phase: Phase,
        content: impl Into<String>,
    ) -> Result<(), ConversationError> {
        let idx = self.messages.len();
        self.append(ChatMessage::new(role, phase, content, idx))
    }

    /// Flattens the dialogue into a reasoning paragraph: model reasoning
    /// and conclusion messages are kept, tool-result messages are kept with
    /// the `Results: ` marker and the trailing `Continue reasoning`
    /// directive stripped, and everything else is dropped. Segments join
    /// with single newlines and no speaker names.
    pub fn to_paragraph(&self) -> Result<String, ConversationError> {
        let mut segments = Vec::new();
        for msg in &self.messages[self.memory_len..] {
            match (msg.role, msg.phase) {
                (Role::Model, Phase::Reasoning) | (Role::Model, Phase::Conclusion) => {
                    segments.push(msg.content.clone());
                }
                (Role::Agent, Phase::ToolResult) => {
                    let mut text = msg.content.as_str();
                    text = text.strip_prefix("Results: ").unwrap_or(text);
                    text = text.strip_suffix("\nContinue reasoning").unwrap_or(text);
                    text = text
                        .strip_suffix(&format!("\n{}", crate::engine::FEEDBACK_PROMPT))
                        .unwrap_or(text);
                    segments.push(text.to_string());
                }
                _ => {}
            }
        }
        if segments.is_empty() {
            return Err(ConversationError::NoReasoningContent);
        }
        Ok(segments.join("\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(role: Role, phase: Phase, content: &str, idx: usize) -> ChatMessage {
        ChatMessage::new(role, phase, content, idx)
    }

    #[test]
    fn first_append_works() {
        let mut state = ConversationState::new();
        state
            .append(msg(Role::Agent, Phase::ToolKnowledge, "You can use tool…", 0))
            .unwrap();
        assert_eq!(state.len(), 1);
    }

    #[test]
    fn alternation_is_forced() {
        let mut state = ConversationState::new();
        state.push(Role::Agent, Phase::ToolKnowledge, "a").unwrap();
        let err = state
            .append(msg(Role::Agent, Phase::ToolKnowledge, "b", 1))
            .unwrap_err();
        assert!(matches!(err, ConversationError::RoleOrderViolation { .. }));
        // model first is also a violation
        let mut state = ConversationState::new();
        let err = state
            .append(msg(Role::Model, Phase::Reasoning, "x", 0))
            .unwrap_err();
        assert!(matches!(err, ConversationError::RoleOrderViolation { .. }));
    }

    #[test]
    fn concluded_rejects_appends() {
        let mut state = ConversationState::new();
        state.push(Role::Agent, Phase::ProblemStart, "q").unwrap();
        state.conclude();
        let err = state.push(Role::Model, Phase::Reasoning, "r").unwrap_err();
        assert_eq!(err, ConversationError::ConversationConcluded);
    }

    #[test]
    fn empty_content_rejected() {
        let mut state = ConversationState::new();
        let err = state.push(Role::Agent, Phase::ProblemStart, "").unwrap_err();
        assert_eq!(err, ConversationError::EmptyContent);
    }

    #[test]
    fn turn_index_must_match_position() {
        let mut state = ConversationState::new();
        let err = state
            .append(msg(Role::Agent, Phase::ProblemStart, "q", 3))
            .unwrap_err();
        assert!(matches!(err, ConversationError::TurnIndexMismatch { .. }));
    }

    #[test]
    fn paragraph_keeps_reasoning_and_tool_results() {
        let mut state = ConversationState::new();
        state.push(Role::Agent, Phase::ProblemStart, "Problem…").unwrap();
        state
            .push(Role::Model, Phase::Reasoning, "First, factor 12.")
            .unwrap();
        state
            .push(
                Role::Agent,
                Phase::ToolSelection,
                "To solve this sub-problem, which tool can we use?",
            )
            .unwrap();
        state.push(Role::Model, Phase::ToolSelection, "Calculator").unwrap();
        state
            .push(Role::Agent, Phase::ToolArgs, "Give me the equation to calculate")
            .unwrap();
        state.push(Role::Model, Phase::ToolArgs, "12").unwrap();
        state
            .push(
                Role::Agent,
                Phase::ToolResult,
                "Results: 12 = 2^2*3.\nContinue reasoning",
            )
            .unwrap();
        state
            .push(Role::Model, Phase::Conclusion, "Answer is \\boxed{3}")
            .unwrap();
        assert_eq!(
            state.to_paragraph().unwrap(),
            "First, factor 12.\n12 = 2^2*3.\nAnswer is \\boxed{3}"
        );
    }

    #[test]
    fn paragraph_requires_reasoning_content() {
        let mut state = ConversationState::new();
        state.push(Role::Agent, Phase::ToolKnowledge, "tools…").unwrap();
        state.push(Role::Model, Phase::ToolKnowledge, "ok").unwrap();
        state.seal_memory();
        assert_eq!(
            state.to_paragraph().unwrap_err(),
            ConversationError::NoReasoningContent
        );
    }

    #[test]
    fn paragraph_of_single_reasoning_message_is_identity() {
        let mut state = ConversationState::new();
        state.push(Role::Agent, Phase::ProblemStart, "q").unwrap();
        state.push(Role::Model, Phase::Reasoning, "x = 2.").unwrap();
        assert_eq!(state.to_paragraph().unwrap(), "x = 2.");
    }

    #[test]
    fn memory_prefix_is_a_stable_snapshot() {
        let mut state = ConversationState::new();
        state.push(Role::Agent, Phase::ToolKnowledge, "tools").unwrap();
        state.push(Role::Model, Phase::ToolKnowledge, "yes").unwrap();
        state.push(Role::Agent, Phase::TaskKnowledge, "examples").unwrap();
        state.push(Role::Model, Phase::TaskKnowledge, "yes").unwrap();
        state.seal_memory();
        let snapshot: Vec<ChatMessage> = state.memory_prefix().to_vec();

        let mut next_role = Role::Agent;
        for i in 0..50 {
            state
                .push(next_role, Phase::Reasoning, format!("step {i}"))
                .unwrap();
            next_role = next_role.other();
        }
        assert_eq!(state.memory_prefix(), snapshot.as_slice());
        assert_eq!(state.memory_len(), 4);
    }

    #[test]
    fn empty_memory_prefix_is_empty() {
        let state = ConversationState::new();
        assert!(state.memory_prefix().is_empty());
    }
}
