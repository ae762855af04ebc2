//! The iterative tool-augmented reasoning loop: start the problem, let the
//! model reason, ask which tool to use, collect arguments, execute, feed
//! results back, and conclude — forcibly at the turn budget if needed.

use std::sync::Arc;

use mathkit::ToolResult;

use crate::conversation::{ConversationState, Phase, ProblemRecord, Role};
use crate::gateway::{ChatBackend, GatewayError, ModelRequest};
use crate::memory::{MemoryConfig, ToolSpec};
use crate::retrieval::{RetrievalError, RetrievalSession, Retriever};

pub const START_PROMPT_PREFIX: &str =
    "You should solve the problem step by step and you should follow the react in the history ";
pub const SELECTION_PROMPT: &str = "To solve this sub-problem, which tool can we use?";
pub const NO_TOOL_REPLY: &str = "Do not use tool";
pub const CONTINUE_PROMPT: &str = "Continue reasoning";
pub const FORCE_CONCLUDE_PROMPT: &str = "Base on the context, what is the answer?";
pub const FEEDBACK_PROMPT: &str = "Are these results useful? Answer Yes or No.";
pub const EXHAUSTED_PROMPT: &str =
    "No more results available. Continue reasoning with what you have.";
pub const RETRY_SUFFIX: &str = " Please give a new input or choose another tool.";

/// What executes behind a registered tool name.
pub enum ToolBackend {
    Calculator,
    EquationSolver,
    /// Dense retrieval over a document index; the only tool with feedback
    /// rounds.
    Retriever(Arc<Retriever>),
    Custom(Box<dyn Fn(&str) -> ToolResult + Send + Sync>),
}

pub struct RegisteredTool {
    pub spec: ToolSpec,
    pub backend: ToolBackend,
}

/// Ordered tool registry; registry order breaks selection-parse ties.
#[derive(Default)]
pub struct ToolRegistry {
    tools: Vec<RegisteredTool>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        ToolRegistry::default()
    }

    pub fn register(&mut self, spec: ToolSpec, backend: ToolBackend) -> Result<(), EngineError> {
        if self.tools.iter().any(|t| t.spec.name == spec.name) {
            return Err(EngineError::Config(format!(
                "tool '{}' registered twice",
                spec.name
            )));
        }
        self.tools.push(RegisteredTool { spec, backend });
        Ok(())
    }

    /// Calculator plus equation solver (the MATH-style tool set).
    pub fn math_tools() -> Self {
        let mut reg = ToolRegistry::new();
        reg.register(ToolSpec::calculator(), ToolBackend::Calculator)
            .expect("fresh registry");
        reg.register(ToolSpec::equation_solver(), ToolBackend::EquationSolver)
            .expect("fresh registry");
        reg
    }

    /// Retriever only (the multi-hop QA tool set).
    pub fn retrieval_tools(retriever: Arc<Retriever>) -> Self {
        let mut reg = ToolRegistry::new();
        reg.register(ToolSpec::retriever(), ToolBackend::Retriever(retriever))
            .expect("fresh registry");
        reg
    }

    pub fn specs(&self) -> Vec<ToolSpec> {
        self.tools.iter().map(|t| t.spec.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&RegisteredTool> {
        self.tools.iter().find(|t| t.spec.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    fn first_contained(&self, reply: &str) -> Option<&RegisteredTool> {
        let lower = reply.to_lowercase();
        self.tools
            .iter()
            .find(|t| lower.contains(&t.spec.name.to_lowercase()))
    }
}

/// Engine knobs. `max_turns` bounds the number of tool-augmented reasoning
/// iterations before the forced conclusion.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub max_turns: usize,
    pub max_feedback: usize,
    pub memory: MemoryConfig,
    pub temperature: f64,
    pub max_new_tokens: usize,
    /// Number of documents per retrieval batch.
    pub retrieval_k: usize,
    /// When true the forced-conclusion exchange consumes a turn from the
    /// budget instead of riding on top of it.
    pub conclude_counts_as_turn: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_turns: 12,
            max_feedback: crate::retrieval::MAX_FEEDBACK_ROUNDS,
            memory: MemoryConfig::default(),
            temperature: 0.0,
            max_new_tokens: 512,
            retrieval_k: 3,
            conclude_counts_as_turn: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_turns < 2 {
            return Err(EngineError::Config("max_turns must be at least 2".into()));
        }
        if self.max_feedback > crate::retrieval::MAX_FEEDBACK_ROUNDS {
            return Err(EngineError::Config(format!(
                "max_feedback {} exceeds the bound of {}",
                self.max_feedback,
                crate::retrieval::MAX_FEEDBACK_ROUNDS
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Conversation(#[from] crate::conversation::ConversationError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Outcome of one tool-selection step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepKind {
    Reasoned,
    ToolUsed(String),
    NoTool,
    Concluded,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub kind: StepKind,
    pub tool_result: Option<ToolResult>,
}

/// One tool invocation as recorded in trace metadata.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub ok: bool,
}

/// Everything a finished run produces.
#[derive(Debug)]
pub struct RunOutcome {
    /// Extracted answer; `None` when even the forced conclusion had none.
    pub answer: Option<String>,
    pub trace: ConversationState,
    pub tool_calls: Vec<ToolCall>,
    pub forced_conclusion: bool,
    pub generated_tokens: u64,
}

/// Extracts the content of the last balanced `\boxed{...}` span.
pub fn extract_boxed(text: &str) -> Option<String> {
    const MARKER: &str = "\\boxed{";
    let starts: Vec<usize> = text.match_indices(MARKER).map(|(i, _)| i).collect();
    for &start in starts.iter().rev() {
        let inner_start = start + MARKER.len();
        let mut depth = 1usize;
        for (off, c) in text[inner_start..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(text[inner_start..inner_start + off].to_string());
                    }
                }
                _ => {}
            }
        }
    }
    None
}

/// Boxed answer first; otherwise the text after the last "answer is",
/// trimmed of terminal punctuation.
pub fn extract_answer(text: &str) -> Option<String> {
    if let Some(boxed) = extract_boxed(text) {
        return Some(boxed);
    }
    let lower = text.to_lowercase();
    let at = lower.rfind("answer is")?;
    let tail = text[at + "answer is".len()..]
        .trim_start_matches([':', ' ', '\t', '\n'])
        .trim_end()
        .trim_end_matches(['.', '!', '?', ',', ';', ':'])
        .trim();
    let tail = tail.trim_matches('$').trim();
    if tail.is_empty() {
        None
    } else {
        Some(tail.to_string())
    }
}

fn contains_word(text: &str, word: &str) -> bool {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .any(|t| t == word)
}

/// Appends the problem-start prompt to a knowledge-memory state.
pub fn start(
    problem: &ProblemRecord,
    memory: &ConversationState,
) -> Result<ConversationState, EngineError> {
    let mut state = memory.clone();
    state.problem = Some(problem.clone());
    state.push(
        Role::Agent,
        Phase::ProblemStart,
        format!("{START_PROMPT_PREFIX}{}", problem.statement),
    )?;
    Ok(state)
}

/// Drives one conversation to an answer.
pub struct Engine<'a> {
    pub config: &'a EngineConfig,
    pub registry: &'a ToolRegistry,
    pub backend: &'a dyn ChatBackend,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: &'a EngineConfig,
        registry: &'a ToolRegistry,
        backend: &'a dyn ChatBackend,
    ) -> Self {
        Engine {
            config,
            registry,
            backend,
        }
    }

    fn complete(
        &self,
        state: &ConversationState,
        tokens: &mut u64,
    ) -> Result<String, EngineError> {
        let req = ModelRequest::single(
            state.messages().to_vec(),
            self.config.temperature,
            self.config.max_new_tokens,
        );
        let resp = self.backend.complete(&req)?;
        *tokens += resp.generated_tokens;
        Ok(resp
            .completions
            .into_iter()
            .next()
            .unwrap_or_default())
    }

    /// Appends a model reply, tagging it `Conclusion` if it carries a boxed
    /// answer. Returns true when the conversation concluded.
    fn push_model_reply(
        &self,
        state: &mut ConversationState,
        default_phase: Phase,
        content: String,
    ) -> Result<bool, EngineError> {
        let concluded = extract_boxed(&content).is_some();
        let phase = if concluded { Phase::Conclusion } else { default_phase };
        state.push(Role::Model, phase, content)?;
        if concluded {
            state.conclude();
        }
        Ok(concluded)
    }

    /// Asks the selection question and parses the model's reply: a
    /// registered tool name wins (first registry-order match), an explicit
    /// "do not use tool" declines, anything else declines with a note.
    pub fn tool_selection(
        &self,
        state: &mut ConversationState,
        tokens: &mut u64,
    ) -> Result<StepOutcome, EngineError> {
        match state.last() {
            Some(m) if m.role == Role::Model && m.phase == Phase::Reasoning => {}
            _ => {
                return Err(EngineError::Protocol(
                    "tool selection requires a model reasoning message".into(),
                ))
            }
        }
        state.push(Role::Agent, Phase::ToolSelection, SELECTION_PROMPT)?;
        let reply = self.complete(state, tokens)?;
        if self.push_model_reply(state, Phase::ToolSelection, reply.clone())? {
            return Ok(StepOutcome {
                kind: StepKind::Concluded,
                tool_result: None,
            });
        }
        if let Some(tool) = self.registry.first_contained(&reply) {
            return Ok(StepOutcome {
                kind: StepKind::ToolUsed(tool.spec.name.clone()),
                tool_result: None,
            });
        }
        if !reply.to_lowercase().contains("do not use tool") {
            tracing::debug!(reply = %reply, "unparsed tool selection; continuing without a tool");
        }
        Ok(StepOutcome {
            kind: StepKind::NoTool,
            tool_result: None,
        })
    }

    fn execute_tool(
        &self,
        tool: &RegisteredTool,
        args: &str,
        session: &mut Option<RetrievalSession>,
    ) -> ToolResult {
        match &tool.backend {
            ToolBackend::Calculator => mathkit::calculate(args),
            ToolBackend::EquationSolver => mathkit::solve_command(args),
            ToolBackend::Custom(f) => f(args),
            ToolBackend::Retriever(retriever) => {
                let query = args.trim();
                match retriever.top_k(query, self.config.retrieval_k) {
                    Ok(hits) if !hits.is_empty() => {
                        let mut s = RetrievalSession::new(query);
                        s.record_shown(hits.iter().map(|(id, _)| id.as_str()));
                        let content = format_hits(&retriever.index, &hits);
                        *session = Some(s);
                        ToolResult::ok(content)
                    }
                    Ok(_) => ToolResult::err_unclassified("no documents matched the query"),
                    Err(e) => ToolResult::err_unclassified(e.to_string()),
                }
            }
        }
    }

    /// Asks for the tool's arguments, executes it, and appends the result
    /// message. Tool failures are conversation content, not engine errors.
    pub fn formulate_and_execute(
        &self,
        state: &mut ConversationState,
        tool_name: &str,
        session: &mut Option<RetrievalSession>,
        tokens: &mut u64,
    ) -> Result<Option<ToolResult>, EngineError> {
        let tool = self
            .registry
            .get(tool_name)
            .ok_or_else(|| EngineError::UnknownTool(tool_name.to_string()))?;
        state.push(Role::Agent, Phase::ToolArgs, tool.spec.arg_prompt.clone())?;
        let args = self.complete(state, tokens)?;
        if self.push_model_reply(state, Phase::ToolArgs, args.clone())? {
            return Ok(None);
        }
        let result = self.execute_tool(tool, &args, session);
        // a retrieval result opens the feedback loop, so the result message
        // carries the usefulness question instead of the continue directive
        let feedback_follows = result.ok && session.is_some() && self.config.max_feedback > 0;
        let message = if feedback_follows {
            format!("{}\n{FEEDBACK_PROMPT}", result.wire_line())
        } else if result.ok {
            format!("{}\n{CONTINUE_PROMPT}", result.wire_line())
        } else {
            format!("{}{RETRY_SUFFIX}\n{CONTINUE_PROMPT}", result.wire_line())
        };
        state.push(Role::Agent, Phase::ToolResult, message)?;
        Ok(Some(result))
    }

    /// Bounded feedback loop entered when a retrieval result message ended
    /// with the usefulness question: the model judges the batch; a "no"
    /// fetches the next unshown one.
    pub fn feedback_rounds(
        &self,
        state: &mut ConversationState,
        retriever: &Retriever,
        session: &mut RetrievalSession,
        tool_calls: &mut Vec<ToolCall>,
        tool_name: &str,
        tokens: &mut u64,
    ) -> Result<(), EngineError> {
        loop {
            let reply = self.complete(state, tokens)?;
            if self.push_model_reply(state, Phase::Feedback, reply.clone())? {
                return Ok(());
            }
            if !contains_word(&reply, "no") {
                state.push(Role::Agent, Phase::Reasoning, CONTINUE_PROMPT)?;
                return Ok(());
            }
            if session.rounds_used() >= self.config.max_feedback {
                state.push(Role::Agent, Phase::Feedback, EXHAUSTED_PROMPT)?;
                return Ok(());
            }
            match retriever.next_batch(session, self.config.retrieval_k) {
                Ok(hits) => {
                    let content = format_hits(&retriever.index, &hits);
                    tool_calls.push(ToolCall {
                        tool: tool_name.to_string(),
                        ok: true,
                    });
                    state.push(
                        Role::Agent,
                        Phase::ToolResult,
                        format!("Results: {content}.\n{FEEDBACK_PROMPT}"),
                    )?;
                }
                Err(RetrievalError::FeedbackExhausted) | Err(RetrievalError::IndexExhausted) => {
                    state.push(Role::Agent, Phase::Feedback, EXHAUSTED_PROMPT)?;
                    return Ok(());
                }
                Err(other) => {
                    tool_calls.push(ToolCall {
                        tool: tool_name.to_string(),
                        ok: false,
                    });
                    state.push(
                        Role::Agent,
                        Phase::ToolResult,
                        format!("Error: {other}.{RETRY_SUFFIX}\n{CONTINUE_PROMPT}"),
                    )?;
                    return Ok(());
                }
            }
        }
    }

    /// Runs the full loop on one problem over the given knowledge memory.
    pub fn run(
        &self,
        problem: &ProblemRecord,
        memory: &ConversationState,
    ) -> Result<RunOutcome, EngineError> {
        self.config.validate()?;
        if let Some(tk) = memory
            .memory_prefix()
            .iter()
            .find(|m| m.phase == Phase::ToolKnowledge && m.role == Role::Agent)
        {
            for spec in self.registry.specs() {
                if !tk.content.contains(&spec.name) {
                    return Err(EngineError::Config(format!(
                        "tool '{}' is registered but missing from the tool-knowledge memory",
                        spec.name
                    )));
                }
            }
        }

        let mut state = start(problem, memory)?;
        state.max_turns = self.config.max_turns;
        let mut tokens = 0u64;
        let mut tool_calls: Vec<ToolCall> = Vec::new();
        let mut forced = false;

        let budget = if self.config.conclude_counts_as_turn {
            self.config.max_turns.saturating_sub(1)
        } else {
            self.config.max_turns
        };

        let mut iterations = 0usize;
        while !state.concluded() {
            // reasoning step
            let reply = self.complete(&state, &mut tokens)?;
            if self.push_model_reply(&mut state, Phase::Reasoning, reply)? {
                break;
            }
            iterations += 1;
            if iterations >= budget {
                // budget spent with the model mid-reasoning; force below
                break;
            }
            // tool selection and execution sub-dialogue
            let outcome = self.tool_selection(&mut state, &mut tokens)?;
            match outcome.kind {
                StepKind::Concluded => break,
                StepKind::NoTool => {
                    state.push(Role::Agent, Phase::Reasoning, CONTINUE_PROMPT)?;
                }
                StepKind::ToolUsed(name) => {
                    let mut session: Option<RetrievalSession> = None;
                    let result =
                        self.formulate_and_execute(&mut state, &name, &mut session, &mut tokens)?;
                    let Some(result) = result else {
                        break; // concluded mid-argument
                    };
                    tool_calls.push(ToolCall {
                        tool: name.clone(),
                        ok: result.ok,
                    });
                    if result.ok {
                        if let (Some(RegisteredTool {
                            backend: ToolBackend::Retriever(retriever),
                            ..
                        }), Some(mut s)) = (self.registry.get(&name), session)
                        {
                            if self.config.max_feedback > 0 {
                                self.feedback_rounds(
                                    &mut state,
                                    retriever,
                                    &mut s,
                                    &mut tool_calls,
                                    &name,
                                    &mut tokens,
                                )?;
                            }
                        }
                    }
                }
                StepKind::Reasoned => {}
            }
        }

        if !state.concluded() {
            forced = true;
            state.push(Role::Agent, Phase::Conclusion, FORCE_CONCLUDE_PROMPT)?;
            let reply = self.complete(&state, &mut tokens)?;
            state.push(Role::Model, Phase::Conclusion, reply)?;
            state.conclude();
        }

        let answer = state
            .messages()
            .iter()
            .rev()
            .filter(|m| m.role == Role::Model)
            .take(1)
            .find_map(|m| extract_answer(&m.content))
            .or_else(|| {
                // a boxed answer earlier in the run still counts
                state.messages()[memory.len()..]
                    .iter()
                    .rev()
                    .filter(|m| m.role == Role::Model)
                    .find_map(|m| extract_boxed(&m.content))
            });

        Ok(RunOutcome {
            answer,
            trace: state,
            tool_calls,
            forced_conclusion: forced,
            generated_tokens: tokens,
        })
    }
}

fn format_hits(index: &crate::retrieval::DocIndex, hits: &[(String, f64)]) -> String {
    hits.iter()
        .map(|(id, _)| match index.get(id) {
            Some(entry) => format!("{}: {}", entry.id, entry.text),
            None => id.clone(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
