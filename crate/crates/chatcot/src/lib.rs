//! Tool-augmented chain-of-thought reasoning as a multi-turn conversation
//! between a rule-based agent and a chat model.
//!
//! The crate is organized around the protocol's moving parts:
//!
//! - [`conversation`] — typed message history with role alternation and
//!   phase tags, plus the dialogue-to-paragraph flattening used by refine.
//! - [`memory`] — the conversational knowledge memory (tools, task, and
//!   multi-turn reasoning-format exemplars) rendered byte-exactly.
//! - [`retrieval`] — dense exemplar/paragraph retrieval with bounded
//!   feedback sessions.
//! - [`gateway`] — chat-model access: a live chat-completions client and a
//!   deterministic scripted backend for tests and golden traces.
//! - [`engine`] — the iterative tool-augmented reasoning loop.
//! - [`ensemble`] — self-consistency voting and the refine pass.
//! - [`trace`] — JSONL persistence of run traces.

pub mod conversation;
pub mod engine;
pub mod ensemble;
pub mod gateway;
pub mod memory;
pub mod retrieval;
pub mod trace;

pub use conversation::{
    ChatMessage, ConversationError, ConversationState, DatasetKind, Paragraph, Phase,
    ProblemRecord, Role,
};
pub use engine::{
    extract_answer, extract_boxed, start, Engine, EngineConfig, EngineError, RunOutcome, StepKind,
    StepOutcome, ToolBackend, ToolCall, ToolRegistry,
};
pub use ensemble::{refine_pass, run_sc, self_consistency, EnsembleError, ScOutcome, VoteTally};
pub use gateway::{
    whitespace_tokens, ChatBackend, GatewayError, LiveBackend, LiveConfig, ModelRequest,
    ModelResponse, ScriptRule, ScriptedBackend, ScriptedPolicy,
};
pub use memory::{
    build_format_exemplars, build_task_knowledge, build_tool_knowledge, init_memory,
    load_annotated_dialogues, AnnotatedDialogue, DialogueTurn, Exemplar, MemoryConfig, MemoryError,
    ToolSpec,
};
pub use retrieval::{
    cosine, DocEntry, DocIndex, Embedder, EmbeddingVector, HashEmbedder, RemoteEmbedder,
    RetrievalError, RetrievalSession, Retriever,
};
pub use trace::{read_jsonl, write_jsonl, RunTrace, TraceMessage};
