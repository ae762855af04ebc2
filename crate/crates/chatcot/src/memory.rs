//! Conversational knowledge memory: the fixed early turns that teach the
//! model about tools, the task, and the multi-turn reasoning format.
//!
//! The agent utterances here are templates reproduced byte-exactly,
//! including the "thoery" spelling; `MemoryConfig::fix_typos` corrects it
//! for live runs.

use serde::{Deserialize, Serialize};

use crate::conversation::{ChatMessage, ConversationState, Phase, Role};

pub const TOOL_KNOWLEDGE_PREFIX: &str =
    "You can use tool to help you solve the problem and I give you the instruction of tools usage. ";
pub const TOOL_KNOWLEDGE_SUFFIX: &str = "Do you understand?";
pub const TOOL_KNOWLEDGE_REPLY: &str =
    "Yes, I understand. I will use tool to help me solve the problem.";

pub const TASK_KNOWLEDGE_PREFIX: &str = "I give you some example. ";
pub const TASK_KNOWLEDGE_SUFFIX: &str =
    "You can use the knowledge and thoery in these problem. Do you understand?";
pub const TASK_KNOWLEDGE_SUFFIX_CORRECTED: &str =
    "You can use the knowledge and theory in these problem. Do you understand?";
pub const TASK_KNOWLEDGE_REPLY: &str =
    "Yes, I understand. I will solve the problem step by step and use tool to help me.";

pub const FORMAT_PROBLEM_SUFFIX: &str =
    " Let's think step by step and use knowledge in similar problem to solve this problem.";

/// A registered tool as seen by the prompt templates: its name, what it
/// can do, and the agent utterance that requests its arguments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub functionality: String,
    pub arg_prompt: String,
}

impl ToolSpec {
    pub fn new(
        name: impl Into<String>,
        functionality: impl Into<String>,
        arg_prompt: impl Into<String>,
    ) -> Self {
        ToolSpec {
            name: name.into(),
            functionality: functionality.into(),
            arg_prompt: arg_prompt.into(),
        }
    }

    pub fn calculator() -> Self {
        ToolSpec::new(
            "Calculator",
            "compute the value of a mathematical expression or simplify it",
            "Give me the equation to calculate",
        )
    }

    pub fn equation_solver() -> Self {
        ToolSpec::new(
            "Equation Solver",
            "calculate the value of unknown variables in a system of equations",
            "Give me the system of equations and the unknown variables, in the format: solve {eq1; eq2; ...} for {x, y, ...}",
        )
    }

    pub fn retriever() -> Self {
        ToolSpec::new(
            "Retriever",
            "retrieve the most relevant paragraphs from the candidates",
            "Give me the query to retrieve",
        )
    }
}

/// A flat (problem, solution, answer) exemplar used for task knowledge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub statement: String,
    pub solution: String,
    pub answer: String,
}

/// One turn of an annotated multi-round dialogue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub role: Role,
    pub content: String,
}

/// A hand-annotated multi-round dialogue exemplar. Turns start with the
/// agent's problem utterance and alternate; the final turn is a model turn
/// carrying a boxed answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDialogue {
    pub statement: String,
    pub turns: Vec<DialogueTurn>,
}

/// Shot configuration for the knowledge memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryConfig {
    /// Retrieval exemplar count.
    pub n_r: usize,
    /// Annotated dialogue count (at most 5).
    pub n_a: usize,
    /// Correct the template's "thoery" spelling for live runs.
    #[serde(default)]
    pub fix_typos: bool,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        // 2 retrieval exemplars and 3 annotated exemplars
        MemoryConfig {
            n_r: 2,
            n_a: 3,
            fix_typos: false,
        }
    }
}

pub const MAX_ANNOTATED_DIALOGUES: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MemoryError {
    #[error("tool list is empty")]
    EmptyToolList,
    #[error("exemplar list is empty")]
    EmptyExemplarList,
    #[error("malformed dialogue: {0}")]
    MalformedDialogue(String),
    #[error("expected {expected} retrieval exemplars, got {got}")]
    ExemplarCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} annotated dialogues, got {got}")]
    DialogueCountMismatch { expected: usize, got: usize },
    #[error("n_a = {0} exceeds the {MAX_ANNOTATED_DIALOGUES}-dialogue bound")]
    TooManyDialogues(usize),
    #[error(transparent)]
    Conversation(#[from] crate::conversation::ConversationError),
}

/// Renders the tool-knowledge pair: the agent's description of every tool
/// and the pinned model acknowledgement.
pub fn build_tool_knowledge(tools: &[ToolSpec]) -> Result<(ChatMessage, ChatMessage), MemoryError> {
    if tools.is_empty() {
        return Err(MemoryError::EmptyToolList);
    }
    let mut text = String::from(TOOL_KNOWLEDGE_PREFIX);
    for tool in tools {
        text.push_str(&format!("{} can help you {} ", tool.name, tool.functionality));
    }
    text.push_str(TOOL_KNOWLEDGE_SUFFIX);
    Ok((
        ChatMessage::new(Role::Agent, Phase::ToolKnowledge, text, 0),
        ChatMessage::new(Role::Model, Phase::ToolKnowledge, TOOL_KNOWLEDGE_REPLY, 1),
    ))
}

/// Renders the retrieval-augmented task-knowledge pair from exemplars.
pub fn build_task_knowledge(
    exemplars: &[Exemplar],
    fix_typos: bool,
) -> Result<(ChatMessage, ChatMessage), MemoryError> {
    if exemplars.is_empty() {
        return Err(MemoryError::EmptyExemplarList);
    }
    let mut text = String::from(TASK_KNOWLEDGE_PREFIX);
    for ex in exemplars {
        text.push_str(&format!("Problem: {} Solution: {} ", ex.statement, ex.solution));
    }
    text.push_str(if fix_typos {
        TASK_KNOWLEDGE_SUFFIX_CORRECTED
    } else {
        TASK_KNOWLEDGE_SUFFIX
    });
    Ok((
        ChatMessage::new(Role::Agent, Phase::TaskKnowledge, text, 0),
        ChatMessage::new(Role::Model, Phase::TaskKnowledge, TASK_KNOWLEDGE_REPLY, 1),
    ))
}

/// The canonical first turn of a format exemplar or problem statement.
pub fn format_problem_utterance(statement: &str) -> String {
    format!("Problem: {statement}{FORMAT_PROBLEM_SUFFIX}")
}

fn check_dialogue(d: &AnnotatedDialogue) -> Result<(), MemoryError> {
    if d.turns.is_empty() {
        return Err(MemoryError::MalformedDialogue("dialogue has no turns".into()));
    }
    let mut expected = Role::Agent;
    for (i, turn) in d.turns.iter().enumerate() {
        if turn.role != expected {
            return Err(MemoryError::MalformedDialogue(format!(
                "turn {i} breaks role alternation"
            )));
        }
        expected = expected.other();
    }
    let last = d.turns.last().expect("non-empty");
    if last.role != Role::Model {
        return Err(MemoryError::MalformedDialogue(
            "final turn must be a model turn".into(),
        ));
    }
    if !last.content.contains("\\boxed{") {
        return Err(MemoryError::MalformedDialogue(
            "final turn is missing a boxed answer".into(),
        ));
    }
    Ok(())
}

/// Expands annotated dialogues into `FormatExemplar` messages, rendering
/// each dialogue's first turn with the canonical problem utterance.
pub fn build_format_exemplars(
    dialogues: &[AnnotatedDialogue],
) -> Result<Vec<ChatMessage>, MemoryError> {
    let mut out = Vec::new();
    for dialogue in dialogues {
        check_dialogue(dialogue)?;
        for (i, turn) in dialogue.turns.iter().enumerate() {
            let content = if i == 0 {
                format_problem_utterance(&dialogue.statement)
            } else {
                turn.content.clone()
            };
            out.push(ChatMessage::new(
                turn.role,
                Phase::FormatExemplar,
                content,
                out.len(),
            ));
        }
    }
    Ok(out)
}

/// Composes the conversational knowledge memory: tools, then task, then
/// reasoning-format messages, with `memory_len` sealed over the whole
/// prefix. An empty tool list omits the tool-knowledge pair (TK ablation);
/// `n_r = 0` omits task knowledge (RATK) and `n_a = 0` the format
/// exemplars (MRF).
pub fn init_memory(
    cfg: &MemoryConfig,
    tools: &[ToolSpec],
    retrieved: &[Exemplar],
    annotated: &[AnnotatedDialogue],
) -> Result<ConversationState, MemoryError> {
    if cfg.n_a > MAX_ANNOTATED_DIALOGUES {
        return Err(MemoryError::TooManyDialogues(cfg.n_a));
    }
    if retrieved.len() != cfg.n_r {
        return Err(MemoryError::ExemplarCountMismatch {
            expected: cfg.n_r,
            got: retrieved.len(),
        });
    }
    if annotated.len() != cfg.n_a {
        return Err(MemoryError::DialogueCountMismatch {
            expected: cfg.n_a,
            got: annotated.len(),
        });
    }

    let mut drafts: Vec<ChatMessage> = Vec::new();
    if !tools.is_empty() {
        let (agent, model) = build_tool_knowledge(tools)?;
        drafts.push(agent);
        drafts.push(model);
    }
    if cfg.n_r > 0 {
        let (agent, model) = build_task_knowledge(retrieved, cfg.fix_typos)?;
        drafts.push(agent);
        drafts.push(model);
    }
    if cfg.n_a > 0 {
        drafts.extend(build_format_exemplars(annotated)?);
    }

    let mut state = ConversationState::new();
    for draft in drafts {
        state.push(draft.role, draft.phase, draft.content)?;
    }
    state.seal_memory();
    Ok(state)
}

/// Reads an annotated-dialogue file: a JSON array of
/// `{statement, turns: [{role, content}]}`.
pub fn load_annotated_dialogues(path: &std::path::Path) -> Result<Vec<AnnotatedDialogue>, String> {
    let data = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&data).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialogue(statement: &str, contents: &[&str]) -> AnnotatedDialogue {
        let turns = contents
            .iter()
            .enumerate()
            .map(|(i, c)| DialogueTurn {
                role: if i % 2 == 0 { Role::Agent } else { Role::Model },
                content: c.to_string(),
            })
            .collect();
        AnnotatedDialogue {
            statement: statement.to_string(),
            turns,
        }
    }

    #[test]
    fn tool_knowledge_renders_the_template() {
        let (agent, model) = build_tool_knowledge(&[ToolSpec::calculator()]).unwrap();
        assert_eq!(
            agent.content,
            "You can use tool to help you solve the problem and I give you the instruction of \
             tools usage. Calculator can help you compute the value of a mathematical \
             expression or simplify it Do you understand?"
        );
        assert_eq!(model.content, TOOL_KNOWLEDGE_REPLY);
        assert_eq!(agent.phase, Phase::ToolKnowledge);
        assert_eq!(model.phase, Phase::ToolKnowledge);
    }

    #[test]
    fn tool_knowledge_rejects_empty_list() {
        assert_eq!(build_tool_knowledge(&[]).unwrap_err(), MemoryError::EmptyToolList);
    }

    #[test]
    fn tool_knowledge_lists_every_tool_once_in_order() {
        let tools = [ToolSpec::calculator(), ToolSpec::equation_solver()];
        let (agent, _) = build_tool_knowledge(&tools).unwrap();
        for t in &tools {
            let needle = format!("{} can help you {}", t.name, t.functionality);
            assert_eq!(agent.content.matches(&needle).count(), 1);
        }
        let calc_at = agent.content.find("Calculator can help you").unwrap();
        let solver_at = agent.content.find("Equation Solver can help you").unwrap();
        assert!(calc_at < solver_at);
    }

    #[test]
    fn task_knowledge_renders_the_template() {
        let ex = Exemplar {
            statement: "Q1".into(),
            solution: "S1".into(),
            answer: "A1".into(),
        };
        let (agent, model) = build_task_knowledge(&[ex], false).unwrap();
        assert!(agent.content.starts_with("I give you some example. Problem: "));
        assert_eq!(
            agent.content,
            "I give you some example. Problem: Q1 Solution: S1 You can use the knowledge and \
             thoery in these problem. Do you understand?"
        );
        assert_eq!(model.content, TASK_KNOWLEDGE_REPLY);
    }

    #[test]
    fn task_knowledge_typo_flag() {
        let ex = Exemplar {
            statement: "Q".into(),
            solution: "S".into(),
            answer: "A".into(),
        };
        let (agent, _) = build_task_knowledge(&[ex.clone()], false).unwrap();
        assert!(agent.content.contains("thoery"));
        let (agent, _) = build_task_knowledge(&[ex], true).unwrap();
        assert!(agent.content.contains("theory"));
        assert!(!agent.content.contains("thoery"));
    }

    #[test]
    fn task_knowledge_counts_problem_blocks() {
        let exemplars: Vec<Exemplar> = (0..2)
            .map(|i| Exemplar {
                statement: format!("Q{i}"),
                solution: format!("S{i}"),
                answer: format!("A{i}"),
            })
            .collect();
        let (agent, _) = build_task_knowledge(&exemplars, false).unwrap();
        assert_eq!(agent.content.matches("Problem:").count(), 2);
        assert!(build_task_knowledge(&[], false).is_err());
    }

    #[test]
    fn format_exemplars_pass_turns_through() {
        let d = dialogue("Q", &["", "I reason.", "Continue reasoning", "\\boxed{4}"]);
        let msgs = build_format_exemplars(&[d]).unwrap();
        assert_eq!(msgs.len(), 4);
        assert_eq!(
            msgs.iter().map(|m| m.role).collect::<Vec<_>>(),
            vec![Role::Agent, Role::Model, Role::Agent, Role::Model]
        );
        assert_eq!(
            msgs[0].content,
            "Problem: Q Let's think step by step and use knowledge in similar problem to solve \
             this problem."
        );
        assert!(msgs.iter().all(|m| m.phase == Phase::FormatExemplar));
    }

    #[test]
    fn format_exemplars_require_boxed_final_turn() {
        let d = dialogue("Q", &["", "I reason.", "Continue reasoning", "the answer is 4"]);
        assert!(matches!(
            build_format_exemplars(&[d]).unwrap_err(),
            MemoryError::MalformedDialogue(_)
        ));
    }

    #[test]
    fn format_exemplars_concatenate_in_order() {
        let d4 = dialogue("A", &["", "r", "c", "\\boxed{1}"]);
        let d6 = dialogue("B", &["", "r", "c", "r2", "c2", "\\boxed{2}"]);
        let msgs = build_format_exemplars(&[d4.clone(), d6, d4]).unwrap();
        assert_eq!(msgs.len(), 14);
    }

    #[test]
    fn init_memory_lengths_add_up() {
        let cfg = MemoryConfig {
            n_r: 2,
            n_a: 3,
            fix_typos: false,
        };
        let tools = [ToolSpec::calculator()];
        let exemplars: Vec<Exemplar> = (0..2)
            .map(|i| Exemplar {
                statement: format!("Q{i}"),
                solution: format!("S{i}"),
                answer: format!("A{i}"),
            })
            .collect();
        let dialogues = vec![
            dialogue("A", &["", "r", "c", "\\boxed{1}"]),
            dialogue("B", &["", "r", "c", "\\boxed{2}"]),
            dialogue("C", &["", "r", "c", "r2", "c2", "\\boxed{3}"]),
        ];
        let state = init_memory(&cfg, &tools, &exemplars, &dialogues).unwrap();
        assert_eq!(state.memory_len(), 2 + 2 + 14);
        assert_eq!(state.len(), 18);
    }

    #[test]
    fn init_memory_tool_pair_only() {
        let cfg = MemoryConfig {
            n_r: 0,
            n_a: 0,
            fix_typos: false,
        };
        let state = init_memory(&cfg, &[ToolSpec::calculator()], &[], &[]).unwrap();
        assert_eq!(state.memory_len(), 2);
    }

    #[test]
    fn init_memory_checks_counts() {
        let cfg = MemoryConfig {
            n_r: 2,
            n_a: 0,
            fix_typos: false,
        };
        let err = init_memory(&cfg, &[ToolSpec::calculator()], &[], &[]).unwrap_err();
        assert!(matches!(err, MemoryError::ExemplarCountMismatch { .. }));
    }

    #[test]
    fn default_config_is_two_retrieval_three_annotated() {
        let cfg = MemoryConfig::default();
        assert_eq!(cfg.n_r, 2);
        assert_eq!(cfg.n_a, 3);
    }

    #[test]
    fn ablation_toggles_remove_exactly_their_sections() {
        let tools = [ToolSpec::calculator()];
        let exemplars = vec![Exemplar {
            statement: "Q".into(),
            solution: "S".into(),
            answer: "A".into(),
        }];
        let dialogues = vec![dialogue("D", &["", "r", "c", "\\boxed{1}"])];

        let full = init_memory(
            &MemoryConfig { n_r: 1, n_a: 1, fix_typos: false },
            &tools,
            &exemplars,
            &dialogues,
        )
        .unwrap();
        let no_tk = init_memory(
            &MemoryConfig { n_r: 1, n_a: 1, fix_typos: false },
            &[],
            &exemplars,
            &dialogues,
        )
        .unwrap();
        let no_ratk = init_memory(
            &MemoryConfig { n_r: 0, n_a: 1, fix_typos: false },
            &tools,
            &[],
            &dialogues,
        )
        .unwrap();
        let no_mrf = init_memory(
            &MemoryConfig { n_r: 1, n_a: 0, fix_typos: false },
            &tools,
            &exemplars,
            &[],
        )
        .unwrap();

        let phases = |s: &ConversationState| {
            s.messages().iter().map(|m| m.phase).collect::<Vec<_>>()
        };
        let full_phases = phases(&full);
        assert_eq!(
            phases(&no_tk),
            full_phases
                .iter()
                .copied()
                .filter(|p| *p != Phase::ToolKnowledge)
                .collect::<Vec<_>>()
        );
        assert_eq!(
            phases(&no_ratk),
            full_phases
                .iter()
                .copied()
                .filter(|p| *p != Phase::TaskKnowledge)
                .collect::<Vec<_>>()
        );
        assert_eq!(
            phases(&no_mrf),
            full_phases
                .iter()
                .copied()
                .filter(|p| *p != Phase::FormatExemplar)
                .collect::<Vec<_>>()
        );
    }
}
