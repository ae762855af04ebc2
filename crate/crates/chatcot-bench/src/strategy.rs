//! Prompting strategies under evaluation: the conversational tool-
//! augmented loop plus the one-pass baselines (plain chain-of-thought,
//! chain-of-thought with inline tool markers, and retrieval-augmented
//! exemplar selection).

use std::str::FromStr;

use chatcot::engine::{ToolBackend, ToolRegistry};
use chatcot::{build_tool_knowledge, ChatMessage, DatasetKind, Exemplar, Paragraph, Phase,
    ProblemRecord, Role, ToolCall};

pub const COT_PROBLEM_SUFFIX: &str = " Let's think step by step.";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    ChatCot,
    Cot,
    CotWithTool,
    CotWithRetrieval,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::ChatCot => "chatcot",
            Strategy::Cot => "cot",
            Strategy::CotWithTool => "cot-tool",
            Strategy::CotWithRetrieval => "cot-retri",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "chatcot" => Ok(Strategy::ChatCot),
            "cot" => Ok(Strategy::Cot),
            "cot-tool" | "cot_tool" | "cotwtool" => Ok(Strategy::CotWithTool),
            "cot-retri" | "cot_retri" | "cotwretri" => Ok(Strategy::CotWithRetrieval),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("unknown strategy")]
    UnknownStrategy,
    #[error("strategy '{0}' is not a one-pass baseline")]
    NotABaseline(String),
    #[error(transparent)]
    Memory(#[from] chatcot::MemoryError),
}

/// Renders the one-pass baseline prompt. `evidence` paragraphs are
/// included for hotpot-style problems (the retrieved top-k candidates).
pub fn build_baseline_prompt(
    strategy: Strategy,
    problem: &ProblemRecord,
    exemplars: &[Exemplar],
    evidence: &[Paragraph],
) -> Result<Vec<ChatMessage>, StrategyError> {
    let mut body = String::new();
    for ex in exemplars {
        body.push_str(&format!(
            "Problem: {} Solution: {} ",
            ex.statement, ex.solution
        ));
    }
    if problem.dataset == DatasetKind::HotpotStyle {
        for p in evidence {
            body.push_str(&format!("Evidence: {}: {} ", p.title, p.text));
        }
    }
    body.push_str(&format!("Problem: {}{COT_PROBLEM_SUFFIX}", problem.statement));

    match strategy {
        Strategy::Cot | Strategy::CotWithRetrieval => Ok(vec![ChatMessage::new(
            Role::Agent,
            Phase::ProblemStart,
            body,
            0,
        )]),
        Strategy::CotWithTool => {
            let specs: Vec<chatcot::ToolSpec> = vec![
                chatcot::ToolSpec::calculator(),
                chatcot::ToolSpec::equation_solver(),
            ];
            let (agent, model) = build_tool_knowledge(&specs)?;
            let mut messages = vec![agent, model];
            let tool_hint = format!(
                "{body} You can call a tool by writing <<Tool Name: arguments>> on its own \
                 line and the result will be substituted."
            );
            messages.push(ChatMessage::new(Role::Agent, Phase::ProblemStart, tool_hint, 2));
            Ok(messages)
        }
        Strategy::ChatCot => Err(StrategyError::NotABaseline("chatcot".into())),
    }
}

/// Executes `<<tool: args>>` markers in a one-pass completion, replacing
/// each with its tool output (or an inline error), and records the calls.
pub fn substitute_tool_markers(
    text: &str,
    registry: &ToolRegistry,
    retrieval_k: usize,
) -> (String, Vec<ToolCall>) {
    let mut out = String::new();
    let mut calls = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("<<") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let Some(close) = after.find(">>") else {
            out.push_str(&rest[open..]);
            rest = "";
            break;
        };
        let marker = &after[..close];
        rest = &after[close + 2..];
        match marker.split_once(':') {
            Some((name, args)) => {
                let name = name.trim();
                let args = args.trim();
                match registry
                    .specs()
                    .into_iter()
                    .find(|s| s.name.eq_ignore_ascii_case(name))
                {
                    Some(spec) => {
                        let result = execute_oneshot(registry, &spec.name, args, retrieval_k);
                        calls.push(ToolCall {
                            tool: spec.name.clone(),
                            ok: result.ok,
                        });
                        if result.ok {
                            out.push_str(&result.content);
                        } else {
                            out.push_str(&format!("Error: {}.", result.content));
                        }
                    }
                    None => {
                        calls.push(ToolCall {
                            tool: name.to_string(),
                            ok: false,
                        });
                        out.push_str(&format!("Error: unknown tool '{name}'."));
                    }
                }
            }
            None => {
                // not a tool marker; emit verbatim
                out.push_str("<<");
                out.push_str(marker);
                out.push_str(">>");
            }
        }
    }
    out.push_str(rest);
    (out, calls)
}

/// One-shot tool execution without a conversation (baseline path).
pub fn execute_oneshot(
    registry: &ToolRegistry,
    name: &str,
    args: &str,
    retrieval_k: usize,
) -> mathkit::ToolResult {
    let Some(tool) = registry.get(name) else {
        return mathkit::ToolResult::err_unclassified(format!("unknown tool '{name}'"));
    };
    match &tool.backend {
        ToolBackend::Calculator => mathkit::calculate(args),
        ToolBackend::EquationSolver => mathkit::solve_command(args),
        ToolBackend::Custom(f) => f(args),
        ToolBackend::Retriever(retriever) => match retriever.top_k(args.trim(), retrieval_k) {
            Ok(hits) if !hits.is_empty() => {
                let lines: Vec<String> = hits
                    .iter()
                    .map(|(id, _)| match retriever.index.get(id) {
                        Some(e) => format!("{}: {}", e.id, e.text),
                        None => id.clone(),
                    })
                    .collect();
                mathkit::ToolResult::ok(lines.join("\n"))
            }
            Ok(_) => mathkit::ToolResult::err_unclassified("no documents matched the query"),
            Err(e) => mathkit::ToolResult::err_unclassified(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn math_problem() -> ProblemRecord {
        ProblemRecord::math("m1", "What is $2+2$?", None, Some("4".into()), "Algebra").unwrap()
    }

    fn exemplar(i: usize) -> Exemplar {
        Exemplar {
            statement: format!("Q{i}"),
            solution: format!("S{i}"),
            answer: format!("{i}"),
        }
    }

    #[test]
    fn cot_prompt_is_one_message_with_counted_blocks() {
        let msgs =
            build_baseline_prompt(Strategy::Cot, &math_problem(), &[exemplar(1), exemplar(2)], &[])
                .unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].role, Role::Agent);
        assert_eq!(msgs[0].content.matches("Problem:").count(), 3);
        assert!(msgs[0].content.ends_with("Let's think step by step."));
    }

    #[test]
    fn hotpot_cot_includes_evidence() {
        let problem = ProblemRecord::hotpot(
            "h1",
            "Who?",
            Some("Ann".into()),
            vec![Paragraph {
                title: "T".into(),
                text: "body".into(),
            }],
        )
        .unwrap();
        let evidence = vec![
            Paragraph { title: "E1".into(), text: "t1".into() },
            Paragraph { title: "E2".into(), text: "t2".into() },
            Paragraph { title: "E3".into(), text: "t3".into() },
        ];
        let msgs = build_baseline_prompt(Strategy::Cot, &problem, &[], &evidence).unwrap();
        assert_eq!(msgs[0].content.matches("Evidence:").count(), 3);
    }

    #[test]
    fn cot_tool_prepends_tool_knowledge() {
        let msgs =
            build_baseline_prompt(Strategy::CotWithTool, &math_problem(), &[exemplar(1)], &[])
                .unwrap();
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[0].phase, Phase::ToolKnowledge);
        assert_eq!(msgs[1].role, Role::Model);
        assert!(msgs[2].content.contains("<<Tool Name: arguments>>"));
    }

    #[test]
    fn markers_execute_and_substitute() {
        let registry = ToolRegistry::math_tools();
        let (text, calls) = substitute_tool_markers(
            "The sum is <<Calculator: 2+2>> and so on.",
            &registry,
            3,
        );
        assert_eq!(text, "The sum is 4 and so on.");
        assert_eq!(calls.len(), 1);
        assert!(calls[0].ok);
    }

    #[test]
    fn bad_marker_becomes_inline_error() {
        let registry = ToolRegistry::math_tools();
        let (text, calls) = substitute_tool_markers("Try <<Calculator: 2+*3>>.", &registry, 3);
        assert!(text.contains("Error: parse error"));
        assert!(!calls[0].ok);
        let (text, calls) = substitute_tool_markers("Try <<Oracle: hi>>.", &registry, 3);
        assert!(text.contains("unknown tool 'Oracle'"));
        assert!(!calls[0].ok);
    }

    #[test]
    fn non_marker_angle_brackets_pass_through() {
        let registry = ToolRegistry::math_tools();
        let (text, calls) = substitute_tool_markers("a << b and <<just text>>", &registry, 3);
        assert_eq!(text, "a << b and <<just text>>");
        assert!(calls.is_empty());
    }

    #[test]
    fn strategy_parses_cli_names() {
        assert_eq!(Strategy::from_str("chatcot").unwrap(), Strategy::ChatCot);
        assert_eq!(Strategy::from_str("cot-tool").unwrap(), Strategy::CotWithTool);
        assert_eq!(Strategy::from_str("COT").unwrap(), Strategy::Cot);
        assert!(Strategy::from_str("php").is_err());
    }
}
