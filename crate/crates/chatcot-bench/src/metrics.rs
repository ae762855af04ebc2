//! Aggregate statistics over run traces: accuracy, generated tokens, and
//! the tool frequency / success rates. Metrics are a pure function of the
//! persisted traces, so recomputing from JSONL reproduces them exactly.

use std::collections::BTreeMap;

use serde::Serialize;

use chatcot::RunTrace;

use crate::equiv::{answer_equiv_with, EquivOptions};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CategoryMetrics {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub n_problems: usize,
    pub accuracy: f64,
    pub avg_generated_tokens: f64,
    /// Fraction of problems with at least one successful tool invocation.
    pub tool_frequency: Option<f64>,
    /// Successful invocations over all invocations; absent without any.
    pub tool_success: Option<f64>,
    pub per_category: BTreeMap<String, CategoryMetrics>,
}

/// Computes metrics over traces (which carry their own gold answers).
pub fn compute_metrics(traces: &[RunTrace], opts: EquivOptions) -> Metrics {
    let n = traces.len();
    let mut correct = 0usize;
    let mut tokens_total = 0u64;
    let mut problems_with_tool = 0usize;
    let mut invocations = 0usize;
    let mut invocations_ok = 0usize;
    let mut per_category: BTreeMap<String, (usize, usize)> = BTreeMap::new();

    for t in traces {
        let is_correct = match &t.gold {
            Some(gold) => !t.answer.is_empty() && answer_equiv_with(&t.answer, gold, opts),
            None => false,
        };
        if is_correct {
            correct += 1;
        }
        tokens_total += t.generated_tokens;
        invocations += t.tool_calls.len();
        invocations_ok += t.tool_calls.iter().filter(|c| c.ok).count();
        if t.tool_calls.iter().any(|c| c.ok) {
            problems_with_tool += 1;
        }
        let cat = t.category.clone().unwrap_or_else(|| "Uncategorized".into());
        let entry = per_category.entry(cat).or_insert((0, 0));
        entry.0 += 1;
        if is_correct {
            entry.1 += 1;
        }
    }

    Metrics {
        n_problems: n,
        accuracy: if n > 0 { correct as f64 / n as f64 } else { 0.0 },
        avg_generated_tokens: if n > 0 {
            tokens_total as f64 / n as f64
        } else {
            0.0
        },
        tool_frequency: (n > 0).then(|| problems_with_tool as f64 / n as f64),
        tool_success: (invocations > 0).then(|| invocations_ok as f64 / invocations as f64),
        per_category: per_category
            .into_iter()
            .map(|(cat, (cn, cc))| {
                (
                    cat,
                    CategoryMetrics {
                        n: cn,
                        correct: cc,
                        accuracy: cc as f64 / cn as f64,
                    },
                )
            })
            .collect(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "-".to_string(),
    }
}

/// Renders the report: per-strategy summary rows, a generated-tokens
/// table (strategy -> mean tokens), and per-category accuracy.
pub fn render_report(traces: &[RunTrace], opts: EquivOptions) -> String {
    let mut by_strategy: BTreeMap<String, Vec<RunTrace>> = BTreeMap::new();
    for t in traces {
        by_strategy.entry(t.strategy.clone()).or_default().push(t.clone());
    }

    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>5} {:>9} {:>10} {:>9} {:>18}\n",
        "Strategy", "N", "Accuracy", "Tool Freq", "Tool Succ", "Generated Tokens"
    ));
    for (strategy, group) in &by_strategy {
        let m = compute_metrics(group, opts);
        out.push_str(&format!(
            "{:<16} {:>5} {:>9.3} {:>10} {:>9} {:>18.1}\n",
            strategy,
            m.n_problems,
            m.accuracy,
            fmt_opt(m.tool_frequency),
            fmt_opt(m.tool_success),
            m.avg_generated_tokens
        ));
    }

    out.push_str("\nGenerated Tokens\n");
    for (strategy, group) in &by_strategy {
        let m = compute_metrics(group, opts);
        out.push_str(&format!("{strategy}\t{:.1}\n", m.avg_generated_tokens));
    }

    for (strategy, group) in &by_strategy {
        let m = compute_metrics(group, opts);
        if m.per_category.len() > 1 {
            out.push_str(&format!("\nPer-category accuracy ({strategy})\n"));
            for (cat, cm) in &m.per_category {
                out.push_str(&format!(
                    "{:<24} {:>5} {:>9.3}\n",
                    cat, cm.n, cm.accuracy
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chatcot::{RunTrace, ToolCall, TraceMessage};

    fn trace(
        id: &str,
        answer: &str,
        gold: &str,
        calls: Vec<(bool,)>,
        tokens: u64,
        category: &str,
    ) -> RunTrace {
        RunTrace {
            problem_id: id.into(),
            messages: Vec::<TraceMessage>::new(),
            answer: answer.into(),
            token_count: tokens,
            strategy: "chatcot".into(),
            tool_calls: calls
                .into_iter()
                .map(|(ok,)| ToolCall {
                    tool: "Calculator".into(),
                    ok,
                })
                .collect(),
            forced_conclusion: false,
            generated_tokens: tokens,
            gold: Some(gold.into()),
            category: Some(category.into()),
        }
    }

    #[test]
    fn counting_accuracy() {
        let traces: Vec<RunTrace> = (0..10)
            .map(|i| {
                let answer = if i < 7 { "1" } else { "2" };
                trace(&format!("p{i}"), answer, "1", vec![], 100, "Algebra")
            })
            .collect();
        let m = compute_metrics(&traces, EquivOptions::default());
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert_eq!(m.n_problems, 10);
        assert_eq!(m.tool_frequency, Some(0.0));
        assert_eq!(m.tool_success, None);
    }

    #[test]
    fn tool_ratios_from_constructed_traces() {
        // 7 of 10 problems succeed with tools; 20 invocations, 18 of them ok
        let mut traces = Vec::new();
        for i in 0..4 {
            traces.push(trace(
                &format!("p{i}"),
                "1",
                "1",
                vec![(true,); 3],
                50,
                "Algebra",
            ));
        }
        for i in 4..7 {
            traces.push(trace(
                &format!("p{i}"),
                "1",
                "1",
                vec![(true,); 2],
                50,
                "Algebra",
            ));
        }
        traces.push(trace("p7", "2", "1", vec![(false,)], 50, "Algebra"));
        traces.push(trace("p8", "2", "1", vec![(false,)], 50, "Algebra"));
        traces.push(trace("p9", "2", "1", vec![], 50, "Algebra"));
        let m = compute_metrics(&traces, EquivOptions::default());
        assert!((m.tool_frequency.unwrap() - 0.70).abs() < 1e-12);
        assert!((m.tool_success.unwrap() - 0.90).abs() < 1e-12);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
    }

    #[test]
    fn per_category_breakdown() {
        let traces = vec![
            trace("a", "1", "1", vec![], 10, "Algebra"),
            trace("b", "2", "1", vec![], 10, "Algebra"),
            trace("c", "1", "1", vec![], 10, "Geometry"),
        ];
        let m = compute_metrics(&traces, EquivOptions::default());
        assert_eq!(m.per_category["Algebra"].n, 2);
        assert_eq!(m.per_category["Algebra"].correct, 1);
        assert_eq!(m.per_category["Geometry"].accuracy, 1.0);
    }

    #[test]
    fn report_contains_token_rows() {
        let traces = vec![trace("a", "1", "1", vec![], 224, "Algebra")];
        let report = render_report(&traces, EquivOptions::default());
        assert!(report.contains("Generated Tokens"));
        assert!(report.contains("chatcot\t224.0"));
    }

    #[test]
    fn empty_answer_never_counts_correct() {
        let traces = vec![trace("a", "", "", vec![], 1, "Algebra")];
        let m = compute_metrics(&traces, EquivOptions::default());
        assert_eq!(m.accuracy, 0.0);
    }
}
