//! Improvement strategies on top of the engine: self-consistency majority
//! voting over diversified runs, and a refine pass over the flattened
//! dialogue.

use crate::conversation::{ConversationState, Phase, ProblemRecord, Role};
use crate::engine::{extract_answer, extract_boxed, Engine, EngineError, RunOutcome};
use crate::gateway::{ChatBackend, ModelRequest};

pub const REFINE_PROMPT: &str =
    "The solution above might some mistake, you should check the solution and get the final answer.";

/// Majority-vote outcome: every answer, the per-class scores, the winner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteTally {
    pub answers: Vec<String>,
    /// Class representative (first member) -> count, in first-seen order.
    pub scores: Vec<(String, usize)>,
    pub winner: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("no run produced an extractable answer")]
    AnswerNotFound,
    #[error("self-consistency needs temperature > 0 when k > 1")]
    TemperatureRequired,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Conversation(#[from] crate::conversation::ConversationError),
}

/// Groups answers into equivalence classes under `equiv` and picks the
/// class with the highest count; ties go to the earliest first occurrence.
pub fn self_consistency(answers: &[String], equiv: impl Fn(&str, &str) -> bool) -> VoteTally {
    assert!(!answers.is_empty(), "vote over at least one answer");
    let mut scores: Vec<(String, usize)> = Vec::new();
    for answer in answers {
        match scores.iter_mut().find(|(rep, _)| equiv(rep, answer)) {
            Some((_, count)) => *count += 1,
            None => scores.push((answer.clone(), 1)),
        }
    }
    // strictly-greater comparison keeps the earliest class on ties
    let mut winner = scores[0].0.clone();
    let mut best = scores[0].1;
    for (rep, count) in scores.iter().skip(1) {
        if *count > best {
            best = *count;
            winner = rep.clone();
        }
    }
    VoteTally {
        answers: answers.to_vec(),
        scores,
        winner,
    }
}

/// Self-consistency over full engine runs.
#[derive(Debug)]
pub struct ScOutcome {
    pub answer: String,
    pub tally: VoteTally,
    pub outcomes: Vec<RunOutcome>,
    pub k_requested: usize,
    pub k_effective: usize,
}

/// Runs the engine `k` times at the configured temperature and majority-
/// votes the answers. Runs without an extractable answer are excluded;
/// if every run comes back empty the vote is `AnswerNotFound`.
pub fn run_sc(
    engine: &Engine<'_>,
    problem: &ProblemRecord,
    memory: &ConversationState,
    k: usize,
    equiv: impl Fn(&str, &str) -> bool,
) -> Result<ScOutcome, EnsembleError> {
    if k == 0 {
        return Err(EnsembleError::AnswerNotFound);
    }
    if k > 1 && engine.config.temperature <= 0.0 {
        return Err(EnsembleError::TemperatureRequired);
    }
    let mut outcomes = Vec::with_capacity(k);
    for run_idx in 0..k {
        match engine.run(problem, memory) {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => {
                tracing::warn!(run = run_idx, error = %e, "self-consistency run failed");
            }
        }
    }
    let answers: Vec<String> = outcomes
        .iter()
        .filter_map(|o| o.answer.clone())
        .filter(|a| !a.is_empty())
        .collect();
    if answers.is_empty() {
        return Err(EnsembleError::AnswerNotFound);
    }
    let tally = self_consistency(&answers, equiv);
    Ok(ScOutcome {
        answer: tally.winner.clone(),
        tally,
        k_requested: k,
        k_effective: answers.len(),
        outcomes,
    })
}

/// One refine pass: flattens the trace into a reasoning paragraph, asks
/// the model to check it, and returns the corrected answer (or the trace's
/// original answer when the reply has none to extract).
pub fn refine_pass(
    trace: &ConversationState,
    backend: &dyn ChatBackend,
    temperature: f64,
    max_new_tokens: usize,
) -> Result<Option<String>, EnsembleError> {
    let paragraph = trace.to_paragraph()?;
    let original = trace
        .messages()
        .iter()
        .skip(trace.memory_len())
        .rev()
        .filter(|m| m.role == Role::Model)
        .find_map(|m| extract_boxed(&m.content));

    let mut exchange = ConversationState::new();
    exchange.push(Role::Agent, Phase::Reasoning, paragraph)?;
    // the refine prompt follows as a second agent utterance in a fresh
    // request; requests are not bound by conversation alternation
    let mut messages = exchange.messages().to_vec();
    messages.push(crate::conversation::ChatMessage::new(
        Role::Agent,
        Phase::Feedback,
        REFINE_PROMPT,
        messages.len(),
    ));
    let req = ModelRequest::single(messages, temperature, max_new_tokens);
    let resp = backend.complete(&req).map_err(EngineError::from)?;
    let reply = resp.completions.into_iter().next().unwrap_or_default();
    Ok(extract_answer(&reply).or(original))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_vote_picks_the_most_frequent() {
        let answers: Vec<String> = ["2", "0", "0", "0", "2"].iter().map(|s| s.to_string()).collect();
        let tally = self_consistency(&answers, |a, b| a == b);
        assert_eq!(tally.winner, "0");
        assert_eq!(tally.scores, vec![("2".to_string(), 2), ("0".to_string(), 3)]);
        assert_eq!(tally.scores.iter().map(|(_, c)| c).sum::<usize>(), 5);
    }

    #[test]
    fn equivalence_classes_group_equal_values() {
        let answers: Vec<String> = ["1/2", "0.5", "3"].iter().map(|s| s.to_string()).collect();
        let math_equiv = |a: &str, b: &str| {
            match (
                mathkit::parse_expr(a).ok().and_then(|e| mathkit::eval_to_rational(&e).ok()),
                mathkit::parse_expr(b).ok().and_then(|e| mathkit::eval_to_rational(&e).ok()),
            ) {
                (Some(ra), Some(rb)) => ra == rb,
                _ => a == b,
            }
        };
        let tally = self_consistency(&answers, math_equiv);
        assert_eq!(tally.winner, "1/2");
        assert_eq!(tally.scores[0], ("1/2".to_string(), 2));
    }

    #[test]
    fn ties_break_by_first_occurrence() {
        let answers: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let tally = self_consistency(&answers, |a, b| a == b);
        assert_eq!(tally.winner, "a");
        assert!(tally.scores.iter().all(|(_, c)| *c == 1));
    }

    #[test]
    fn unanimous_vote_scores_k() {
        let answers = vec!["7".to_string(); 5];
        let tally = self_consistency(&answers, |a, b| a == b);
        assert_eq!(tally.winner, "7");
        assert_eq!(tally.scores, vec![("7".to_string(), 5)]);
    }

    #[test]
    fn permutations_only_reorder_tied_classes() {
        let base: Vec<String> = ["x", "y", "x", "z"].iter().map(|s| s.to_string()).collect();
        let tally = self_consistency(&base, |a, b| a == b);
        assert_eq!(tally.winner, "x");
        // any permutation keeps the same winner because "x" strictly leads
        let perms = [
            vec!["y", "x", "z", "x"],
            vec!["z", "x", "x", "y"],
            vec!["x", "z", "y", "x"],
        ];
        for p in perms {
            let answers: Vec<String> = p.iter().map(|s| s.to_string()).collect();
            let t = self_consistency(&answers, |a, b| a == b);
            assert_eq!(t.winner, "x");
            let mut sorted_scores = t.scores.clone();
            sorted_scores.sort();
            let mut base_scores = tally.scores.clone();
            base_scores.sort();
            assert_eq!(sorted_scores, base_scores);
        }
    }
}
