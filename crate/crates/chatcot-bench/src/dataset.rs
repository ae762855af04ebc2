//! Dataset ingestion for MATH-style and HotpotQA-distractor-style files.
//!
//! MATH-style records are `{problem, level, type, solution}` where the
//! solution carries the gold answer in its last `\boxed{...}` span; files
//! may be a JSON array or JSONL. Hotpot-style files are a JSON array of
//! `{_id?, question, context: [[title, [sentences]]], answer}`.

use std::path::Path;

use serde::Deserialize;

use chatcot::engine::extract_boxed;
use chatcot::{DatasetKind, Exemplar, Paragraph, ProblemRecord};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed record at index {index}: {message}")]
    MalformedRecord { index: usize, message: String },
    #[error("record at index {index} has no boxed answer in its solution")]
    MissingBoxedAnswer { index: usize },
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Deserialize)]
struct MathRecord {
    problem: String,
    #[serde(default)]
    #[allow(dead_code)]
    level: Option<String>,
    #[serde(rename = "type", default)]
    category: Option<String>,
    solution: String,
}

#[derive(Debug, Deserialize)]
struct HotpotRecord {
    #[serde(rename = "_id", default)]
    id: Option<String>,
    question: String,
    context: Vec<(String, Vec<String>)>,
    #[serde(default)]
    answer: Option<String>,
}

fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_math_records(data: &str) -> Result<Vec<MathRecord>, DatasetError> {
    let trimmed = data.trim_start();
    if trimmed.starts_with('[') {
        serde_json::from_str(data).map_err(|e| DatasetError::Format(e.to_string()))
    } else {
        let mut out = Vec::new();
        for (i, line) in data.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(line).map_err(|e| DatasetError::MalformedRecord {
                    index: i,
                    message: e.to_string(),
                })?,
            );
        }
        Ok(out)
    }
}

/// Loads a dataset file into problem records with gold answers extracted.
pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Vec<ProblemRecord>, DatasetError> {
    let data = read_file(path)?;
    match kind {
        DatasetKind::MathStyle => {
            let records = parse_math_records(&data)?;
            let mut out = Vec::with_capacity(records.len());
            for (index, r) in records.into_iter().enumerate() {
                let gold =
                    extract_boxed(&r.solution).ok_or(DatasetError::MissingBoxedAnswer { index })?;
                let category = r.category.unwrap_or_else(|| "Uncategorized".to_string());
                let record = ProblemRecord::math(
                    format!("math-{index}"),
                    r.problem,
                    Some(r.solution),
                    Some(gold),
                    category,
                )
                .map_err(|e| DatasetError::MalformedRecord {
                    index,
                    message: e.to_string(),
                })?;
                out.push(record);
            }
            Ok(out)
        }
        DatasetKind::HotpotStyle => {
            let records: Vec<HotpotRecord> =
                serde_json::from_str(&data).map_err(|e| DatasetError::Format(e.to_string()))?;
            let mut out = Vec::with_capacity(records.len());
            for (index, r) in records.into_iter().enumerate() {
                if r.context.is_empty() {
                    return Err(DatasetError::MalformedRecord {
                        index,
                        message: "empty paragraph candidate collection".into(),
                    });
                }
                let paragraphs: Vec<Paragraph> = r
                    .context
                    .into_iter()
                    .map(|(title, sentences)| Paragraph {
                        title,
                        text: sentences.join(""),
                    })
                    .collect();
                let id = r.id.unwrap_or_else(|| format!("hotpot-{index}"));
                out.push(
                    ProblemRecord::hotpot(id, r.question, r.answer, paragraphs).map_err(|e| {
                        DatasetError::MalformedRecord {
                            index,
                            message: e.to_string(),
                        }
                    })?,
                );
            }
            Ok(out)
        }
    }
}

/// Converts records into flat exemplars for prompts and retrieval indexes.
pub fn to_exemplars(records: &[ProblemRecord]) -> Vec<Exemplar> {
    records
        .iter()
        .filter_map(|r| {
            let answer = r.answer.clone()?;
            let solution = match (&r.solution, r.dataset) {
                (Some(s), _) => s.clone(),
                (None, DatasetKind::HotpotStyle) => format!("The answer is {answer}."),
                (None, DatasetKind::MathStyle) => return None,
            };
            Some(Exemplar {
                statement: r.statement.clone(),
                solution,
                answer,
            })
        })
        .collect()
}

/// Index text for an exemplar: the statement joined with the solution, so
/// queries over bare statements still match on shared content.
pub fn exemplar_index_text(ex: &Exemplar, include_solution: bool) -> String {
    if include_solution {
        format!("{}\n{}", ex.statement, ex.solution)
    } else {
        ex.statement.clone()
    }
}
