//! Benchmark harness for the conversational tool-augmented reasoning
//! engine: dataset loaders, baseline prompting strategies, answer
//! equivalence, metrics, and the CLI plumbing.

pub mod config;
pub mod dataset;
pub mod equiv;
pub mod metrics;
pub mod runner;
pub mod strategy;

pub use config::FileConfig;
pub use dataset::{load_dataset, to_exemplars, DatasetError};
pub use equiv::{answer_equiv, answer_equiv_with, normalize_answer, EquivOptions};
pub use metrics::{compute_metrics, render_report, CategoryMetrics, Metrics};
pub use runner::{Harness, HarnessError, RunnerOptions};
pub use strategy::{
    build_baseline_prompt, execute_oneshot, substitute_tool_markers, Strategy, StrategyError,
};
