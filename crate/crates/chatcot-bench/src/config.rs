//! Optional TOML config file mirroring the CLI flags. CLI values win over
//! file values; file values win over defaults.

use std::path::PathBuf;

use serde::Deserialize;

use chatcot::ToolSpec;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub live: LiveSection,
    #[serde(default)]
    pub tools: Vec<ToolSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunSection {
    pub dataset: Option<PathBuf>,
    pub kind: Option<String>,
    pub strategy: Option<String>,
    pub backend: Option<String>,
    pub policy: Option<PathBuf>,
    pub k: Option<usize>,
    pub temperature: Option<f64>,
    pub max_turns: Option<usize>,
    pub max_feedback: Option<usize>,
    pub n_retrieval: Option<usize>,
    pub n_annotated: Option<usize>,
    pub trace_out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub train: Option<PathBuf>,
    pub annotated: Option<PathBuf>,
    pub limit: Option<usize>,
    pub seed: Option<u64>,
    pub shots: Option<usize>,
    pub fix_typos: Option<bool>,
    pub retrieval_k: Option<usize>,
    pub max_new_tokens: Option<usize>,
    pub conclude_counts_as_turn: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LiveSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let data =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&data).map_err(|e| format!("{}: {e}", path.display()))
    }
}
