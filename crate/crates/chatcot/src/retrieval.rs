//! Dense retrieval: embedding providers, cosine ranking, top-k selection,
//! and bounded feedback sessions that only surface unshown results.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Fixed-length vector of finite values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("text is empty")]
    EmptyText,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("duplicate document id '{0}'")]
    DuplicateId(String),
    #[error("feedback rounds exhausted")]
    FeedbackExhausted,
    #[error("no unshown documents remain")]
    IndexExhausted,
    #[error("index/provider mismatch: {0}")]
    ProviderMismatch(String),
}

/// An embedding provider: deterministic per (provider config, text).
pub trait Embedder: Send + Sync {
    fn provider_id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Built-in deterministic embedder: lowercased word unigrams and bigrams
/// are hashed into `dim` signed buckets and the result is L2-normalized.
/// Requires no network and no model weights.
#[derive(Clone, Debug)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(256)
    }
}

impl Embedder for HashEmbedder {
    fn provider_id(&self) -> String {
        format!("hash-fnv1a-d{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let tokens: Vec<String> = text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect();
        if tokens.is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut values = vec![0.0f64; self.dim];
        let mut bump = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
            values[bucket] += sign;
        };
        for t in &tokens {
            bump(t);
        }
        for pair in tokens.windows(2) {
            bump(&format!("{} {}", pair[0], pair[1]));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Ok(EmbeddingVector { values })
    }
}

/// Remote embedding-service client speaking `{texts: [...]}` ->
/// `{vectors: [[...]]}` JSON over HTTP.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        RemoteEmbedder {
            endpoint: endpoint.into(),
            dim,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn provider_id(&self) -> String {
        format!("remote:{}:d{}", self.endpoint, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts: vec![text] })
            .send()
            .map_err(|e| RetrievalError::ProviderUnavailable(e.to_string()))?;
        let parsed: EmbedResponse = resp
            .error_for_status()
            .map_err(|e| RetrievalError::ProviderUnavailable(e.to_string()))?
            .json()
            .map_err(|e| RetrievalError::ProviderUnavailable(e.to_string()))?;
        let values = parsed
            .vectors
            .into_iter()
            .next()
            .ok_or_else(|| RetrievalError::ProviderUnavailable("no vector returned".into()))?;
        if values.len() != self.dim || values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::ProviderUnavailable(
                "provider returned a malformed vector".into(),
            ));
        }
        Ok(EmbeddingVector { values })
    }
}

/// Cosine similarity of two equal-dimension, non-zero vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimMismatch {
            a: a.dim(),
            b: b.dim(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok(dot / (na * nb))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocEntry {
    pub id: String,
    pub text: String,
    pub vector: EmbeddingVector,
}

/// Immutable embedded document collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocIndex {
    pub provider_id: String,
    pub dim: usize,
    pub entries: Vec<DocEntry>,
}

impl DocIndex {
    /// Embeds `(id, text)` pairs with the given provider.
    pub fn build(
        embedder: &dyn Embedder,
        docs: &[(String, String)],
    ) -> Result<Self, RetrievalError> {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::with_capacity(docs.len());
        for (id, text) in docs {
            if !seen.insert(id.clone()) {
                return Err(RetrievalError::DuplicateId(id.clone()));
            }
            entries.push(DocEntry {
                id: id.clone(),
                text: text.clone(),
                vector: embedder.embed(text)?,
            });
        }
        Ok(DocIndex {
            provider_id: embedder.provider_id(),
            dim: embedder.dim(),
            entries,
        })
    }

    /// Wraps pre-embedded entries, validating id uniqueness and dimensions.
    pub fn from_entries(
        provider_id: impl Into<String>,
        dim: usize,
        entries: Vec<DocEntry>,
    ) -> Result<Self, RetrievalError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.clone()) {
                return Err(RetrievalError::DuplicateId(e.id.clone()));
            }
            if e.vector.dim() != dim {
                return Err(RetrievalError::DimMismatch {
                    a: e.vector.dim(),
                    b: dim,
                });
            }
        }
        Ok(DocIndex {
            provider_id: provider_id.into(),
            dim,
            entries,
        })
    }

    pub fn get(&self, id: &str) -> Option<&DocEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), String> {
        let data = serde_json::to_string(self).map_err(|e| e.to_string())?;
        std::fs::write(path, data).map_err(|e| e.to_string())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let data = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&data).map_err(|e| e.to_string())
    }
}

/// Per-query feedback state: what has been shown and how many feedback
/// rounds were spent. At most five feedback retrievals per session.
#[derive(Clone, Debug)]
pub struct RetrievalSession {
    pub query: String,
    shown: BTreeSet<String>,
    feedback_rounds_used: usize,
}

pub const MAX_FEEDBACK_ROUNDS: usize = 5;

impl RetrievalSession {
    pub fn new(query: impl Into<String>) -> Self {
        RetrievalSession {
            query: query.into(),
            shown: BTreeSet::new(),
            feedback_rounds_used: 0,
        }
    }

    pub fn rounds_used(&self) -> usize {
        self.feedback_rounds_used
    }

    pub fn shown(&self) -> &BTreeSet<String> {
        &self.shown
    }

    /// Marks ids as already shown (the initial, non-feedback retrieval).
    pub fn record_shown<'a>(&mut self, ids: impl IntoIterator<Item = &'a str>) {
        for id in ids {
            self.shown.insert(id.to_string());
        }
    }
}

/// An embedder paired with the index it searches.
pub struct Retriever {
    pub embedder: Arc<dyn Embedder>,
    pub index: DocIndex,
}

impl Retriever {
    pub fn new(embedder: Arc<dyn Embedder>, index: DocIndex) -> Result<Self, RetrievalError> {
        if index.provider_id != embedder.provider_id() {
            return Err(RetrievalError::ProviderMismatch(format!(
                "index built with '{}', embedder is '{}'",
                index.provider_id,
                embedder.provider_id()
            )));
        }
        Ok(Retriever { embedder, index })
    }

    fn rank(
        &self,
        query: &str,
        exclude: Option<&BTreeSet<String>>,
    ) -> Result<Vec<(String, f64)>, RetrievalError> {
        if self.index.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let qv = self.embedder.embed(query)?;
        let mut scored = Vec::new();
        for entry in &self.index.entries {
            if exclude.is_some_and(|ex| ex.contains(&entry.id)) {
                continue;
            }
            scored.push((entry.id.clone(), cosine(&qv, &entry.vector)?));
        }
        // descending score, ties broken by ascending id
        scored.sort_by(|(ia, sa), (ib, sb)| {
            sb.partial_cmp(sa)
                .expect("finite scores")
                .then_with(|| ia.cmp(ib))
        });
        Ok(scored)
    }

    /// The `k` most similar documents, descending, ties by ascending id.
    pub fn top_k(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>, RetrievalError> {
        let mut ranked = self.rank(query, None)?;
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Feedback retrieval: the best `k` documents not yet shown in this
    /// session. Fails once five feedback rounds were used or nothing
    /// unshown remains.
    pub fn next_batch(
        &self,
        session: &mut RetrievalSession,
        k: usize,
    ) -> Result<Vec<(String, f64)>, RetrievalError> {
        if session.feedback_rounds_used >= MAX_FEEDBACK_ROUNDS {
            return Err(RetrievalError::FeedbackExhausted);
        }
        let mut ranked = self.rank(&session.query, Some(&session.shown))?;
        if ranked.is_empty() {
            return Err(RetrievalError::IndexExhausted);
        }
        ranked.truncate(k);
        for (id, _) in &ranked {
            session.shown.insert(id.clone());
        }
        session.feedback_rounds_used += 1;
        Ok(ranked)
    }
}
