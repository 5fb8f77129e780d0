//! Vector knowledge store: extraction units, embeddings, exact cosine
//! retrieval and JSON persistence.
//!
//! Ranking is by cosine similarity, descending. Equal scores fall back to
//! ascending `doc_id`, then granularity (summary before qa_pair), then
//! ascending `key_text`, so every ranking is a total order and `top-k` is
//! always a prefix of `top-(k+1)`.

mod extract;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

pub use extract::{
    build_store, extract_qa_pairs, extract_summary, parse_qa_pairs, ChatQaGenerator, ChatSummarizer,
    ExtractionPlan, FixedQaGenerator, HeadSummarizer, QaGenerator, Summarizer,
};

use crate::gateway::{Embedder, GatewayError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("the index is empty")]
    EmptyIndex,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("backend failure for document `{doc_id}`: {source}")]
    Backend {
        doc_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("could not parse extractor output for `{doc_id}`: {message}; raw output: {raw}")]
    Parse {
        doc_id: String,
        message: String,
        raw: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{path}: {message}")]
    Persist { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Summary,
    QaPair,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityFilter {
    #[default]
    Both,
    #[serde(alias = "summary")]
    SummaryOnly,
    #[serde(alias = "qa")]
    QaOnly,
}

impl GranularityFilter {
    pub fn admits(self, g: Granularity) -> bool {
        match self {
            GranularityFilter::Both => true,
            GranularityFilter::SummaryOnly => g == Granularity::Summary,
            GranularityFilter::QaOnly => g == Granularity::QaPair,
        }
    }
}

/// What gets embedded (`key_text`) and what is handed to the model when
/// the unit is retrieved (`payload_text`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionUnit {
    pub doc_id: String,
    pub granularity: Granularity,
    pub key_text: String,
    pub payload_text: String,
}

type UnitKey = (String, Granularity, String);

impl ExtractionUnit {
    fn key(&self) -> UnitKey {
        (self.doc_id.clone(), self.granularity, self.key_text.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingRecord {
    pub unit: ExtractionUnit,
    vector: Vec<f64>,
    norm: f64,
}

fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl EmbeddingRecord {
    pub fn new(unit: ExtractionUnit, vector: Vec<f64>) -> Result<Self, StoreError> {
        if unit.key_text.trim().is_empty() {
            return Err(StoreError::Input(format!("unit of `{}` has empty key text", unit.doc_id)));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(StoreError::Input(format!("non-finite vector for `{}`", unit.doc_id)));
        }
        let norm = euclidean_norm(&vector);
        if norm <= 0.0 {
            return Err(StoreError::Input(format!("zero vector for `{}`", unit.doc_id)));
        }
        Ok(Self { unit, vector, norm })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn unit_vector(&self) -> Vec<f64> {
        self.vector.iter().map(|x| x / self.norm).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalHit {
    pub record: EmbeddingRecord,
    pub score: f64,
}

/// Cosine similarity, clamped to [-1, 1]. `None` if either side is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = euclidean_norm(a);
    let nb = euclidean_norm(b);
    if na == 0.0 || nb == 0.0 || a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum();
    Some(dot.clamp(-1.0, 1.0))
}

fn rank_order(score_a: f64, a: &EmbeddingRecord, score_b: f64, b: &EmbeddingRecord) -> Ordering {
    score_b
        .total_cmp(&score_a)
        .then_with(|| a.unit.doc_id.cmp(&b.unit.doc_id))
        .then_with(|| a.unit.granularity.cmp(&b.unit.granularity))
        .then_with(|| a.unit.key_text.cmp(&b.unit.key_text))
}

/// Nearest-neighbour index over embedding records.
pub trait VectorIndex: Send + Sync {
    fn dimension(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Inserts or replaces the record with the same unit key.
    fn upsert(&mut self, record: EmbeddingRecord) -> Result<(), StoreError>;
    fn search(&self, query: &[f64], k: usize, filter: GranularityFilter) -> Result<Vec<RetrievalHit>, StoreError>;
    /// Records in unit-key order.
    fn records(&self) -> Vec<&EmbeddingRecord>;
}

/// Exhaustive scan over length-normalized vectors.
#[derive(Debug, Clone)]
pub struct ExactIndex {
    dimension: usize,
    entries: BTreeMap<UnitKey, (EmbeddingRecord, Vec<f64>)>,
}

impl ExactIndex {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: BTreeMap::new(),
        }
    }

    fn check_dimension(&self, len: usize) -> Result<(), StoreError> {
        if len != self.dimension {
            return Err(StoreError::Config(format!(
                "vector dimension {len} does not match index dimension {}",
                self.dimension
            )));
        }
        Ok(())
    }
}

impl VectorIndex for ExactIndex {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn upsert(&mut self, record: EmbeddingRecord) -> Result<(), StoreError> {
        self.check_dimension(record.vector.len())?;
        let unit_vec = record.unit_vector();
        self.entries.insert(record.unit.key(), (record, unit_vec));
        Ok(())
    }

    fn search(&self, query: &[f64], k: usize, filter: GranularityFilter) -> Result<Vec<RetrievalHit>, StoreError> {
        if k == 0 {
            return Err(StoreError::Input("k must be at least 1".into()));
        }
        self.check_dimension(query.len())?;
        if self.entries.is_empty() {
            return Err(StoreError::EmptyIndex);
        }
        let qn = euclidean_norm(query);
        if !(qn > 0.0 && qn.is_finite()) {
            return Err(StoreError::Input("query vector has zero or non-finite norm".into()));
        }
        let q: Vec<f64> = query.iter().map(|x| x / qn).collect();
        let mut scored: Vec<(f64, &EmbeddingRecord)> = self
            .entries
            .values()
            .filter(|(r, _)| filter.admits(r.unit.granularity))
            .map(|(r, u)| {
                let dot: f64 = u.iter().zip(&q).map(|(a, b)| a * b).sum();
                (dot.clamp(-1.0, 1.0), r)
            })
            .collect();
        scored.sort_by(|(sa, ra), (sb, rb)| rank_order(*sa, ra, *sb, rb));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, r)| RetrievalHit {
                record: r.clone(),
                score,
            })
            .collect())
    }

    fn records(&self) -> Vec<&EmbeddingRecord> {
        self.entries.values().map(|(r, _)| r).collect()
    }
}

/// Shared knowledge store. Any number of concurrent readers; upserts take
/// the write lock, so a reader sees the index either before or after one.
pub struct KnowledgeStore {
    embedder_id: String,
    index: RwLock<Box<dyn VectorIndex>>,
}

#[derive(Serialize, Deserialize)]
struct PersistedRecord {
    doc_id: String,
    granularity: Granularity,
    key_text: String,
    payload_text: String,
    norm: f64,
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct PersistedIndex {
    format_version: u32,
    dimension: usize,
    count: usize,
    embedder_id: String,
    records: Vec<PersistedRecord>,
}

impl KnowledgeStore {
    pub fn new(dimension: usize, embedder_id: impl Into<String>) -> Self {
        Self::with_index(Box::new(ExactIndex::new(dimension)), embedder_id)
    }

    pub fn with_index(index: Box<dyn VectorIndex>, embedder_id: impl Into<String>) -> Self {
        Self {
            embedder_id: embedder_id.into(),
            index: RwLock::new(index),
        }
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.index.read().unwrap().dimension()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn upsert(&self, record: EmbeddingRecord) -> Result<(), StoreError> {
        self.index.write().unwrap().upsert(record)
    }

    /// Embeds `unit.key_text` and upserts the result.
    pub fn add_unit(&self, unit: ExtractionUnit, embedder: &dyn Embedder) -> Result<(), StoreError> {
        self.check_embedder(embedder)?;
        let doc_id = unit.doc_id.clone();
        let vector = embedder
            .embed(&unit.key_text)
            .map_err(|source| StoreError::Backend { doc_id, source })?;
        self.upsert(EmbeddingRecord::new(unit, vector)?)
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), StoreError> {
        if embedder.id() != self.embedder_id {
            return Err(StoreError::Config(format!(
                "index was built with embedder `{}` but `{}` was supplied",
                self.embedder_id,
                embedder.id()
            )));
        }
        let dim = self.dimension();
        if embedder.dimension() != dim {
            return Err(StoreError::Config(format!(
                "embedder dimension {} does not match index dimension {dim}",
                embedder.dimension()
            )));
        }
        Ok(())
    }

    pub fn retrieve_vector(
        &self,
        query: &[f64],
        k: usize,
        filter: GranularityFilter,
    ) -> Result<Vec<RetrievalHit>, StoreError> {
        self.index.read().unwrap().search(query, k, filter)
    }

    /// Embeds the query with the store's embedder and returns the `k` best hits.
    pub fn retrieve(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
        filter: GranularityFilter,
    ) -> Result<Vec<RetrievalHit>, StoreError> {
        self.check_embedder(embedder)?;
        if self.is_empty() {
            return Err(StoreError::EmptyIndex);
        }
        let q = embedder.embed(query)?;
        self.retrieve_vector(&q, k, filter)
    }

    /// Serializes the store. Header fields come first in a fixed order and
    /// each record sits on its own line, so identical stores produce
    /// identical bytes.
    pub fn to_json(&self) -> String {
        let index = self.index.read().unwrap();
        let records = index.records();
        let mut out = String::new();
        write!(
            out,
            "{{\"format_version\":{FORMAT_VERSION},\"dimension\":{},\"count\":{},\"embedder_id\":{},\"records\":[",
            index.dimension(),
            records.len(),
            serde_json::to_string(&self.embedder_id).unwrap()
        )
        .unwrap();
        for (i, r) in records.iter().enumerate() {
            let persisted = PersistedRecord {
                doc_id: r.unit.doc_id.clone(),
                granularity: r.unit.granularity,
                key_text: r.unit.key_text.clone(),
                payload_text: r.unit.payload_text.clone(),
                norm: r.norm,
                vector: r.vector.clone(),
            };
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            out.push_str(&serde_json::to_string(&persisted).unwrap());
        }
        out.push_str("\n]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        let corrupt = |message: String| StoreError::Persist {
            path: "<index>".into(),
            message,
        };
        let p: PersistedIndex = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        if p.format_version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format_version {}", p.format_version)));
        }
        if p.count != p.records.len() {
            return Err(corrupt(format!("header count {} but {} records", p.count, p.records.len())));
        }
        let store = KnowledgeStore::new(p.dimension, p.embedder_id);
        for r in p.records {
            let record = EmbeddingRecord::new(
                ExtractionUnit {
                    doc_id: r.doc_id,
                    granularity: r.granularity,
                    key_text: r.key_text,
                    payload_text: r.payload_text,
                },
                r.vector,
            )?;
            if record.norm.to_bits() != r.norm.to_bits() {
                return Err(corrupt(format!(
                    "stored norm {} for `{}` disagrees with vector norm {}",
                    r.norm, record.unit.doc_id, record.norm
                )));
            }
            store.upsert(record)?;
        }
        if store.len() != p.count {
            return Err(corrupt("duplicate unit keys in records".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        std::fs::write(path, self.to_json()).map_err(|e| StoreError::Persist {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| StoreError::Persist {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            StoreError::Persist { message, .. } => StoreError::Persist {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }
}
