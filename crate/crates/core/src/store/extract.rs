//! Knowledge extraction at document (summary) and entity (QA pair) level.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Deserialize;

use super::{ExtractionUnit, Granularity, KnowledgeStore, StoreError};
use crate::corpus::{DocKind, KnowledgeDocument, TemplateId, TemplateSet};
use crate::gateway::{ChatBackend, Embedder, GatewayError};

pub trait Summarizer: Send + Sync {
    fn id(&self) -> &str;
    fn summarize(&self, body: &str) -> Result<String, GatewayError>;
}

/// Stub summarizer: the first `n` characters of the body.
#[derive(Debug, Clone)]
pub struct HeadSummarizer {
    id: String,
    chars: usize,
}

impl HeadSummarizer {
    pub fn new(chars: usize) -> Self {
        Self {
            id: format!("head:{chars}"),
            chars,
        }
    }
}

impl Summarizer for HeadSummarizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn summarize(&self, body: &str) -> Result<String, GatewayError> {
        Ok(body.chars().take(self.chars).collect())
    }
}

/// Summaries from a chat backend prompted with the news-summary template.
pub struct ChatSummarizer {
    backend: Arc<dyn ChatBackend>,
    templates: TemplateSet,
}

impl ChatSummarizer {
    pub fn new(backend: Arc<dyn ChatBackend>, templates: TemplateSet) -> Self {
        Self { backend, templates }
    }
}

impl Summarizer for ChatSummarizer {
    fn id(&self) -> &str {
        self.backend.id()
    }

    fn summarize(&self, body: &str) -> Result<String, GatewayError> {
        let prompt = self
            .templates
            .render(TemplateId::NewsSummary, &HashMap::from([("document", body)]))
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        self.backend.complete_text(&prompt)
    }
}

/// Produces raw dialogue-generation output, parsed by [`parse_qa_pairs`].
pub trait QaGenerator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, body: &str) -> Result<String, GatewayError>;
}

/// Stub generator that emits the same pairs for every document.
#[derive(Debug, Clone)]
pub struct FixedQaGenerator {
    pairs: Vec<(String, String)>,
}

impl FixedQaGenerator {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        Self { pairs }
    }
}

impl QaGenerator for FixedQaGenerator {
    fn id(&self) -> &str {
        "fixed-qa"
    }

    fn generate(&self, _body: &str) -> Result<String, GatewayError> {
        let arr: Vec<serde_json::Value> = self
            .pairs
            .iter()
            .map(|(q, a)| serde_json::json!({"question": q, "answer": a}))
            .collect();
        Ok(serde_json::Value::Array(arr).to_string())
    }
}

pub struct ChatQaGenerator {
    backend: Arc<dyn ChatBackend>,
    templates: TemplateSet,
}

impl ChatQaGenerator {
    pub fn new(backend: Arc<dyn ChatBackend>, templates: TemplateSet) -> Self {
        Self { backend, templates }
    }
}

impl QaGenerator for ChatQaGenerator {
    fn id(&self) -> &str {
        self.backend.id()
    }

    fn generate(&self, body: &str) -> Result<String, GatewayError> {
        let prompt = self
            .templates
            .render(TemplateId::QaExtraction, &HashMap::from([("document", body)]))
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        self.backend.complete_text(&prompt)
    }
}

fn require_body(doc: &KnowledgeDocument) -> Result<(), StoreError> {
    if doc.body.trim().is_empty() {
        return Err(StoreError::Input(format!("document `{}` has an empty body", doc.id)));
    }
    Ok(())
}

pub fn extract_summary(doc: &KnowledgeDocument, summarizer: &dyn Summarizer) -> Result<ExtractionUnit, StoreError> {
    require_body(doc)?;
    let summary = summarizer.summarize(&doc.body).map_err(|source| StoreError::Backend {
        doc_id: doc.id.clone(),
        source,
    })?;
    if summary.trim().is_empty() {
        return Err(StoreError::Parse {
            doc_id: doc.id.clone(),
            message: "summarizer returned empty text".into(),
            raw: summary,
        });
    }
    Ok(ExtractionUnit {
        doc_id: doc.id.clone(),
        granularity: Granularity::Summary,
        key_text: summary,
        payload_text: doc.body.clone(),
    })
}

#[derive(Deserialize)]
struct RawPair {
    question: String,
    answer: String,
}

/// Parses a JSON array of `{"question", "answer"}` objects, tolerating prose
/// or code fences around the array. Pairs with a blank side are dropped.
pub fn parse_qa_pairs(raw: &str) -> Result<Vec<(String, String)>, String> {
    let (start, end) = match (raw.find('['), raw.rfind(']')) {
        (Some(s), Some(e)) if s < e => (s, e),
        _ => return Err("no JSON array found".into()),
    };
    let pairs: Vec<RawPair> = serde_json::from_str(&raw[start..=end]).map_err(|e| e.to_string())?;
    Ok(pairs
        .into_iter()
        .filter(|p| !p.question.trim().is_empty() && !p.answer.trim().is_empty())
        .map(|p| (p.question, p.answer))
        .collect())
}

pub fn extract_qa_pairs(doc: &KnowledgeDocument, generator: &dyn QaGenerator) -> Result<Vec<ExtractionUnit>, StoreError> {
    require_body(doc)?;
    let raw = generator.generate(&doc.body).map_err(|source| StoreError::Backend {
        doc_id: doc.id.clone(),
        source,
    })?;
    let pairs = parse_qa_pairs(&raw).map_err(|message| StoreError::Parse {
        doc_id: doc.id.clone(),
        message,
        raw: raw.clone(),
    })?;
    Ok(pairs
        .into_iter()
        .map(|(q, a)| ExtractionUnit {
            doc_id: doc.id.clone(),
            granularity: Granularity::QaPair,
            key_text: q,
            payload_text: a,
        })
        .collect())
}

/// Which extraction strategies run when building a store, and over which
/// document kinds.
pub struct ExtractionPlan<'a> {
    pub summarizer: Option<&'a dyn Summarizer>,
    pub qa_generator: Option<&'a dyn QaGenerator>,
    pub kinds: Vec<DocKind>,
}

impl<'a> ExtractionPlan<'a> {
    /// Everything except the stock Q&A training samples.
    pub fn default_kinds() -> Vec<DocKind> {
        vec![DocKind::Report, DocKind::MarketData, DocKind::News, DocKind::Research]
    }
}

/// Extracts, embeds and indexes every document admitted by `plan`.
pub fn build_store<'d>(
    docs: impl IntoIterator<Item = &'d KnowledgeDocument>,
    plan: &ExtractionPlan<'_>,
    embedder: &dyn Embedder,
) -> Result<KnowledgeStore, StoreError> {
    if plan.summarizer.is_none() && plan.qa_generator.is_none() {
        return Err(StoreError::Config("no extraction strategy selected".into()));
    }
    let store = KnowledgeStore::new(embedder.dimension(), embedder.id());
    for doc in docs.into_iter().filter(|d| plan.kinds.contains(&d.kind)) {
        if let Some(s) = plan.summarizer {
            store.add_unit(extract_summary(doc, s)?, embedder)?;
        }
        if let Some(g) = plan.qa_generator {
            for unit in extract_qa_pairs(doc, g)? {
                store.add_unit(unit, embedder)?;
            }
        }
    }
    Ok(store)
}
