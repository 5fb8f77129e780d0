use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::corpus::{DocKind, KnowledgeDocument, TemplateId, TemplateSet};
use crate::dialogue::Turn;
use crate::store::RetrievalHit;

/// Joins consecutive parts of an assembled input.
pub const SECTION_SEPARATOR: &str = "\n";

/// Default character budget for serialized dialogue history.
pub const HISTORY_BUDGET_CHARS: usize = 4_000;

/// Knowledge section used when retrieval has nothing to offer.
pub const NO_KNOWLEDGE_MARKER: &str = "No local knowledge found.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartRole {
    Template,
    Report,
    MarketData,
    Knowledge,
    History,
    Query,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPart {
    pub role: PartRole,
    /// Document id (or session turn number) the text came from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub text: String,
}

impl InputPart {
    fn new(role: PartRole, source: Option<String>, text: impl Into<String>) -> Self {
        Self {
            role,
            source,
            text: text.into(),
        }
    }
}

/// A model input together with the provenance of every section.
/// `text` is always the parts joined by [`SECTION_SEPARATOR`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledInput {
    pub stage: Stage,
    pub text: String,
    pub parts: Vec<InputPart>,
}

impl AssembledInput {
    pub fn from_parts(stage: Stage, parts: Vec<InputPart>) -> Self {
        let text = parts
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join(SECTION_SEPARATOR);
        Self { stage, text, parts }
    }

    pub fn parts_with(&self, role: PartRole) -> impl Iterator<Item = &InputPart> {
        self.parts.iter().filter(move |p| p.role == role)
    }
}

/// Stage-1 input: the instruction followed by every report, then every
/// market-data document for the company. Other document kinds are skipped.
pub fn build_stage1_input(
    templates: &TemplateSet,
    company_id: &str,
    docs: &[&KnowledgeDocument],
) -> Result<AssembledInput, GatewayError> {
    if docs.is_empty() {
        return Err(GatewayError::Input(format!("no documents for company `{company_id}`")));
    }
    if let Some(d) = docs.iter().find(|d| !d.company_ids.iter().any(|c| c == company_id)) {
        return Err(GatewayError::Input(format!(
            "document `{}` is not linked to company `{company_id}`",
            d.id
        )));
    }
    let section = |kind: DocKind, role: PartRole| {
        docs.iter()
            .filter(move |d| d.kind == kind)
            .map(move |d| InputPart::new(role, Some(d.id.clone()), d.body.clone()))
    };
    let sections: Vec<InputPart> = section(DocKind::Report, PartRole::Report)
        .chain(section(DocKind::MarketData, PartRole::MarketData))
        .collect();
    if sections.is_empty() {
        return Err(GatewayError::Input(format!(
            "company `{company_id}` has no report or market data documents"
        )));
    }
    let mut parts = vec![InputPart::new(
        PartRole::Template,
        None,
        templates.get(TemplateId::Stage1Prompt).text(),
    )];
    parts.extend(sections);
    Ok(AssembledInput::from_parts(Stage::One, parts))
}

pub(crate) fn serialize_turn(turn: &Turn) -> String {
    format!("User: {}\nAssistant: {}", turn.query, turn.response)
}

/// Stage-2 input: instruction, retrieved knowledge, history (oldest first)
/// and the current query. History is trimmed to `history_budget` characters
/// by dropping whole turns from the oldest end; knowledge and query are
/// never dropped.
pub fn build_stage2_input(
    templates: &TemplateSet,
    knowledge: &[RetrievalHit],
    history: &[Turn],
    query: &str,
    history_budget: usize,
) -> Result<AssembledInput, GatewayError> {
    if query.trim().is_empty() {
        return Err(GatewayError::Input("empty query".into()));
    }
    let mut parts = vec![InputPart::new(
        PartRole::Template,
        None,
        templates.get(TemplateId::Stage2Prompt).text(),
    )];
    if knowledge.is_empty() {
        parts.push(InputPart::new(PartRole::Knowledge, None, NO_KNOWLEDGE_MARKER));
    } else {
        parts.extend(knowledge.iter().map(|hit| {
            InputPart::new(
                PartRole::Knowledge,
                Some(hit.record.unit.doc_id.clone()),
                hit.record.unit.payload_text.clone(),
            )
        }));
    }

    let mut kept = Vec::new();
    let mut used = 0usize;
    for (idx, turn) in history.iter().enumerate().rev() {
        let text = serialize_turn(turn);
        let len = text.chars().count();
        if used + len > history_budget {
            break;
        }
        used += len;
        kept.push(InputPart::new(PartRole::History, Some((idx + 1).to_string()), text));
    }
    kept.reverse();
    parts.extend(kept);

    parts.push(InputPart::new(PartRole::Query, None, query));
    Ok(AssembledInput::from_parts(Stage::Two, parts))
}
