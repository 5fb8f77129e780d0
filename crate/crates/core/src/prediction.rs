//! Stage-1 post-processing: direction and probability extraction from model
//! responses, the monthly chosen set and prediction accuracy.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Month, TemplateSet, TrendLabel};
use crate::gateway::{build_stage1_input, complete, ChatBackend, GatewayError};

#[derive(Debug, thiserror::Error)]
pub enum PredictionError {
    #[error("company `{company_id}` appears more than once in {month}")]
    Duplicate { company_id: String, month: Month },
    #[error("prediction for `{company_id}` is for {found}, expected {expected}")]
    WrongMonth {
        company_id: String,
        found: Month,
        expected: Month,
    },
    #[error("no label for `{company_id}` in {month}")]
    MissingLabel { company_id: String, month: Month },
    #[error("accuracy of an empty prediction set is undefined")]
    NoPredictions,
    #[error("prediction for `{company_id}` in {month}: {source}")]
    Backend {
        company_id: String,
        month: Month,
        #[source]
        source: GatewayError,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Invalid,
}

impl Direction {
    pub fn matches(self, label: TrendLabel) -> bool {
        matches!(
            (self, label),
            (Direction::Up, TrendLabel::Up) | (Direction::Down, TrendLabel::Down)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbCategory {
    VeryLarge,
    Large,
    MediumToUpper,
    Average,
}

/// Direction keywords. ASCII keywords match case-insensitively on word
/// boundaries; other keywords match as plain substrings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionLexicon {
    pub up: Vec<String>,
    pub down: Vec<String>,
}

impl Default for DirectionLexicon {
    fn default() -> Self {
        Self {
            up: vec!["up".into(), "上涨".into()],
            down: vec!["down".into(), "下跌".into()],
        }
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Byte offset of the first occurrence of `needle` in `haystack`, honouring
/// the lexicon's matching rules. `haystack_lower` is the ASCII-lowercased
/// haystack (same byte offsets).
fn find_keyword(haystack: &str, haystack_lower: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    if !needle.is_ascii() {
        return haystack.find(needle);
    }
    let needle = needle.to_ascii_lowercase();
    let bytes = haystack_lower.as_bytes();
    let mut from = 0;
    while let Some(pos) = haystack_lower[from..].find(&needle) {
        let start = from + pos;
        let end = start + needle.len();
        let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
        let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
        if left_ok && right_ok {
            return Some(start);
        }
        from = start + 1;
        while !haystack_lower.is_char_boundary(from) {
            from += 1;
        }
    }
    None
}

fn contains_any(response: &str, lower: &str, keywords: &[String]) -> bool {
    keywords.iter().any(|k| find_keyword(response, lower, k).is_some())
}

/// Up if any up keyword occurs; otherwise down if any down keyword occurs;
/// otherwise invalid.
pub fn parse_direction(response: &str, lexicon: &DirectionLexicon) -> Direction {
    let lower = response.to_ascii_lowercase();
    if contains_any(response, &lower, &lexicon.up) {
        Direction::Up
    } else if contains_any(response, &lower, &lexicon.down) {
        Direction::Down
    } else {
        Direction::Invalid
    }
}

const PROBABILITY_MARKERS: [&str; 2] = ["probability", "概率"];

const PROB_PHRASES: [(&str, ProbCategory); 8] = [
    ("very large", ProbCategory::VeryLarge),
    ("large", ProbCategory::Large),
    ("medium to upper", ProbCategory::MediumToUpper),
    ("average", ProbCategory::Average),
    ("很大", ProbCategory::VeryLarge),
    ("较大", ProbCategory::Large),
    ("中等偏上", ProbCategory::MediumToUpper),
    ("一般", ProbCategory::Average),
];

/// The first category phrase after the first probability marker.
pub fn parse_probability(response: &str) -> Option<ProbCategory> {
    let lower = response.to_ascii_lowercase();
    let marker_end = PROBABILITY_MARKERS
        .iter()
        .filter_map(|m| find_keyword(response, &lower, m).map(|p| p + m.len()))
        .min()?;
    let tail = &response[marker_end..];
    let tail_lower = &lower[marker_end..];
    PROB_PHRASES
        .iter()
        .filter_map(|(phrase, cat)| find_keyword(tail, tail_lower, phrase).map(|p| (p, std::cmp::Reverse(phrase.len()), *cat)))
        .min_by_key(|(p, len, _)| (*p, *len))
        .map(|(_, _, cat)| cat)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendPrediction {
    pub company_id: String,
    pub month: Month,
    pub direction: Direction,
    pub prob_category: Option<ProbCategory>,
    pub raw_response: String,
}

impl TrendPrediction {
    pub fn from_response(
        company_id: impl Into<String>,
        month: Month,
        raw_response: impl Into<String>,
        lexicon: &DirectionLexicon,
    ) -> Self {
        let raw_response = raw_response.into();
        Self {
            company_id: company_id.into(),
            month,
            direction: parse_direction(&raw_response, lexicon),
            prob_category: parse_probability(&raw_response),
            raw_response,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChosenSet {
    pub month: Month,
    pub company_ids: BTreeSet<String>,
}

impl ChosenSet {
    pub fn empty(month: Month) -> Self {
        Self {
            month,
            company_ids: BTreeSet::new(),
        }
    }
}

/// Companies predicted up in `month`. Down and invalid predictions are
/// left out.
pub fn select_chosen(predictions: &[TrendPrediction], month: Month) -> Result<ChosenSet, PredictionError> {
    let mut seen = HashSet::new();
    let mut chosen = ChosenSet::empty(month);
    for p in predictions {
        if p.month != month {
            return Err(PredictionError::WrongMonth {
                company_id: p.company_id.clone(),
                found: p.month,
                expected: month,
            });
        }
        if !seen.insert(p.company_id.as_str()) {
            return Err(PredictionError::Duplicate {
                company_id: p.company_id.clone(),
                month,
            });
        }
        if p.direction == Direction::Up {
            chosen.company_ids.insert(p.company_id.clone());
        }
    }
    Ok(chosen)
}

/// Chosen sets for every month present in `predictions`.
pub fn chosen_by_month(predictions: &[TrendPrediction]) -> Result<BTreeMap<Month, ChosenSet>, PredictionError> {
    let mut by_month: BTreeMap<Month, Vec<TrendPrediction>> = BTreeMap::new();
    for p in predictions {
        by_month.entry(p.month).or_default().push(p.clone());
    }
    by_month
        .into_iter()
        .map(|(m, ps)| select_chosen(&ps, m).map(|c| (m, c)))
        .collect()
}

/// Fraction of predictions whose direction equals the label. Invalid
/// predictions count as wrong.
pub fn accuracy(
    predictions: &[TrendPrediction],
    labels: &BTreeMap<(String, Month), TrendLabel>,
) -> Result<f64, PredictionError> {
    if predictions.is_empty() {
        return Err(PredictionError::NoPredictions);
    }
    let mut correct = 0usize;
    for p in predictions {
        let label = labels
            .get(&(p.company_id.clone(), p.month))
            .ok_or_else(|| PredictionError::MissingLabel {
                company_id: p.company_id.clone(),
                month: p.month,
            })?;
        if p.direction.matches(*label) {
            correct += 1;
        }
    }
    Ok(correct as f64 / predictions.len() as f64)
}

/// Runs stage 1 over every (month, company) target in the corpus, in
/// month-then-company order, optionally restricted to an inclusive window.
pub fn predict_corpus(
    corpus: &Corpus,
    backend: &dyn ChatBackend,
    templates: &TemplateSet,
    lexicon: &DirectionLexicon,
    window: Option<(Month, Month)>,
) -> Result<Vec<TrendPrediction>, PredictionError> {
    let mut out = Vec::new();
    for (month, company_id) in corpus.prediction_targets() {
        if let Some((start, end)) = window {
            if month < start || month > end {
                continue;
            }
        }
        let docs = corpus.stage1_documents(&company_id, month);
        let wrap = |source| PredictionError::Backend {
            company_id: company_id.clone(),
            month,
            source,
        };
        let input = build_stage1_input(templates, &company_id, &docs).map_err(wrap)?;
        let response = complete(&input, backend).map_err(wrap)?;
        out.push(TrendPrediction::from_response(company_id.clone(), month, response, lexicon));
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, predictions: &[TrendPrediction]) -> Result<(), PredictionError> {
    let io = |source| PredictionError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for p in predictions {
        writeln!(w, "{}", serde_json::to_string(p).expect("prediction serializes")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_predictions(path: &Path) -> Result<Vec<TrendPrediction>, PredictionError> {
    let io = |source| PredictionError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PredictionError::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
