//! ROUGE scoring, output statistics and the pairwise preference harness.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{TemplateId, TemplateSet};
use crate::gateway::{ChatBackend, GatewayError};
use crate::prediction::{parse_direction, Direction, DirectionLexicon};
use crate::text::{tokenize, TokenScheme};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("judge output has no single verdict marker: {raw}")]
    JudgeFormat { raw: String },
    #[error(transparent)]
    Judge(#[from] GatewayError),
    #[error("item `{item_id}`: {source}")]
    Item {
        item_id: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 3] = [RougeVariant::Rouge1, RougeVariant::Rouge2, RougeVariant::RougeL];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub variant: RougeVariant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn new(variant: RougeVariant, precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            variant,
            precision,
            recall,
            f1,
        }
    }

    fn zero(variant: RougeVariant) -> Self {
        Self::new(variant, 0.0, 0.0)
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Longest common subsequence length.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Scores pre-tokenized text. When neither side has an n-gram of the
/// requested order, the score is 1 for identical token sequences and 0
/// otherwise.
pub fn rouge_tokens(candidate: &[String], reference: &[String], variant: RougeVariant) -> Result<RougeScore, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(RougeScore::zero(variant));
    }
    let (overlap, cand_total, ref_total) = match variant {
        RougeVariant::RougeL => (lcs_len(candidate, reference), candidate.len(), reference.len()),
        RougeVariant::Rouge1 | RougeVariant::Rouge2 => {
            let n = if variant == RougeVariant::Rouge1 { 1 } else { 2 };
            let c = ngram_counts(candidate, n);
            let r = ngram_counts(reference, n);
            let overlap = c.iter().map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0))).sum();
            (overlap, candidate.len().saturating_sub(n - 1), reference.len().saturating_sub(n - 1))
        }
    };
    if cand_total == 0 || ref_total == 0 {
        let same = cand_total == 0 && ref_total == 0 && candidate == reference;
        let v = if same { 1.0 } else { 0.0 };
        return Ok(RougeScore::new(variant, v, v));
    }
    Ok(RougeScore::new(
        variant,
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    ))
}

pub fn rouge(candidate: &str, reference: &str, variant: RougeVariant, scheme: TokenScheme) -> Result<RougeScore, EvalError> {
    rouge_tokens(&tokenize(candidate, scheme), &tokenize(reference, scheme), variant)
}

pub fn rouge_all(candidate: &str, reference: &str, scheme: TokenScheme) -> Result<[RougeScore; 3], EvalError> {
    let c = tokenize(candidate, scheme);
    let r = tokenize(reference, scheme);
    Ok([
        rouge_tokens(&c, &r, RougeVariant::Rouge1)?,
        rouge_tokens(&c, &r, RougeVariant::Rouge2)?,
        rouge_tokens(&c, &r, RougeVariant::RougeL)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputStats {
    pub avg_len: f64,
    pub na_ratio: f64,
}

/// Mean character count and share of invalid directions.
pub fn output_stats(responses: &[(String, Direction)]) -> OutputStats {
    if responses.is_empty() {
        return OutputStats {
            avg_len: 0.0,
            na_ratio: 0.0,
        };
    }
    let n = responses.len() as f64;
    let chars: usize = responses.iter().map(|(t, _)| t.chars().count()).sum();
    let invalid = responses.iter().filter(|(_, d)| *d == Direction::Invalid).count();
    OutputStats {
        avg_len: chars as f64 / n,
        na_ratio: invalid as f64 / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Tie,
    Lose,
}

impl Outcome {
    pub fn flipped(self) -> Self {
        match self {
            Outcome::Win => Outcome::Lose,
            Outcome::Lose => Outcome::Win,
            Outcome::Tie => Outcome::Tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceVerdict {
    pub item_id: String,
    pub outcome: Outcome,
    pub judge_id: String,
}

pub trait Judge: Send + Sync {
    fn id(&self) -> &str;
    /// Raw judge output comparing `first` (shown as A) with `second` (B).
    fn judge_raw(&self, prompt: &str, first: &str, second: &str) -> Result<String, GatewayError>;
}

/// Judge backed by a chat model and the pairwise-judge template.
pub struct BackendJudge {
    backend: Arc<dyn ChatBackend>,
    templates: TemplateSet,
}

impl BackendJudge {
    pub fn new(backend: Arc<dyn ChatBackend>, templates: TemplateSet) -> Self {
        Self { backend, templates }
    }
}

impl Judge for BackendJudge {
    fn id(&self) -> &str {
        self.backend.id()
    }

    fn judge_raw(&self, prompt: &str, first: &str, second: &str) -> Result<String, GatewayError> {
        let text = self
            .templates
            .render(
                TemplateId::PairwiseJudge,
                &HashMap::from([("prompt", prompt), ("response_a", first), ("response_b", second)]),
            )
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        self.backend.complete_text(&text)
    }
}

type JudgeFn = dyn Fn(&str, &str, &str) -> String + Send + Sync;

pub struct FnJudge {
    id: String,
    f: Box<JudgeFn>,
}

impl FnJudge {
    pub fn new(id: impl Into<String>, f: impl Fn(&str, &str, &str) -> String + Send + Sync + 'static) -> Self {
        Self {
            id: id.into(),
            f: Box::new(f),
        }
    }

    /// Prefers the longer response, ties on equal character counts.
    pub fn prefer_longer() -> Self {
        Self::new("prefer-longer", |_, a, b| {
            match a.chars().count().cmp(&b.chars().count()) {
                std::cmp::Ordering::Greater => "[[A]]",
                std::cmp::Ordering::Less => "[[B]]",
                std::cmp::Ordering::Equal => "[[TIE]]",
            }
            .to_string()
        })
    }
}

impl Judge for FnJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn judge_raw(&self, prompt: &str, first: &str, second: &str) -> Result<String, GatewayError> {
        Ok((self.f)(prompt, first, second))
    }
}

/// Reads the verdict for the response shown first: `[[A]]` → win,
/// `[[B]]` → lose, `[[TIE]]` → tie. Output naming more than one verdict,
/// or none, is rejected.
pub fn parse_verdict(raw: &str) -> Result<Outcome, EvalError> {
    let found: Vec<Outcome> = [("[[A]]", Outcome::Win), ("[[B]]", Outcome::Lose), ("[[TIE]]", Outcome::Tie)]
        .into_iter()
        .filter(|(m, _)| raw.contains(m))
        .map(|(_, o)| o)
        .collect();
    match found.as_slice() {
        [one] => Ok(*one),
        _ => Err(EvalError::JudgeFormat { raw: raw.to_string() }),
    }
}

/// Asks the judge twice with the responses in both orders; verdicts that
/// disagree become a tie.
pub fn pairwise_judge(
    item_id: &str,
    prompt: &str,
    response_a: &str,
    response_b: &str,
    judge: &dyn Judge,
) -> Result<PreferenceVerdict, EvalError> {
    let forward = parse_verdict(&judge.judge_raw(prompt, response_a, response_b)?)?;
    let backward = parse_verdict(&judge.judge_raw(prompt, response_b, response_a)?)?.flipped();
    let outcome = if forward == backward { forward } else { Outcome::Tie };
    Ok(PreferenceVerdict {
        item_id: item_id.to_string(),
        outcome,
        judge_id: judge.id().to_string(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSummary {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub win_rate: f64,
}

impl PreferenceSummary {
    pub fn from_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a PreferenceVerdict>) -> Self {
        let mut s = Self::default();
        for v in verdicts {
            match v.outcome {
                Outcome::Win => s.wins += 1,
                Outcome::Tie => s.ties += 1,
                Outcome::Lose => s.losses += 1,
            }
        }
        let total = s.wins + s.ties + s.losses;
        if total > 0 {
            s.win_rate = s.wins as f64 / total as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub response_a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_b: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<EvalItem>, EvalError> {
    let io = |e: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| EvalError::Manifest {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge: Option<[RougeScore; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregates {
    pub items: usize,
    pub mean_rouge: BTreeMap<RougeVariant, RougeMeans>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preference: Option<PreferenceSummary>,
    pub output: OutputStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeMeans {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_id: Option<String>,
    pub rows: Vec<ItemResult>,
    pub aggregates: EvalAggregates,
}

/// Runs `f` over `items` on up to `parallelism` threads, preserving order.
fn parallel_map<T: Sync, R: Send>(items: &[T], parallelism: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..parallelism.max(1).min(items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// Scores `response_a` against `reference` where present and, given a
/// judge, compares `response_a` (the candidate) with `response_b`.
pub fn run_eval(
    items: &[EvalItem],
    judge: Option<&dyn Judge>,
    scheme: TokenScheme,
    parallelism: usize,
) -> Result<EvalResults, EvalError> {
    let wrap = |item_id: &str, e: EvalError| EvalError::Item {
        item_id: item_id.to_string(),
        source: Box::new(e),
    };
    let verdicts: Vec<Option<Result<PreferenceVerdict, EvalError>>> = match judge {
        Some(j) => parallel_map(items, parallelism, |item| {
            item.response_b
                .as_ref()
                .map(|b| pairwise_judge(&item.item_id, &item.prompt, &item.response_a, b, j))
        }),
        None => items.iter().map(|_| None).collect(),
    };
    let mut rows = Vec::with_capacity(items.len());
    let mut sums: BTreeMap<RougeVariant, (f64, f64, f64, usize)> = BTreeMap::new();
    let mut judged = Vec::new();
    for (item, verdict) in items.iter().zip(verdicts) {
        let rouge = match &item.reference {
            Some(r) => Some(rouge_all(&item.response_a, r, scheme).map_err(|e| wrap(&item.item_id, e))?),
            None => None,
        };
        for s in rouge.iter().flatten() {
            let e = sums.entry(s.variant).or_default();
            e.0 += s.precision;
            e.1 += s.recall;
            e.2 += s.f1;
            e.3 += 1;
        }
        let verdict = verdict.transpose().map_err(|e| wrap(&item.item_id, e))?;
        rows.push(ItemResult {
            item_id: item.item_id.clone(),
            rouge,
            verdict: verdict.as_ref().map(|v| v.outcome),
        });
        judged.extend(verdict);
    }
    let mean_rouge = sums
        .into_iter()
        .map(|(v, (p, r, f, n))| {
            let n = n as f64;
            (
                v,
                RougeMeans {
                    precision: p / n,
                    recall: r / n,
                    f1: f / n,
                },
            )
        })
        .collect();
    let lexicon = DirectionLexicon::default();
    let outputs: Vec<(String, Direction)> = items
        .iter()
        .map(|i| (i.response_a.clone(), parse_direction(&i.response_a, &lexicon)))
        .collect();
    Ok(EvalResults {
        judge_id: judge.map(|j| j.id().to_string()),
        aggregates: EvalAggregates {
            items: items.len(),
            mean_rouge,
            preference: judge.map(|_| PreferenceSummary::from_verdicts(&judged)),
            output: output_stats(&outputs),
        },
        rows,
    })
}
