//! Corpus ingestion, validation and report/price alignment.
//!
//! The on-disk format is one JSON object per line:
//!
//! ```text
//! {"id": str, "kind": str, "body": str, "company_ids": [str], "published_at": "YYYY-MM-DD",
//!  "market_value": number?, "prices": [{"month": "YYYY-MM", "close": number}]?, "label": str?}
//! ```
//!
//! `market_value` and `prices` attach to the record's single company. The
//! optional `label` is the supervised target text and only feeds the
//! label-length statistic.

mod month;
pub mod template;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use month::{Month, MonthParseError};
pub use template::{render_template, Template, TemplateError, TemplateId, TemplateSet};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: invalid record: {message}")]
    Invalid { line: usize, message: String },
    #[error("price coverage: company `{company_id}` has no close for {month}")]
    Coverage { company_id: String, month: Month },
    #[error("document `{0}` is not a report")]
    NotAReport(String),
    #[error("invalid price series for `{company_id}`: {message}")]
    InvalidSeries { company_id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Report,
    News,
    MarketData,
    Research,
    StockQa,
}

impl DocKind {
    pub const ALL: [DocKind; 5] = [
        DocKind::Report,
        DocKind::News,
        DocKind::MarketData,
        DocKind::Research,
        DocKind::StockQa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::Report => "report",
            DocKind::News => "news",
            DocKind::MarketData => "market_data",
            DocKind::Research => "research",
            DocKind::StockQa => "stock_qa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        DocKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Company {
    pub id: String,
    pub name: String,
    pub market_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeDocument {
    pub id: String,
    pub kind: DocKind,
    pub body: String,
    pub company_ids: Vec<String>,
    pub published_at: NaiveDate,
}

impl KnowledgeDocument {
    pub fn month(&self) -> Month {
        Month::of_date(self.published_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub month: Month,
    pub close: f64,
}

/// Monthly closes for one company, strictly increasing in month.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSeries {
    company_id: String,
    points: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn new(company_id: impl Into<String>, mut points: Vec<PricePoint>) -> Result<Self, CorpusError> {
        let company_id = company_id.into();
        let invalid = |message: String| CorpusError::InvalidSeries {
            company_id: company_id.clone(),
            message,
        };
        points.sort_by_key(|p| p.month);
        for w in points.windows(2) {
            if w[0].month == w[1].month {
                return Err(invalid(format!("duplicate month {}", w[0].month)));
            }
        }
        if let Some(p) = points.iter().find(|p| !(p.close > 0.0 && p.close.is_finite())) {
            return Err(invalid(format!("non-positive close {} at {}", p.close, p.month)));
        }
        Ok(Self { company_id, points })
    }

    pub fn company_id(&self) -> &str {
        &self.company_id
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn close(&self, month: Month) -> Option<f64> {
        self.points
            .binary_search_by_key(&month, |p| p.month)
            .ok()
            .map(|i| self.points[i].close)
    }

    /// `close(m+1)/close(m) - 1`, or a coverage error naming the missing month.
    pub fn next_month_return(&self, month: Month) -> Result<f64, CorpusError> {
        let coverage = |m| CorpusError::Coverage {
            company_id: self.company_id.clone(),
            month: m,
        };
        let now = self.close(month).ok_or_else(|| coverage(month))?;
        let next = self.close(month.succ()).ok_or_else(|| coverage(month.succ()))?;
        Ok(next / now - 1.0)
    }

    /// Merges `other` into this series; a month present in both must agree.
    fn merge(&mut self, other: &[PricePoint]) -> Result<(), String> {
        for p in other {
            match self.points.binary_search_by_key(&p.month, |q| q.month) {
                Ok(i) if self.points[i].close == p.close => {}
                Ok(i) => {
                    return Err(format!(
                        "conflicting close for {} {}: {} vs {}",
                        self.company_id, p.month, self.points[i].close, p.close
                    ))
                }
                Err(i) => self.points.insert(i, *p),
            }
        }
        Ok(())
    }
}

/// Up/down supervision label for a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendLabel {
    Up,
    Down,
}

impl TrendLabel {
    /// Up requires a strictly positive return; a flat month is Down.
    pub fn from_return(r: f64) -> Self {
        if r > 0.0 {
            TrendLabel::Up
        } else {
            TrendLabel::Down
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrendLabel::Up => "up",
            TrendLabel::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedSample {
    pub document: KnowledgeDocument,
    pub as_of_month: Month,
    pub label: TrendLabel,
    pub next_month_return: f64,
}

/// Aligns a report with the price move of its company over the following month.
pub fn align_report_with_price(
    report: &KnowledgeDocument,
    prices: &PriceSeries,
) -> Result<AlignedSample, CorpusError> {
    if report.kind != DocKind::Report {
        return Err(CorpusError::NotAReport(report.id.clone()));
    }
    let as_of_month = report.month();
    let next_month_return = prices.next_month_return(as_of_month)?;
    Ok(AlignedSample {
        document: report.clone(),
        as_of_month,
        label: TrendLabel::from_return(next_month_return),
        next_month_return,
    })
}

/// One corpus line, in the field order used when writing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub kind: DocKind,
    pub body: String,
    #[serde(default)]
    pub company_ids: Vec<String>,
    pub published_at: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<Vec<PricePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    kind: String,
    body: String,
    #[serde(default)]
    company_ids: Vec<String>,
    published_at: String,
    #[serde(default)]
    market_value: Option<f64>,
    #[serde(default)]
    prices: Option<Vec<RawPrice>>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Deserialize)]
struct RawPrice {
    month: String,
    close: f64,
}

impl RawRecord {
    fn validate(self, line: usize) -> Result<CorpusRecord, CorpusError> {
        let invalid = |message: String| CorpusError::Invalid { line, message };
        let kind = DocKind::parse(&self.kind).ok_or_else(|| CorpusError::UnknownKind {
            line,
            kind: self.kind.clone(),
        })?;
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.body.trim().is_empty() {
            return Err(invalid(format!("record `{}` has an empty body", self.id)));
        }
        let published_at = NaiveDate::parse_from_str(&self.published_at, "%Y-%m-%d")
            .map_err(|e| invalid(format!("published_at `{}`: {e}", self.published_at)))?;
        let single_company = || {
            if self.company_ids.len() == 1 {
                Ok(())
            } else {
                Err(invalid(format!(
                    "record `{}` carries market data but has {} company ids (expected 1)",
                    self.id,
                    self.company_ids.len()
                )))
            }
        };
        if let Some(v) = self.market_value {
            single_company()?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("market_value must be positive, got {v}")));
            }
        }
        let prices = match self.prices {
            None => None,
            Some(raw) => {
                single_company()?;
                let mut points = Vec::with_capacity(raw.len());
                for p in raw {
                    let month = p.month.parse().map_err(|e: MonthParseError| invalid(e.to_string()))?;
                    points.push(PricePoint { month, close: p.close });
                }
                // validates ordering and positivity
                PriceSeries::new(self.company_ids[0].clone(), points.clone())
                    .map_err(|e| invalid(e.to_string()))?;
                Some(points)
            }
        };
        Ok(CorpusRecord {
            id: self.id,
            kind,
            body: self.body,
            company_ids: self.company_ids,
            published_at,
            market_value: self.market_value,
            prices,
            label: self.label,
        })
    }
}

/// Per-kind inventory. Lengths are counted in Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub count: usize,
    pub mean_input_len: f64,
    pub mean_label_len: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub length_unit: String,
    pub per_kind: BTreeMap<DocKind, KindStats>,
    pub mean_input_len: f64,
    pub mean_label_len: Option<f64>,
}

impl CorpusStats {
    pub fn count(&self, kind: DocKind) -> usize {
        self.per_kind.get(&kind).map_or(0, |k| k.count)
    }

    fn from_records(records: &[CorpusRecord]) -> Self {
        fn mean(xs: &[usize]) -> Option<f64> {
            (!xs.is_empty()).then(|| xs.iter().sum::<usize>() as f64 / xs.len() as f64)
        }
        let summarize = |rs: &[&CorpusRecord]| {
            let inputs: Vec<usize> = rs.iter().map(|r| r.body.chars().count()).collect();
            let labels: Vec<usize> = rs
                .iter()
                .filter_map(|r| r.label.as_ref().map(|l| l.chars().count()))
                .collect();
            KindStats {
                count: rs.len(),
                mean_input_len: mean(&inputs).unwrap_or(0.0),
                mean_label_len: mean(&labels),
            }
        };
        let per_kind = DocKind::ALL
            .into_iter()
            .map(|k| {
                let rs: Vec<&CorpusRecord> = records.iter().filter(|r| r.kind == k).collect();
                (k, summarize(&rs))
            })
            .collect();
        let all: Vec<&CorpusRecord> = records.iter().collect();
        let overall = summarize(&all);
        CorpusStats {
            total: records.len(),
            length_unit: "chars".into(),
            per_kind,
            mean_input_len: overall.mean_input_len,
            mean_label_len: overall.mean_label_len,
        }
    }
}

/// Companies with a known market value and their monthly closes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketData {
    pub companies: BTreeMap<String, Company>,
    pub prices: BTreeMap<String, PriceSeries>,
}

impl MarketData {
    pub fn series(&self, company_id: &str) -> Option<&PriceSeries> {
        self.prices.get(company_id)
    }

    /// Ground-truth label for `company_id` in `month`.
    pub fn label(&self, company_id: &str, month: Month) -> Result<TrendLabel, CorpusError> {
        let series = self.prices.get(company_id).ok_or_else(|| CorpusError::Coverage {
            company_id: company_id.to_string(),
            month,
        })?;
        series.next_month_return(month).map(TrendLabel::from_return)
    }

    /// Reads the standalone price file: one JSON object per line,
    /// `{"company_id": str, "market_value": number, "prices": [{"month","close"}]}`.
    pub fn load_price_file(path: &Path) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct Line {
            company_id: String,
            market_value: f64,
            #[serde(default)]
            prices: Vec<RawPrice>,
        }
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let mut market = MarketData::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| CorpusError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Line = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
            let invalid = |message: String| CorpusError::Invalid { line: lineno, message };
            if !(rec.market_value > 0.0 && rec.market_value.is_finite()) {
                return Err(invalid(format!("market_value must be positive, got {}", rec.market_value)));
            }
            let mut points = Vec::with_capacity(rec.prices.len());
            for p in rec.prices {
                let month = p.month.parse().map_err(|e: MonthParseError| invalid(e.to_string()))?;
                points.push(PricePoint { month, close: p.close });
            }
            if market.companies.contains_key(&rec.company_id) {
                return Err(invalid(format!("duplicate company `{}`", rec.company_id)));
            }
            let series = PriceSeries::new(rec.company_id.clone(), points).map_err(|e| invalid(e.to_string()))?;
            market.companies.insert(
                rec.company_id.clone(),
                Company {
                    id: rec.company_id.clone(),
                    name: rec.company_id.clone(),
                    market_value: rec.market_value,
                },
            );
            market.prices.insert(rec.company_id, series);
        }
        Ok(market)
    }

    pub fn write_price_file(&self, path: &Path) -> Result<(), CorpusError> {
        #[derive(Serialize)]
        struct Line<'a> {
            company_id: &'a str,
            market_value: f64,
            prices: &'a [PricePoint],
        }
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, company) in &self.companies {
            let prices = self.prices.get(id).map(|s| s.points()).unwrap_or(&[]);
            let line = serde_json::to_string(&Line {
                company_id: id,
                market_value: company.market_value,
                prices,
            })
            .expect("price line serializes");
            writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
        }
        w.flush().map_err(|e| CorpusError::io(path, e))
    }
}

/// An immutable, validated corpus snapshot.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<CorpusRecord>,
    documents: Vec<KnowledgeDocument>,
    market: MarketData,
}

impl Corpus {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_reader(BufReader::new(file)).map_err(|e| match e {
            CorpusError::Io { source, .. } => CorpusError::io(path, source),
            other => other,
        })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: "<reader>".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
            records.push(raw.validate(lineno)?);
        }
        Self::from_records(records)
    }

    pub fn from_records(records: Vec<CorpusRecord>) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        let mut market = MarketData::default();
        // latest published_at wins for market value; later lines break ties
        let mut value_dates: BTreeMap<String, NaiveDate> = BTreeMap::new();
        for (idx, r) in records.iter().enumerate() {
            let line = idx + 1;
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::Invalid {
                    line,
                    message: format!("duplicate id `{}`", r.id),
                });
            }
            if let Some(v) = r.market_value {
                let cid = &r.company_ids[0];
                if value_dates.get(cid).map_or(true, |d| r.published_at >= *d) {
                    value_dates.insert(cid.clone(), r.published_at);
                    market.companies.insert(
                        cid.clone(),
                        Company {
                            id: cid.clone(),
                            name: cid.clone(),
                            market_value: v,
                        },
                    );
                }
            }
            if let Some(points) = &r.prices {
                let cid = &r.company_ids[0];
                let series = market
                    .prices
                    .entry(cid.clone())
                    .or_insert_with(|| PriceSeries {
                        company_id: cid.clone(),
                        points: Vec::new(),
                    });
                series
                    .merge(points)
                    .map_err(|message| CorpusError::Invalid { line, message })?;
            }
        }
        let documents = records
            .iter()
            .map(|r| KnowledgeDocument {
                id: r.id.clone(),
                kind: r.kind,
                body: r.body.clone(),
                company_ids: r.company_ids.clone(),
                published_at: r.published_at,
            })
            .collect();
        Ok(Self {
            records,
            documents,
            market,
        })
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats::from_records(&self.records)
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn documents(&self) -> &[KnowledgeDocument] {
        &self.documents
    }

    pub fn document(&self, id: &str) -> Option<&KnowledgeDocument> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn market(&self) -> &MarketData {
        &self.market
    }

    /// Exact company join: reports and market data for `company_id`
    /// published in `month`, reports first, each group in corpus order.
    pub fn stage1_documents(&self, company_id: &str, month: Month) -> Vec<&KnowledgeDocument> {
        let matching = |kind: DocKind| {
            self.documents.iter().filter(move |d| {
                d.kind == kind && d.month() == month && d.company_ids.iter().any(|c| c == company_id)
            })
        };
        matching(DocKind::Report).chain(matching(DocKind::MarketData)).collect()
    }

    /// Every (month, company) pair that has at least one report or market
    /// data document, sorted.
    pub fn prediction_targets(&self) -> Vec<(Month, String)> {
        let mut targets: Vec<(Month, String)> = self
            .documents
            .iter()
            .filter(|d| matches!(d.kind, DocKind::Report | DocKind::MarketData))
            .flat_map(|d| d.company_ids.iter().map(move |c| (d.month(), c.clone())))
            .collect();
        targets.sort();
        targets.dedup();
        targets
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
        }
        w.flush().map_err(|e| CorpusError::io(path, e))
    }
}

/// Loads a corpus file and returns its inventory.
pub fn ingest_corpus(path: &Path) -> Result<CorpusStats, CorpusError> {
    Corpus::load(path).map(|c| c.stats())
}
