//! Monthly long-only strategy over the chosen sets, cap-weighted, with the
//! accumulated-return curve and its performance metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Company, CorpusError, MarketData, Month, TrendLabel};
use crate::gateway::digest;
use crate::prediction::{accuracy, chosen_by_month, ChosenSet, PredictionError, TrendPrediction};

#[derive(Debug, thiserror::Error)]
pub enum BacktestError {
    #[error("cannot weight an empty portfolio")]
    EmptyPortfolio,
    #[error("company `{0}` has a non-positive market value")]
    InvalidMarketValue(String),
    #[error("company `{company_id}` chosen in {month} is not in the universe")]
    UnknownCompany { company_id: String, month: Month },
    #[error(transparent)]
    Coverage(#[from] CorpusError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error("equity curve is empty")]
    EmptyCurve,
    #[error("benchmark months do not match the strategy's months")]
    BenchmarkMisaligned,
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("curve file: {0}")]
    Csv(String),
}

pub type Weights = BTreeMap<String, f64>;

/// Weights proportional to market value.
pub fn cap_weights(companies: &[&Company]) -> Result<Weights, BacktestError> {
    if companies.is_empty() {
        return Err(BacktestError::EmptyPortfolio);
    }
    if let Some(c) = companies.iter().find(|c| !(c.market_value > 0.0 && c.market_value.is_finite())) {
        return Err(BacktestError::InvalidMarketValue(c.id.clone()));
    }
    let total: f64 = companies.iter().map(|c| c.market_value).sum();
    Ok(companies
        .iter()
        .map(|c| (c.id.clone(), c.market_value / total))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Portfolio {
    pub month: Month,
    pub holdings: Weights,
}

impl Portfolio {
    pub fn build(chosen: &ChosenSet, market: &MarketData) -> Result<Self, BacktestError> {
        let companies = chosen
            .company_ids
            .iter()
            .map(|id| {
                market.companies.get(id).ok_or_else(|| BacktestError::UnknownCompany {
                    company_id: id.clone(),
                    month: chosen.month,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let holdings = if companies.is_empty() {
            Weights::new()
        } else {
            cap_weights(&companies)?
        };
        Ok(Self {
            month: chosen.month,
            holdings,
        })
    }

    /// Weighted next-month return of the holdings; zero when empty.
    pub fn monthly_return(&self, market: &MarketData) -> Result<f64, BacktestError> {
        let mut total = 0.0;
        for (id, w) in &self.holdings {
            let series = market.series(id).ok_or_else(|| CorpusError::Coverage {
                company_id: id.clone(),
                month: self.month,
            })?;
            total += w * series.next_month_return(self.month)?;
        }
        Ok(total)
    }
}

/// Accumulated return per month. `ar` excludes the implicit starting value
/// of zero, so `ar[i] - ar[i-1] == monthly_returns[i]` holds exactly and
/// `ar[0] == monthly_returns[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub months: Vec<Month>,
    pub ar: Vec<f64>,
    pub monthly_returns: Vec<f64>,
}

impl EquityCurve {
    pub fn from_returns(months: Vec<Month>, returns: &[f64]) -> Result<Self, BacktestError> {
        if months.len() != returns.len() {
            return Err(BacktestError::InvalidCurve("months and returns differ in length".into()));
        }
        let mut ar = Vec::with_capacity(returns.len());
        let mut prev = 0.0;
        for r in returns {
            prev += r;
            ar.push(prev);
        }
        Self::from_ar(months, ar)
    }

    /// Builds a curve from accumulated values; monthly returns are the
    /// first differences against a starting value of zero.
    pub fn from_ar(months: Vec<Month>, ar: Vec<f64>) -> Result<Self, BacktestError> {
        if months.len() != ar.len() {
            return Err(BacktestError::InvalidCurve("months and values differ in length".into()));
        }
        if months.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BacktestError::InvalidCurve("months must be strictly increasing".into()));
        }
        if ar.iter().any(|v| !v.is_finite()) {
            return Err(BacktestError::InvalidCurve("non-finite value".into()));
        }
        let monthly_returns = ar
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { *v } else { v - ar[i - 1] })
            .collect();
        Ok(Self {
            months,
            ar,
            monthly_returns,
        })
    }

    /// The months `start..=end`, with AR re-accumulated from zero at the
    /// month before `start`.
    pub fn window(&self, start: Month, end: Month) -> Result<Self, BacktestError> {
        let lo = self.months.binary_search(&start).map_err(|_| BacktestError::BenchmarkMisaligned)?;
        let hi = self.months.binary_search(&end).map_err(|_| BacktestError::BenchmarkMisaligned)?;
        if hi < lo {
            return Err(BacktestError::EmptyCurve);
        }
        let base = if lo == 0 { 0.0 } else { self.ar[lo - 1] };
        Self::from_ar(
            self.months[lo..=hi].to_vec(),
            self.ar[lo..=hi].iter().map(|a| a - base).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }
}

/// Rolls the strategy month by month from the first to the last chosen
/// month (or over `window` when given). Months without a chosen set hold
/// cash at zero return.
pub fn run_strategy(
    chosen: &BTreeMap<Month, ChosenSet>,
    market: &MarketData,
    window: Option<(Month, Month)>,
) -> Result<EquityCurve, BacktestError> {
    let (start, end) = match window {
        Some(w) => w,
        None => match (chosen.keys().next(), chosen.keys().next_back()) {
            (Some(s), Some(e)) => (*s, *e),
            _ => return Err(BacktestError::EmptyCurve),
        },
    };
    let months = Month::range_inclusive(start, end);
    if months.is_empty() {
        return Err(BacktestError::EmptyCurve);
    }
    let mut returns = Vec::with_capacity(months.len());
    for &m in &months {
        let r = match chosen.get(&m) {
            Some(set) => Portfolio::build(set, market)?.monthly_return(market)?,
            None => 0.0,
        };
        returns.push(r);
    }
    EquityCurve::from_returns(months, &returns)
}

/// Arithmetic annualization of the additive accumulated return.
pub fn annualized_return(curve: &EquityCurve) -> f64 {
    match curve.ar.last() {
        Some(last) => last / curve.len() as f64 * 12.0,
        None => 0.0,
    }
}

/// Sample standard deviation of monthly returns scaled by √12; zero for
/// fewer than two months.
pub fn annualized_volatility(curve: &EquityCurve) -> f64 {
    let n = curve.monthly_returns.len();
    if n < 2 {
        return 0.0;
    }
    let mean = curve.monthly_returns.iter().sum::<f64>() / n as f64;
    let var = curve.monthly_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    var.sqrt() * 12f64.sqrt()
}

/// Largest decline from a running peak of the AR curve, the starting zero
/// included.
pub fn max_drawdown(curve: &EquityCurve) -> f64 {
    let mut peak = 0.0f64;
    let mut md = 0.0f64;
    for &v in &curve.ar {
        peak = peak.max(v);
        md = md.max(peak - v);
    }
    md
}

/// Longest run, in months, from a peak until the curve first returns to
/// that peak. An episode still open at the end counts up to the last month.
pub fn max_drawdown_duration(curve: &EquityCurve) -> usize {
    let mut peak_idx = 0usize;
    let mut peak = 0.0f64;
    let mut underwater = false;
    let mut longest = 0usize;
    for (i, &v) in curve.ar.iter().enumerate() {
        let idx = i + 1;
        if v >= peak {
            if underwater {
                longest = longest.max(idx - peak_idx);
            }
            peak = v;
            peak_idx = idx;
            underwater = false;
        } else {
            underwater = true;
        }
    }
    if underwater {
        longest = longest.max(curve.len() - peak_idx);
    }
    longest
}

pub fn sharpe_ratio(arr: f64, anvol: f64, rf: f64) -> Option<f64> {
    (anvol > 0.0).then(|| (arr - rf) / anvol)
}

pub fn calmar_ratio(arr: f64, md: f64) -> Option<f64> {
    (md > 0.0).then(|| arr / md)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: Month,
    pub end: Month,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub rf: f64,
    pub window: Window,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub arr: f64,
    pub aerr: Option<f64>,
    pub anvol: f64,
    pub sr: Option<f64>,
    pub md: f64,
    pub cr: Option<f64>,
    pub mdd: usize,
    pub acc: Option<f64>,
    pub curve: EquityCurve,
    pub metadata: ReportMetadata,
}

impl BacktestReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub rf: f64,
    pub window: Option<(Month, Month)>,
    pub weighting: String,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            rf: 0.0,
            window: None,
            weighting: "market_value".into(),
        }
    }
}

impl BacktestConfig {
    pub fn digest(&self) -> String {
        digest(&serde_json::to_string(self).expect("config serializes"))
    }
}

pub fn compute_metrics(
    curve: &EquityCurve,
    benchmark: Option<&EquityCurve>,
    acc: Option<f64>,
    rf: f64,
    config_digest: &str,
) -> Result<BacktestReport, BacktestError> {
    let (start, end) = match (curve.months.first(), curve.months.last()) {
        (Some(s), Some(e)) => (*s, *e),
        _ => return Err(BacktestError::EmptyCurve),
    };
    let arr = annualized_return(curve);
    let aerr = match benchmark {
        Some(b) if b.months != curve.months => return Err(BacktestError::BenchmarkMisaligned),
        Some(b) => Some(arr - annualized_return(b)),
        None => None,
    };
    let anvol = annualized_volatility(curve);
    let md = max_drawdown(curve);
    Ok(BacktestReport {
        arr,
        aerr,
        anvol,
        sr: sharpe_ratio(arr, anvol, rf),
        md,
        cr: calmar_ratio(arr, md),
        mdd: max_drawdown_duration(curve),
        acc,
        curve: curve.clone(),
        metadata: ReportMetadata {
            rf,
            window: Window { start, end },
            config_digest: config_digest.to_string(),
        },
    })
}

/// Predictions → chosen sets → curve → report. Accuracy is measured
/// against next-month labels from `market`.
pub fn run_backtest(
    predictions: &[TrendPrediction],
    market: &MarketData,
    benchmark: Option<&EquityCurve>,
    config: &BacktestConfig,
) -> Result<BacktestReport, BacktestError> {
    let chosen = chosen_by_month(predictions)?;
    let curve = run_strategy(&chosen, market, config.window)?;
    let in_window: Vec<TrendPrediction> = predictions
        .iter()
        .filter(|p| curve.months.binary_search(&p.month).is_ok())
        .cloned()
        .collect();
    let acc = if in_window.is_empty() {
        None
    } else {
        let mut labels: BTreeMap<(String, Month), TrendLabel> = BTreeMap::new();
        for p in &in_window {
            labels.insert((p.company_id.clone(), p.month), market.label(&p.company_id, p.month)?);
        }
        Some(accuracy(&in_window, &labels)?)
    };
    let windowed = match (benchmark, config.window) {
        (Some(b), Some((start, end))) => Some(b.window(start, end)?),
        _ => None,
    };
    compute_metrics(&curve, windowed.as_ref().or(benchmark), acc, config.rf, &config.digest())
}

/// Decimal rendering with ten significant digits, trailing zeros trimmed.
pub fn format_sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.9e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let point = exp + 1;
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat('0').take((-point) as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.extend(std::iter::repeat('0').take(point as usize - digits.len()));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    if out.contains('.') {
        let trimmed = out.trim_end_matches('0').trim_end_matches('.');
        out = trimmed.to_string();
    }
    out
}

/// Writes `month,<name>,...` with one row per month in the union of all
/// curves; months a curve lacks are left blank.
pub fn export_equity_curve<W: Write>(curves: &[(&str, &EquityCurve)], out: W) -> Result<(), BacktestError> {
    let csv_err = |e: csv::Error| BacktestError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["month".to_string()];
    header.extend(curves.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    let months: BTreeSet<Month> = curves.iter().flat_map(|(_, c)| c.months.iter().copied()).collect();
    for m in months {
        let mut row = vec![m.to_string()];
        for (_, c) in curves {
            row.push(match c.months.binary_search(&m) {
                Ok(i) => format_sig10(c.ar[i]),
                Err(_) => String::new(),
            });
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BacktestError::Csv(e.to_string()))
}

pub fn equity_curve_csv(curves: &[(&str, &EquityCurve)]) -> String {
    let mut buf = Vec::new();
    export_equity_curve(curves, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// A parsed curve column: name and per-month value, blank cells as `None`.
pub type CurveColumn = (String, Vec<(Month, Option<f64>)>);

pub fn parse_equity_curves<R: Read>(input: R) -> Result<Vec<CurveColumn>, BacktestError> {
    let csv_err = |e: csv::Error| BacktestError::Csv(e.to_string());
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.get(0) != Some("month") {
        return Err(BacktestError::Csv("first column must be `month`".into()));
    }
    let mut columns: Vec<CurveColumn> = headers.iter().skip(1).map(|h| (h.to_string(), Vec::new())).collect();
    for (row_idx, row) in r.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let bad = |msg: String| BacktestError::Csv(format!("row {}: {msg}", row_idx + 2));
        let month: Month = row
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|e: crate::corpus::MonthParseError| bad(e.to_string()))?;
        for (i, col) in columns.iter_mut().enumerate() {
            let cell = row.get(i + 1).unwrap_or("").trim();
            let v = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| bad(e.to_string()))?)
            };
            col.1.push((month, v));
        }
    }
    Ok(columns)
}

/// Benchmark curve from the first value column of an equity-curve file.
pub fn parse_benchmark<R: Read>(input: R) -> Result<EquityCurve, BacktestError> {
    let mut columns = parse_equity_curves(input)?;
    if columns.is_empty() {
        return Err(BacktestError::Csv("benchmark file has no value column".into()));
    }
    let (name, cells) = columns.swap_remove(0);
    let mut months = Vec::with_capacity(cells.len());
    let mut ar = Vec::with_capacity(cells.len());
    for (m, v) in cells {
        months.push(m);
        ar.push(v.ok_or_else(|| BacktestError::Csv(format!("benchmark `{name}` has a blank cell at {m}")))?);
    }
    EquityCurve::from_ar(months, ar)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{PricePoint, PriceSeries};
    use crate::prediction::Direction;

    fn m(s: &str) -> Month {
        s.parse().unwrap()
    }

    fn company(id: &str, v: f64) -> Company {
        Company {
            id: id.into(),
            name: id.into(),
            market_value: v,
        }
    }

    fn market(entries: &[(&str, f64, &[f64])]) -> MarketData {
        let mut md = MarketData::default();
        for (id, v, closes) in entries {
            md.companies.insert(id.to_string(), company(id, *v));
            let mut month = m("2021-01");
            let mut points = Vec::new();
            for c in *closes {
                points.push(PricePoint { month, close: *c });
                month = month.succ();
            }
            md.prices.insert(id.to_string(), PriceSeries::new(*id, points).unwrap());
        }
        md
    }

    fn chosen(month: &str, ids: &[&str]) -> (Month, ChosenSet) {
        let mut set = ChosenSet::empty(m(month));
        set.company_ids.extend(ids.iter().map(|s| s.to_string()));
        (m(month), set)
    }

    #[test]
    fn window_rebases_ar() {
        let months = Month::range_inclusive(m("2021-01"), m("2021-04"));
        let c = EquityCurve::from_ar(months, vec![0.1, 0.3, 0.2, 0.5]).unwrap();
        let w = c.window(m("2021-02"), m("2021-03")).unwrap();
        assert_eq!(w.months, vec![m("2021-02"), m("2021-03")]);
        assert!((w.ar[0] - 0.2).abs() < 1e-15 && (w.ar[1] - 0.1).abs() < 1e-15);
        assert_eq!(c.window(m("2021-01"), m("2021-04")).unwrap(), c);
        assert!(matches!(c.window(m("2020-12"), m("2021-02")), Err(BacktestError::BenchmarkMisaligned)));
    }

    #[test]
    fn cap_weight_examples() {
        let (a, b, c) = (company("A", 100.0), company("B", 300.0), company("C", 1.0));
        let w = cap_weights(&[&a, &b]).unwrap();
        assert_eq!(w["A"], 0.25);
        assert_eq!(w["B"], 0.75);
        assert_eq!(cap_weights(&[&a]).unwrap()["A"], 1.0);
        let (x, y, z) = (company("X", 1.0), company("Y", 1.0), company("Z", 2.0));
        let w = cap_weights(&[&x, &y, &z]).unwrap();
        assert_eq!((w["X"], w["Y"], w["Z"]), (0.25, 0.25, 0.5));
        assert!(matches!(cap_weights(&[]), Err(BacktestError::EmptyPortfolio)));
        let bad = company("D", 0.0);
        assert!(matches!(cap_weights(&[&c, &bad]), Err(BacktestError::InvalidMarketValue(_))));
    }

    #[test]
    fn single_company_accumulates_additively() {
        let md = market(&[("A", 1.0, &[100.0, 102.0, 100.98, 104.0094])]);
        let sets: BTreeMap<_, _> = [chosen("2021-01", &["A"]), chosen("2021-02", &["A"]), chosen("2021-03", &["A"])]
            .into_iter()
            .collect();
        let curve = run_strategy(&sets, &md, None).unwrap();
        let expect = [0.02, 0.01, 0.04];
        for (got, want) in curve.ar.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn empty_chosen_month_is_flat() {
        let md = market(&[("A", 1.0, &[100.0, 110.0, 121.0])]);
        let sets: BTreeMap<_, _> = [chosen("2021-01", &["A"]), chosen("2021-02", &[])].into_iter().collect();
        let curve = run_strategy(&sets, &md, None).unwrap();
        assert_eq!(curve.monthly_returns[1], 0.0);
        assert_eq!(curve.ar[0], curve.ar[1]);
    }

    #[test]
    fn price_gap_names_company_and_month() {
        let md = market(&[("A", 1.0, &[100.0])]);
        let sets: BTreeMap<_, _> = [chosen("2021-01", &["A"])].into_iter().collect();
        match run_strategy(&sets, &md, None).unwrap_err() {
            BacktestError::Coverage(CorpusError::Coverage { company_id, month }) => {
                assert_eq!(company_id, "A");
                assert_eq!(month, m("2021-02"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn metric_relations() {
        let months = Month::range_inclusive(m("2021-01"), m("2021-06"));
        let curve = EquityCurve::from_returns(months, &[0.05, -0.02, -0.03, 0.04, 0.01, 0.02]).unwrap();
        let r = compute_metrics(&curve, None, None, 0.0, "x").unwrap();
        assert!((r.arr - 0.07 / 6.0 * 12.0).abs() < 1e-12);
        assert!((r.md - 0.05).abs() < 1e-12);
        assert!((r.cr.unwrap() - r.arr / r.md).abs() < 1e-9);
        assert!((r.sr.unwrap() - r.arr / r.anvol).abs() < 1e-9);
        // peak after month 1, back above it in month 5
        assert_eq!(r.mdd, 4);
        assert_eq!(r.aerr, None);
    }

    #[test]
    fn undefined_ratios_are_absent() {
        let months = Month::range_inclusive(m("2021-01"), m("2021-03"));
        let flat = EquityCurve::from_returns(months, &[0.0, 0.0, 0.0]).unwrap();
        let r = compute_metrics(&flat, Some(&flat), None, 0.0, "x").unwrap();
        assert_eq!(r.sr, None);
        assert_eq!(r.cr, None);
        assert_eq!(r.aerr, Some(0.0));
        let json = r.to_json();
        assert!(json.contains("\"sr\": null"));
    }

    #[test]
    fn misaligned_benchmark_rejected() {
        let a = EquityCurve::from_returns(vec![m("2021-01")], &[0.01]).unwrap();
        let b = EquityCurve::from_returns(vec![m("2021-02")], &[0.01]).unwrap();
        assert!(matches!(compute_metrics(&a, Some(&b), None, 0.0, ""), Err(BacktestError::BenchmarkMisaligned)));
    }

    #[test]
    fn open_drawdown_counts_to_end() {
        let months = Month::range_inclusive(m("2021-01"), m("2021-04"));
        let curve = EquityCurve::from_returns(months, &[0.1, -0.05, -0.01, 0.01]).unwrap();
        assert_eq!(max_drawdown_duration(&curve), 3);
    }

    #[test]
    fn sig10_formatting() {
        assert_eq!(format_sig10(0.02), "0.02");
        assert_eq!(format_sig10(-0.123456789012), "-0.123456789");
        assert_eq!(format_sig10(1234.5), "1234.5");
        assert_eq!(format_sig10(1e12), "1000000000000");
        assert_eq!(format_sig10(0.0), "0");
        assert_eq!(format_sig10(3.0e-7), "0.0000003");
    }

    #[test]
    fn export_shapes() {
        let months = Month::range_inclusive(m("2021-01"), m("2021-03"));
        let a = EquityCurve::from_returns(months.clone(), &[0.01, 0.02, 0.03]).unwrap();
        let b = EquityCurve::from_returns(months, &[0.0, -0.01, 0.5]).unwrap();
        let csv = equity_curve_csv(&[("a", &a), ("b", &b)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "month,a,b");
        assert_eq!(lines[1].split(',').count(), 3);
        assert_eq!(equity_curve_csv(&[]), "month\n");
    }

    #[test]
    fn export_leaves_missing_months_blank() {
        let a = EquityCurve::from_returns(vec![m("2021-01"), m("2021-02")], &[0.01, 0.01]).unwrap();
        let b = EquityCurve::from_returns(vec![m("2021-02")], &[0.5]).unwrap();
        let csv = equity_curve_csv(&[("a", &a), ("b", &b)]);
        assert_eq!(csv, "month,a,b\n2021-01,0.01,\n2021-02,0.02,0.5\n");
        let cols = parse_equity_curves(csv.as_bytes()).unwrap();
        assert_eq!(cols[1].1[0], (m("2021-01"), None));
    }

    #[test]
    fn benchmark_parse_back() {
        let months = Month::range_inclusive(m("2021-01"), m("2021-03"));
        let a = EquityCurve::from_ar(months, vec![0.01, 0.025, 0.02]).unwrap();
        let csv = equity_curve_csv(&[("csi300", &a)]);
        assert_eq!(parse_benchmark(csv.as_bytes()).unwrap(), a);
    }

    #[test]
    fn run_backtest_perfect_predictions() {
        let md = market(&[("A", 1.0, &[100.0, 110.0, 99.0]), ("B", 3.0, &[10.0, 10.5, 11.0])]);
        let p = |c: &str, month: &str, d| TrendPrediction {
            company_id: c.into(),
            month: m(month),
            direction: d,
            prob_category: None,
            raw_response: String::new(),
        };
        let preds = vec![
            p("A", "2021-01", Direction::Up),
            p("B", "2021-01", Direction::Up),
            p("A", "2021-02", Direction::Down),
            p("B", "2021-02", Direction::Up),
        ];
        let report = run_backtest(&preds, &md, None, &BacktestConfig::default()).unwrap();
        assert_eq!(report.acc, Some(1.0));
        let m1 = 0.25 * 0.1 + 0.75 * 0.05;
        let m2 = 11.0 / 10.5 - 1.0;
        assert!((report.curve.ar[1] - (m1 + m2)).abs() < 1e-12);
        assert_eq!(report.to_json(), run_backtest(&preds, &md, None, &BacktestConfig::default()).unwrap().to_json());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_are_scale_invariant(
            values in prop::collection::vec(1e-3f64..1e6, 1..20),
            scale in 1e-3f64..1e3,
        ) {
            let cs: Vec<Company> = values.iter().enumerate().map(|(i, v)| company(&format!("c{i}"), *v)).collect();
            let scaled: Vec<Company> = values.iter().enumerate().map(|(i, v)| company(&format!("c{i}"), v * scale)).collect();
            let w = cap_weights(&cs.iter().collect::<Vec<_>>()).unwrap();
            let ws = cap_weights(&scaled.iter().collect::<Vec<_>>()).unwrap();
            prop_assert!((w.values().sum::<f64>() - 1.0).abs() < 1e-12);
            for (k, v) in &w {
                prop_assert!(*v >= 0.0);
                prop_assert!((v - ws[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn ar_differences_are_exact(returns in prop::collection::vec(-0.3f64..0.3, 1..48)) {
            let months = Month::range_inclusive(m("2020-01"), {
                let mut e = m("2020-01");
                for _ in 1..returns.len() { e = e.succ(); }
                e
            });
            let curve = EquityCurve::from_returns(months, &returns).unwrap();
            prop_assert_eq!(curve.monthly_returns[0], curve.ar[0]);
            for i in 1..curve.len() {
                prop_assert_eq!(curve.ar[i] - curve.ar[i - 1], curve.monthly_returns[i]);
            }
        }

        #[test]
        fn sig10_parse_back_is_close(x in -1e6f64..1e6) {
            let back: f64 = format_sig10(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1e-300));
        }
    }
}
