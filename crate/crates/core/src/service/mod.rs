//! Operator surface shared by the CLI and the HTTP API: configuration,
//! backend construction from spec strings, run metadata and the file-level
//! pipeline steps both adapters call.
//!
//! Backend spec strings:
//!
//! | kind      | forms                                                      |
//! |-----------|------------------------------------------------------------|
//! | model     | `scripted:<file>`, `replay:<dir>`, `remote:<url>`          |
//! | embedder  | `hash:<dim>`, `replay:<dim>:<dir>`, `remote:<dim>:<url>`   |
//! | extractor | `head:<chars>` or any model spec                           |
//! | judge     | `prefer-longer` or any model spec                          |

mod config;
mod http;

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

pub use config::{ConfigError, ConfigLayer, RunConfig, ENV_PREFIX};
pub use http::{router, serve, AppState, Evidence};

use crate::backtest::{equity_curve_csv, parse_benchmark, run_backtest, BacktestConfig, BacktestError};
use crate::corpus::{MarketData, TemplateSet};
use crate::eval::{BackendJudge, FnJudge, Judge};
use crate::gateway::{
    ChatBackend, Embedder, GatewayError, HashingEmbedder, RemoteBackend, RemoteConfig, RemoteEmbedder,
    ReplayBackend, ReplayEmbedder, ScriptedBackend,
};
use crate::prediction::read_predictions;
use crate::store::{ChatQaGenerator, ChatSummarizer, HeadSummarizer, QaGenerator, Summarizer};

fn bad_spec(kind: &str, spec: &str) -> GatewayError {
    GatewayError::Config(format!("unrecognised {kind} spec `{spec}`"))
}

pub fn chat_backend(spec: &str, api_key: Option<&str>) -> Result<Arc<dyn ChatBackend>, GatewayError> {
    match spec.split_once(':') {
        Some(("scripted", path)) => Ok(Arc::new(ScriptedBackend::load(Path::new(path))?)),
        Some(("replay", dir)) => Ok(Arc::new(ReplayBackend::open(spec, dir))),
        Some(("remote", url)) => Ok(Arc::new(RemoteBackend::new(
            spec,
            RemoteConfig::new(url).with_api_key(api_key.map(str::to_string)),
        ))),
        _ => Err(bad_spec("model", spec)),
    }
}

pub fn embedder(spec: &str, api_key: Option<&str>) -> Result<Arc<dyn Embedder>, GatewayError> {
    let mut parts = spec.splitn(3, ':');
    let kind = parts.next().unwrap_or_default();
    let dim: usize = parts
        .next()
        .and_then(|d| d.parse().ok())
        .filter(|d| *d > 0)
        .ok_or_else(|| bad_spec("embedder", spec))?;
    match (kind, parts.next()) {
        ("hash", None) => Ok(Arc::new(HashingEmbedder::new(dim))),
        ("replay", Some(dir)) => Ok(Arc::new(ReplayEmbedder::open(spec, dim, dir))),
        ("remote", Some(url)) => Ok(Arc::new(RemoteEmbedder::new(
            spec,
            dim,
            RemoteConfig::new(url).with_api_key(api_key.map(str::to_string)),
        ))),
        _ => Err(bad_spec("embedder", spec)),
    }
}

pub fn summarizer(spec: &str, templates: &TemplateSet, api_key: Option<&str>) -> Result<Box<dyn Summarizer>, GatewayError> {
    if let Some(n) = spec.strip_prefix("head:") {
        let n = n.parse().map_err(|_| bad_spec("extractor", spec))?;
        return Ok(Box::new(HeadSummarizer::new(n)));
    }
    Ok(Box::new(ChatSummarizer::new(chat_backend(spec, api_key)?, templates.clone())))
}

pub fn qa_generator(spec: &str, templates: &TemplateSet, api_key: Option<&str>) -> Result<Box<dyn QaGenerator>, GatewayError> {
    Ok(Box::new(ChatQaGenerator::new(chat_backend(spec, api_key)?, templates.clone())))
}

pub fn judge(spec: &str, templates: &TemplateSet, api_key: Option<&str>) -> Result<Box<dyn Judge>, GatewayError> {
    if spec == "prefer-longer" {
        return Ok(Box::new(FnJudge::prefer_longer()));
    }
    Ok(Box::new(BackendJudge::new(chat_backend(spec, api_key)?, templates.clone())))
}

/// Written next to every artifact so the run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub crate_version: String,
    pub config_digest: String,
    pub model: Option<String>,
    pub embedder: String,
    pub extractor: String,
    pub judge: Option<String>,
    pub template_version: String,
    pub seed: u64,
}

impl RunMetadata {
    pub fn new(command: &str, config: &RunConfig, templates: &TemplateSet) -> Self {
        Self {
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config.digest(),
            model: config.model.clone(),
            embedder: config.embedder.clone(),
            extractor: config.extractor.clone(),
            judge: config.judge.clone(),
            template_version: templates.version().to_string(),
            seed: config.seed,
        }
    }

    /// Writes `<artifact>.meta.json`.
    pub fn write_beside(&self, artifact: &Path) -> std::io::Result<()> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".meta.json");
        let mut text = serde_json::to_string_pretty(self).expect("metadata serializes");
        text.push('\n');
        std::fs::write(name, text)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BacktestFilesError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Backtest(#[from] BacktestError),
}

/// Report JSON and equity-curve CSV for a set of input files.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestArtifacts {
    pub report_json: String,
    pub curve_csv: String,
}

/// The single backtest entry point behind both the CLI and the API, so
/// identical inputs give byte-identical artifacts.
pub fn run_backtest_files(
    predictions: &Path,
    prices: &Path,
    benchmark: Option<&Path>,
    config: &BacktestConfig,
) -> Result<BacktestArtifacts, BacktestFilesError> {
    let input = |p: &Path, e: &dyn std::fmt::Display| BacktestFilesError::Input {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let preds = read_predictions(predictions).map_err(|e| input(predictions, &e))?;
    let market = MarketData::load_price_file(prices).map_err(|e| input(prices, &e))?;
    let bench = match benchmark {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| input(p, &e))?;
            Some(parse_benchmark(f).map_err(|e| input(p, &e))?)
        }
        None => None,
    };
    let report = run_backtest(&preds, &market, bench.as_ref(), config)?;
    let mut curves = vec![("strategy", &report.curve)];
    if let Some(b) = &bench {
        curves.push(("benchmark", b));
    }
    Ok(BacktestArtifacts {
        curve_csv: equity_curve_csv(&curves),
        report_json: report.to_json(),
    })
}
