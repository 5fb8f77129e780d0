//! Two-stage financial analysis: retrieval-grounded monthly trend prediction
//! with a cap-weighted backtest, and retrieval-augmented multi-turn Q&A.
//! Every model and embedding call goes through a pluggable backend so the
//! whole pipeline runs offline against scripted or recorded fixtures.

pub mod backtest;
pub mod cli;
pub mod corpus;
pub mod dialogue;
pub mod eval;
pub mod gateway;
pub mod prediction;
pub mod service;
pub mod store;
pub mod text;

/// Any failure surfaced by the command-line or service adapters.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Template(#[from] corpus::TemplateError),
    #[error(transparent)]
    Gateway(#[from] gateway::GatewayError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error(transparent)]
    Prediction(#[from] prediction::PredictionError),
    #[error(transparent)]
    Backtest(#[from] backtest::BacktestError),
    #[error(transparent)]
    BacktestFiles(#[from] service::BacktestFilesError),
    #[error(transparent)]
    Dialogue(#[from] dialogue::DialogueError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Config(#[from] service::ConfigError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Corpus(_) => "corpus",
            Error::Template(_) => "template",
            Error::Gateway(_) => "backend",
            Error::Store(_) => "store",
            Error::Prediction(_) => "prediction",
            Error::Backtest(_) | Error::BacktestFiles(_) => "backtest",
            Error::Dialogue(_) => "dialogue",
            Error::Eval(_) => "eval",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
