//! Run configuration: defaults, then a TOML file, then `STOCKCHAIN_*`
//! environment variables, then command-line flags. Later sources win.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gateway::digest;

pub const ENV_PREFIX: &str = "STOCKCHAIN_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Every field optional; one layer of configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub model: Option<String>,
    pub embedder: Option<String>,
    pub extractor: Option<String>,
    pub qa_extractor: Option<String>,
    pub judge: Option<String>,
    pub k: Option<usize>,
    pub rf: Option<f64>,
    pub templates: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub port: Option<u16>,
    pub seed: Option<u64>,
    pub api_key: Option<String>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl ConfigLayer {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::File {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        toml::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Reads `STOCKCHAIN_<FIELD>` variables, e.g. `STOCKCHAIN_MODEL`.
    pub fn from_env(vars: &HashMap<String, String>) -> Result<Self, ConfigError> {
        let get = |name: &str| vars.get(&format!("{ENV_PREFIX}{name}")).cloned();
        fn parse<T: std::str::FromStr>(name: &str, v: Option<String>) -> Result<Option<T>, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::Env {
                    name: format!("{ENV_PREFIX}{name}"),
                    message: e.to_string(),
                })
            })
            .transpose()
        }
        Ok(Self {
            model: get("MODEL"),
            embedder: get("EMBEDDER"),
            extractor: get("EXTRACTOR"),
            qa_extractor: get("QA_EXTRACTOR"),
            judge: get("JUDGE"),
            k: parse("K", get("K"))?,
            rf: parse("RF", get("RF"))?,
            templates: get("TEMPLATES").map(PathBuf::from),
            corpus: get("CORPUS").map(PathBuf::from),
            index: get("INDEX").map(PathBuf::from),
            scenarios: get("SCENARIOS").map(PathBuf::from),
            transcripts: get("TRANSCRIPTS").map(PathBuf::from),
            port: parse("PORT", get("PORT"))?,
            seed: parse("SEED", get("SEED"))?,
            api_key: get("API_KEY"),
        })
    }

    pub fn overlay(mut self, top: &ConfigLayer) -> Self {
        overlay!(
            self, top, model, embedder, extractor, qa_extractor, judge, k, rf, templates, corpus, index, scenarios,
            transcripts, port, seed, api_key
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: Option<String>,
    pub embedder: String,
    pub extractor: String,
    pub qa_extractor: Option<String>,
    pub judge: Option<String>,
    pub k: usize,
    pub rf: f64,
    pub templates: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub port: u16,
    pub seed: u64,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            embedder: "hash:256".into(),
            extractor: "head:512".into(),
            qa_extractor: None,
            judge: None,
            k: 3,
            rf: 0.0,
            templates: None,
            corpus: None,
            index: None,
            scenarios: None,
            transcripts: None,
            port: 8080,
            seed: 0,
            api_key: None,
        }
    }
}

impl RunConfig {
    /// Resolves file < env < flags over the defaults.
    pub fn resolve(
        file: Option<&Path>,
        env: &HashMap<String, String>,
        flags: &ConfigLayer,
    ) -> Result<Self, ConfigError> {
        let mut layer = ConfigLayer::default();
        if let Some(path) = file {
            layer = layer.overlay(&ConfigLayer::from_toml_file(path)?);
        }
        let layer = layer.overlay(&ConfigLayer::from_env(env)?).overlay(flags);
        let d = RunConfig::default();
        let cfg = Self {
            model: layer.model,
            embedder: layer.embedder.unwrap_or(d.embedder),
            extractor: layer.extractor.unwrap_or(d.extractor),
            qa_extractor: layer.qa_extractor,
            judge: layer.judge,
            k: layer.k.unwrap_or(d.k),
            rf: layer.rf.unwrap_or(d.rf),
            templates: layer.templates,
            corpus: layer.corpus,
            index: layer.index,
            scenarios: layer.scenarios,
            transcripts: layer.transcripts,
            port: layer.port.unwrap_or(d.port),
            seed: layer.seed.unwrap_or(d.seed),
            api_key: layer.api_key,
        };
        if cfg.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        if !cfg.rf.is_finite() {
            return Err(ConfigError::Invalid("rf must be finite".into()));
        }
        Ok(cfg)
    }

    /// Fails on the first configured input path that does not exist.
    pub fn check_paths(&self) -> Result<(), ConfigError> {
        for (name, p) in [
            ("templates", &self.templates),
            ("corpus", &self.corpus),
            ("index", &self.index),
            ("scenarios", &self.scenarios),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::Invalid(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Digest of the serialized configuration; credentials are excluded.
    pub fn digest(&self) -> String {
        digest(&serde_json::to_string(self).expect("config serializes"))
    }

    pub fn model_spec(&self) -> Result<&str, ConfigError> {
        self.model
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("no model backend configured (--model or STOCKCHAIN_MODEL)".into()))
    }
}
