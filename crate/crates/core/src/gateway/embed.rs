use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::fixture::FixtureDir;
use super::http::{JsonPoster, RemoteConfig};
use super::{digest, GatewayError};
use crate::text::{tokenize, TokenScheme};

/// Sentence-embedding backend. Documents and queries must go through the
/// same embedder for their cosine similarities to be meaningful.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
    fn healthy(&self) -> bool {
        true
    }

    /// Embeds `text` after checking it is non-empty and that the backend
    /// honours its declared dimension.
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Input("cannot embed empty text".into()));
        }
        let v = self.embed_text(text)?;
        if v.len() != self.dimension() {
            return Err(GatewayError::Config(format!(
                "embedder `{}` declared dimension {} but returned {}",
                self.id(),
                self.dimension(),
                v.len()
            )));
        }
        Ok(v)
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        (**self).embed_text(text)
    }
    fn healthy(&self) -> bool {
        (**self).healthy()
    }
}

/// Deterministic feature-hashing embedder with unit-norm output.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    id: String,
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            id: format!("hash-{dimension}"),
            dimension,
        }
    }

    fn bucket(&self, feature: &str) -> (usize, f64) {
        let h = Sha256::digest(feature.as_bytes());
        let idx = u64::from_le_bytes(h[..8].try_into().unwrap()) % self.dimension as u64;
        let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        (idx as usize, sign)
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let mut v = vec![0.0; self.dimension];
        for tok in tokenize(text, TokenScheme::Unicode) {
            let (i, s) = self.bucket(&tok);
            v[i] += s;
        }
        let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // no tokens, or features cancelled out
            let (i, _) = self.bucket(text);
            v[i] = 1.0;
            norm = 1.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Fixed text → vector table.
#[derive(Debug, Clone)]
pub struct ScriptedEmbedder {
    id: String,
    dimension: usize,
    table: HashMap<String, Vec<f64>>,
}

impl ScriptedEmbedder {
    pub fn new(id: impl Into<String>, dimension: usize) -> Self {
        Self {
            id: id.into(),
            dimension,
            table: HashMap::new(),
        }
    }

    pub fn with(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.table.insert(text.into(), vector);
        self
    }
}

impl Embedder for ScriptedEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        self.table.get(text).cloned().ok_or_else(|| GatewayError::Fixture {
            backend: self.id.clone(),
            digest: digest(text),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingFixture {
    digest: String,
    embedder_id: String,
    input: String,
    vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayEmbedder {
    id: String,
    dimension: usize,
    fixtures: FixtureDir,
}

impl ReplayEmbedder {
    pub fn open(id: impl Into<String>, dimension: usize, dir: impl AsRef<Path>) -> Self {
        Self {
            id: id.into(),
            dimension,
            fixtures: FixtureDir::new(dir.as_ref()),
        }
    }
}

impl Embedder for ReplayEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        match self.fixtures.read::<EmbeddingFixture>(text)? {
            Some((_, f)) => Ok(f.vector),
            None => Err(GatewayError::Fixture {
                backend: self.id.clone(),
                digest: digest(text),
            }),
        }
    }
}

pub struct RecordingEmbedder<E> {
    inner: E,
    fixtures: FixtureDir,
}

impl<E: Embedder> RecordingEmbedder<E> {
    pub fn new(inner: E, dir: impl AsRef<Path>) -> Self {
        Self {
            inner,
            fixtures: FixtureDir::new(dir.as_ref()),
        }
    }
}

impl<E: Embedder> Embedder for RecordingEmbedder<E> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let vector = self.inner.embed_text(text)?;
        self.fixtures.write(
            text,
            &EmbeddingFixture {
                digest: digest(text),
                embedder_id: self.inner.id().to_string(),
                input: text.to_string(),
                vector: vector.clone(),
            },
        )?;
        Ok(vector)
    }
}

/// HTTP embedder: `POST {"input"}` → `{"embedding": [number]}`.
pub struct RemoteEmbedder {
    id: String,
    dimension: usize,
    poster: JsonPoster,
}

impl RemoteEmbedder {
    pub fn new(id: impl Into<String>, dimension: usize, config: RemoteConfig) -> Self {
        let id = id.into();
        Self {
            poster: JsonPoster::new(id.clone(), config),
            id,
            dimension,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let resp: EmbedResponse = self.poster.post(&EmbedRequest { input: text })?;
        Ok(resp.embedding)
    }

    fn healthy(&self) -> bool {
        self.poster.probe()
    }
}
