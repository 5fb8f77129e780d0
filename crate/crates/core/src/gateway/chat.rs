use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fixture::FixtureDir;
use super::http::{JsonPoster, RemoteConfig};
use super::{digest, AssembledInput, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingStrategy {
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub strategy: DecodingStrategy,
    pub max_new_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            strategy: DecodingStrategy::Greedy,
            max_new_tokens: 1024,
        }
    }
}

/// A chat-completion backend: full input text in, full response text out.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn kind(&self) -> BackendKind;
    fn generation(&self) -> GenerationConfig {
        GenerationConfig::default()
    }
    fn complete_text(&self, input: &str) -> Result<String, GatewayError>;
    /// Whether the backend can currently serve requests.
    fn healthy(&self) -> bool {
        true
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }
    fn generation(&self) -> GenerationConfig {
        (**self).generation()
    }
    fn complete_text(&self, input: &str) -> Result<String, GatewayError> {
        (**self).complete_text(input)
    }
    fn healthy(&self) -> bool {
        (**self).healthy()
    }
}

pub fn complete(input: &AssembledInput, backend: &dyn ChatBackend) -> Result<String, GatewayError> {
    backend.complete_text(&input.text)
}

/// Deterministic stub. Lookup order: exact input, then the first
/// `contains` rule that matches, then the default response.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    id: String,
    exact: HashMap<String, String>,
    rules: Vec<(String, String)>,
    default: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptFile {
    pub id: String,
    #[serde(default)]
    pub responses: Vec<ScriptedPair>,
    #[serde(default)]
    pub rules: Vec<ScriptedRule>,
    #[serde(default)]
    pub default: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedPair {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedRule {
    pub contains: String,
    pub output: String,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn with_response(mut self, input: &str, output: impl Into<String>) -> Self {
        self.exact.insert(digest(input), output.into());
        self
    }

    pub fn with_rule(mut self, contains: impl Into<String>, output: impl Into<String>) -> Self {
        self.rules.push((contains.into(), output.into()));
        self
    }

    pub fn with_default(mut self, output: impl Into<String>) -> Self {
        self.default = Some(output.into());
        self
    }

    pub fn from_script(script: ScriptFile) -> Self {
        let mut b = ScriptedBackend::new(script.id);
        for p in script.responses {
            b = b.with_response(&p.input, p.output);
        }
        for r in script.rules {
            b = b.with_rule(r.contains, r.output);
        }
        b.default = script.default;
        b
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let io = |message: String| GatewayError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let script: ScriptFile = serde_json::from_str(&text).map_err(|e| io(format!("bad script: {e}")))?;
        Ok(Self::from_script(script))
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete_text(&self, input: &str) -> Result<String, GatewayError> {
        let d = digest(input);
        if let Some(out) = self.exact.get(&d) {
            return Ok(out.clone());
        }
        if let Some((_, out)) = self.rules.iter().find(|(needle, _)| input.contains(needle.as_str())) {
            return Ok(out.clone());
        }
        self.default.clone().ok_or(GatewayError::Fixture {
            backend: self.id.clone(),
            digest: d,
        })
    }
}

type ResponseFn = dyn Fn(&str) -> Result<String, GatewayError> + Send + Sync;

/// Scripted backend driven by a pure function of the input.
pub struct FnBackend {
    id: String,
    f: Box<ResponseFn>,
}

impl FnBackend {
    pub fn new(
        id: impl Into<String>,
        f: impl Fn(&str) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            f: Box::new(f),
        }
    }
}

impl ChatBackend for FnBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete_text(&self, input: &str) -> Result<String, GatewayError> {
        (self.f)(input)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChatFixture {
    digest: String,
    backend_id: String,
    input: String,
    output: String,
}

/// Replays recorded `(input, output)` pairs byte for byte.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    id: String,
    fixtures: FixtureDir,
}

impl ReplayBackend {
    pub fn open(id: impl Into<String>, dir: impl AsRef<Path>) -> Self {
        Self {
            id: id.into(),
            fixtures: FixtureDir::new(dir.as_ref()),
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete_text(&self, input: &str) -> Result<String, GatewayError> {
        match self.fixtures.read::<ChatFixture>(input)? {
            Some((_, f)) => Ok(f.output),
            None => Err(GatewayError::Fixture {
                backend: self.id.clone(),
                digest: digest(input),
            }),
        }
    }

    fn healthy(&self) -> bool {
        self.fixtures.path().is_dir()
    }
}

/// Wraps another backend and writes a replay fixture for every success.
pub struct RecordingBackend<B> {
    inner: B,
    fixtures: FixtureDir,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl AsRef<Path>) -> Self {
        Self {
            inner,
            fixtures: FixtureDir::new(dir.as_ref()),
        }
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn generation(&self) -> GenerationConfig {
        self.inner.generation()
    }

    fn complete_text(&self, input: &str) -> Result<String, GatewayError> {
        let output = self.inner.complete_text(input)?;
        self.fixtures.write(
            input,
            &ChatFixture {
                digest: digest(input),
                backend_id: self.inner.id().to_string(),
                input: input.to_string(),
                output: output.clone(),
            },
        )?;
        Ok(output)
    }

    fn healthy(&self) -> bool {
        self.inner.healthy()
    }
}

/// Single-endpoint HTTP backend:
/// `POST {"input", "max_new_tokens", "temperature": 0}` → `{"output"}`.
pub struct RemoteBackend {
    id: String,
    generation: GenerationConfig,
    poster: JsonPoster,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    input: &'a str,
    max_new_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    output: String,
}

impl RemoteBackend {
    pub fn new(id: impl Into<String>, config: RemoteConfig) -> Self {
        let id = id.into();
        Self {
            poster: JsonPoster::new(id.clone(), config),
            id,
            generation: GenerationConfig::default(),
        }
    }

    pub fn with_max_new_tokens(mut self, n: u32) -> Self {
        self.generation.max_new_tokens = n;
        self
    }

    pub fn config(&self) -> &RemoteConfig {
        self.poster.config()
    }
}

impl ChatBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn generation(&self) -> GenerationConfig {
        self.generation
    }

    fn complete_text(&self, input: &str) -> Result<String, GatewayError> {
        let resp: CompletionResponse = self.poster.post(&CompletionRequest {
            input,
            max_new_tokens: self.generation.max_new_tokens,
            temperature: 0.0,
        })?;
        Ok(resp.output)
    }

    fn healthy(&self) -> bool {
        self.poster.probe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_exact_mapping() {
        let b = ScriptedBackend::new("s").with_response("I", "up");
        assert_eq!(b.complete_text("I").unwrap(), "up");
        assert_eq!(b.complete_text("I").unwrap(), "up");
    }

    #[test]
    fn scripted_missing_names_digest() {
        let b = ScriptedBackend::new("s");
        match b.complete_text("nothing").unwrap_err() {
            GatewayError::Fixture { digest: d, backend } => {
                assert_eq!(d, digest("nothing"));
                assert_eq!(backend, "s");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn scripted_lookup_order() {
        let b = ScriptedBackend::new("s")
            .with_response("exact ACME", "exact")
            .with_rule("ACME", "rule-1")
            .with_rule("AC", "rule-2")
            .with_default("fallback");
        assert_eq!(b.complete_text("exact ACME").unwrap(), "exact");
        assert_eq!(b.complete_text("about ACME").unwrap(), "rule-1");
        assert_eq!(b.complete_text("ACX").unwrap(), "rule-2");
        assert_eq!(b.complete_text("AXC").unwrap(), "fallback");
    }

    #[test]
    fn script_file_parses() {
        let script: ScriptFile = serde_json::from_str(
            r#"{"id":"m","responses":[{"input":"a","output":"b"}],"rules":[{"contains":"x","output":"y"}]}"#,
        )
        .unwrap();
        let b = ScriptedBackend::from_script(script);
        assert_eq!(b.complete_text("a").unwrap(), "b");
        assert_eq!(b.complete_text("zxz").unwrap(), "y");
        assert!(b.complete_text("q").is_err());
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let live = FnBackend::new("live", |input| Ok(format!("echo: {input} \u{4e0a}\u{6da8}\n")));
        let recorder = RecordingBackend::new(live, dir.path());
        let recorded = recorder.complete_text("prompt one").unwrap();
        let replay = ReplayBackend::open("replay", dir.path());
        assert_eq!(replay.complete_text("prompt one").unwrap(), recorded);
        assert!(matches!(
            replay.complete_text("prompt two"),
            Err(GatewayError::Fixture { .. })
        ));
    }
}
