//! Uniform access to language-model and embedding backends, plus assembly
//! of the stage-1 and stage-2 model inputs.

mod assemble;
mod chat;
mod embed;
mod fixture;
mod http;

pub use assemble::{
    build_stage1_input, build_stage2_input, AssembledInput, InputPart, PartRole, Stage, HISTORY_BUDGET_CHARS,
    NO_KNOWLEDGE_MARKER, SECTION_SEPARATOR,
};
pub use chat::{
    complete, BackendKind, ChatBackend, DecodingStrategy, FnBackend, GenerationConfig, RecordingBackend,
    RemoteBackend, ReplayBackend, ScriptedBackend,
};
pub use embed::{
    Embedder, HashingEmbedder, RecordingEmbedder, RemoteEmbedder, ReplayEmbedder, ScriptedEmbedder,
};
pub use http::RemoteConfig;

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error from `{backend}` after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("backend `{backend}` returned an unexpected payload: {message}")]
    Protocol { backend: String, message: String },
    #[error("no fixture in `{backend}` for input digest {digest}")]
    Fixture { backend: String, digest: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl GatewayError {
    /// Transport failures may succeed on a later call.
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

/// Hex SHA-256 of the input text; the key for every fixture file.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_hex() {
        assert_eq!(
            digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
