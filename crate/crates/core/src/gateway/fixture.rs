use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{digest, GatewayError};

/// A directory of `<digest>.json` files keyed by the digest of the input text.
#[derive(Debug, Clone)]
pub(crate) struct FixtureDir {
    dir: PathBuf,
}

impl FixtureDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn file_for(&self, input: &str) -> (String, PathBuf) {
        let d = digest(input);
        let path = self.dir.join(format!("{d}.json"));
        (d, path)
    }

    /// Returns `Ok(None)` when no fixture exists for `input`.
    pub fn read<T: DeserializeOwned>(&self, input: &str) -> Result<Option<(String, T)>, GatewayError> {
        let (d, path) = self.file_for(input);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| GatewayError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let value = serde_json::from_str(&text).map_err(|e| GatewayError::Io {
            path: path.display().to_string(),
            message: format!("bad fixture: {e}"),
        })?;
        Ok(Some((d, value)))
    }

    pub fn write<T: Serialize>(&self, input: &str, value: &T) -> Result<(), GatewayError> {
        let (_, path) = self.file_for(input);
        let io = |e: std::io::Error| GatewayError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let mut text = serde_json::to_string_pretty(value).expect("fixture serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(io)
    }
}
