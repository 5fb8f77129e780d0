//! Stage-2 multi-turn question answering over the knowledge store.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::TemplateSet;
use crate::gateway::{
    build_stage2_input, complete, AssembledInput, ChatBackend, Embedder, GatewayError, HISTORY_BUDGET_CHARS,
};
use crate::store::{GranularityFilter, KnowledgeStore, RetrievalHit, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("empty query")]
    EmptyQuery,
    #[error("invalid session id `{0}`")]
    InvalidSessionId(String),
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Retrieval(#[from] StoreError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub session_id: String,
    pub turns: Vec<Turn>,
}

impl DialogueSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            turns: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.turns.clear();
    }

    /// One JSON line per turn.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.turns.iter().enumerate() {
            out.push_str(&transcript_line(&self.session_id, i + 1, t));
            out.push('\n');
        }
        out
    }
}

fn transcript_line(session_id: &str, turn: usize, t: &Turn) -> String {
    serde_json::json!({
        "session_id": session_id,
        "turn": turn,
        "query": t.query,
        "response": t.response,
    })
    .to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct Reply {
    pub response: String,
    pub evidence: Vec<RetrievalHit>,
    /// 1-based number of the turn just recorded.
    pub turn: usize,
    pub input: AssembledInput,
}

/// Retrieve, assemble, complete. Cheap to clone; backends are shared.
#[derive(Clone)]
pub struct DialogueEngine {
    pub store: Arc<KnowledgeStore>,
    pub backend: Arc<dyn ChatBackend>,
    pub embedder: Arc<dyn Embedder>,
    pub templates: TemplateSet,
    pub k: usize,
    pub filter: GranularityFilter,
    pub history_budget: usize,
}

impl DialogueEngine {
    pub fn new(
        store: Arc<KnowledgeStore>,
        backend: Arc<dyn ChatBackend>,
        embedder: Arc<dyn Embedder>,
        templates: TemplateSet,
        k: usize,
    ) -> Self {
        Self {
            store,
            backend,
            embedder,
            templates,
            k,
            filter: GranularityFilter::Both,
            history_budget: HISTORY_BUDGET_CHARS,
        }
    }

    /// Answers `query` in the context of `session` and records the turn.
    /// An empty index degrades to the no-knowledge marker; a backend failure
    /// leaves the session untouched.
    pub fn respond(&self, session: &mut DialogueSession, query: &str) -> Result<Reply, DialogueError> {
        if query.trim().is_empty() {
            return Err(DialogueError::EmptyQuery);
        }
        let evidence = match self.store.retrieve(query, self.k, self.embedder.as_ref(), self.filter) {
            Ok(hits) => hits,
            Err(StoreError::EmptyIndex) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let input = build_stage2_input(&self.templates, &evidence, &session.turns, query, self.history_budget)?;
        let response = complete(&input, self.backend.as_ref())?;
        session.turns.push(Turn {
            query: query.to_string(),
            response: response.clone(),
        });
        Ok(Reply {
            response,
            evidence,
            turn: session.turns.len(),
            input,
        })
    }
}

pub fn validate_session_id(id: &str) -> Result<(), DialogueError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(DialogueError::InvalidSessionId(id.to_string()))
    }
}

/// Concurrent session registry. Each session has its own lock, so one
/// session handles a single respond at a time while others proceed.
/// Successful turns are appended to `<dir>/<session_id>.jsonl` when a
/// transcript directory is set.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<DialogueSession>>>>,
    transcript_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_transcripts(dir: impl AsRef<Path>) -> Self {
        Self {
            sessions: RwLock::default(),
            transcript_dir: Some(dir.as_ref().to_path_buf()),
        }
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<DialogueSession>>, DialogueError> {
        validate_session_id(id)?;
        if let Some(s) = self.sessions.read().unwrap().get(id) {
            return Ok(s.clone());
        }
        let mut w = self.sessions.write().unwrap();
        Ok(w.entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(DialogueSession::new(id))))
            .clone())
    }

    pub fn respond(&self, engine: &DialogueEngine, session_id: &str, query: &str) -> Result<Reply, DialogueError> {
        let session = self.entry(session_id)?;
        let mut session = session.lock().unwrap();
        let reply = engine.respond(&mut session, query)?;
        if let Some(dir) = &self.transcript_dir {
            let turn = session.turns.last().expect("turn just recorded");
            self.append_transcript(dir, session_id, &transcript_line(session_id, reply.turn, turn))?;
        }
        Ok(reply)
    }

    fn append_transcript(&self, dir: &Path, session_id: &str, line: &str) -> Result<(), DialogueError> {
        let path = dir.join(format!("{session_id}.jsonl"));
        let err = |e: std::io::Error| DialogueError::Transcript {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(err)?;
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(err)?;
        writeln!(f, "{line}").map_err(err)
    }

    pub fn get(&self, session_id: &str) -> Result<DialogueSession, DialogueError> {
        let sessions = self.sessions.read().unwrap();
        let s = sessions
            .get(session_id)
            .ok_or_else(|| DialogueError::NotFound(session_id.to_string()))?;
        let snapshot = s.lock().unwrap().clone();
        Ok(snapshot)
    }

    /// Clears a session's turns, keeping its id.
    pub fn reset(&self, session_id: &str) -> Result<(), DialogueError> {
        let session = self
            .sessions
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| DialogueError::NotFound(session_id.to_string()))?;
        session.lock().unwrap().reset();
        Ok(())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }
}
