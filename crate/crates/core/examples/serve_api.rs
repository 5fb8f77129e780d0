// Serve the JSON API over the demo corpus and scenarios.
//
// cargo run --example serve_api -- [port]
// curl -s localhost:8080/api/chat -d '{"session_id":"s1","query":"What is the meaning of k line?"}' -H 'content-type: application/json'

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use stockchain::corpus::{Corpus, TemplateSet};
use stockchain::dialogue::{DialogueEngine, SessionStore};
use stockchain::gateway::{HashingEmbedder, ScriptedBackend};
use stockchain::service::{serve, AppState};
use stockchain::store::{build_store, ExtractionPlan, HeadSummarizer};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let port: u16 = std::env::args().nth(1).map(|p| p.parse()).transpose()?.unwrap_or(8080);
    let demo = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let corpus = Corpus::load(&demo.join("corpus.jsonl"))?;
    let embedder = Arc::new(HashingEmbedder::new(64));
    let plan = ExtractionPlan {
        summarizer: Some(&HeadSummarizer::new(512)),
        qa_generator: None,
        kinds: ExtractionPlan::default_kinds(),
    };
    let store = Arc::new(build_store(corpus.documents(), &plan, embedder.as_ref())?);
    let model = Arc::new(ScriptedBackend::load(&demo.join("model.json"))?);
    let engine = DialogueEngine::new(store, model, embedder, TemplateSet::builtin(), 3);
    let state = AppState::new(engine, SessionStore::new(), Some(demo.join("scenarios")), 0.0);
    serve(state, SocketAddr::from(([127, 0, 0, 1], port))).await?;
    Ok(())
}
