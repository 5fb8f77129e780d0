// A three-turn stage-2 conversation over the demo knowledge store.
//
// cargo run --example dialogue_session

use std::path::PathBuf;
use std::sync::Arc;

use stockchain::corpus::{Corpus, TemplateSet};
use stockchain::dialogue::{DialogueEngine, DialogueSession};
use stockchain::gateway::{HashingEmbedder, ScriptedBackend};
use stockchain::store::{build_store, ExtractionPlan, HeadSummarizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
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

    let mut session = DialogueSession::new("demo");
    for q in [
        "What is the meaning of k line?",
        "How did liquor stocks trade?",
        "And battery makers?",
    ] {
        let reply = engine.respond(&mut session, q)?;
        let docs: Vec<_> = reply.evidence.iter().map(|h| h.record.unit.doc_id.as_str()).collect();
        println!("[{}] {q}\n  -> {}\n  evidence {docs:?}", reply.turn, reply.response);
    }
    print!("{}", session.transcript_jsonl());
    Ok(())
}
