// Extract summaries from the demo corpus, embed them and query the index.
//
// cargo run --example build_index -- [query]

use std::path::PathBuf;

use stockchain::corpus::Corpus;
use stockchain::gateway::HashingEmbedder;
use stockchain::store::{build_store, ExtractionPlan, GranularityFilter, HeadSummarizer, KnowledgeStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "What is the meaning of k line?".into());
    let corpus = Corpus::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/corpus.jsonl"))?;
    let embedder = HashingEmbedder::new(64);
    let summarizer = HeadSummarizer::new(512);
    let plan = ExtractionPlan {
        summarizer: Some(&summarizer),
        qa_generator: None,
        kinds: ExtractionPlan::default_kinds(),
    };
    let store = build_store(corpus.documents(), &plan, &embedder)?;
    println!("{} records", store.len());

    // Round-trip through JSON to show the saved form ranks identically.
    let reloaded = KnowledgeStore::from_json(&store.to_json())?;
    for hit in reloaded.retrieve(&query, 3, &embedder, GranularityFilter::Both)? {
        println!("{:.4}  {}", hit.score, hit.record.unit.doc_id);
    }
    Ok(())
}
