// Load the demo corpus and print its inventory.
//
// cargo run --example ingest_corpus -- [corpus.jsonl]

use std::path::PathBuf;

use stockchain::corpus::{Corpus, DocKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/corpus.jsonl"));
    let corpus = Corpus::load(&path)?;
    let stats = corpus.stats();
    for kind in [DocKind::Report, DocKind::MarketData, DocKind::News, DocKind::Research, DocKind::StockQa] {
        println!("{:<12} {}", kind.as_str(), stats.count(kind));
    }
    println!("prediction targets: {}", corpus.prediction_targets().len());
    Ok(())
}
