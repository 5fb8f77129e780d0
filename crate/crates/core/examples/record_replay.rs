// Record extractor calls once, then replay them offline.
//
// cargo run --example record_replay -- [out_dir] [remote_url]
//
// With a URL the completions come from a live endpoint; otherwise a
// scripted stand-in answers. The replayed output is compared byte for byte.

use std::path::PathBuf;
use std::sync::Arc;

use stockchain::corpus::{Corpus, TemplateSet};
use stockchain::gateway::{ChatBackend, RecordingBackend, RemoteBackend, RemoteConfig, ReplayBackend, ScriptedBackend};
use stockchain::store::{extract_qa_pairs, extract_summary, ChatQaGenerator, ChatSummarizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| fixtures.join("replay"));
    let live: Arc<dyn ChatBackend> = match args.next() {
        Some(url) => Arc::new(RemoteBackend::new("remote", RemoteConfig::new(url))),
        None => Arc::new(
            ScriptedBackend::new("extractor-standin")
                .with_rule(
                    "question-answer",
                    r#"[{"question":"What is the meaning of k line?","answer":"A k line, or candlestick, shows the open, high, low and close prices of a stock over one period."},{"question":"What does a long lower shadow mean?","answer":"Buyers pushed the price back up from its low."}]"#,
                )
                .with_rule("summarize", "A k line (candlestick) records a period's open, high, low and close prices."),
        ),
    };

    let corpus = Corpus::load(&fixtures.join("corpus.jsonl"))?;
    let doc = corpus.document("research-kline").expect("fixture document");
    let templates = TemplateSet::builtin();

    let recorder: Arc<dyn ChatBackend> = Arc::new(RecordingBackend::new(live, &out));
    let recorded_summary = extract_summary(doc, &ChatSummarizer::new(recorder.clone(), templates.clone()))?;
    let recorded_pairs = extract_qa_pairs(doc, &ChatQaGenerator::new(recorder, templates.clone()))?;

    let replay: Arc<dyn ChatBackend> = Arc::new(ReplayBackend::open("replay", &out));
    let summary = extract_summary(doc, &ChatSummarizer::new(replay.clone(), templates.clone()))?;
    let pairs = extract_qa_pairs(doc, &ChatQaGenerator::new(replay, templates))?;
    assert_eq!(summary, recorded_summary);
    assert_eq!(pairs, recorded_pairs);

    println!("summary: {}", summary.key_text);
    for p in &pairs {
        println!("Q: {}\nA: {}", p.key_text, p.payload_text);
    }
    println!("fixtures in {}", out.display());
    Ok(())
}
