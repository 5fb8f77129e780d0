// ROUGE scores and a pairwise preference run over the demo manifest.
//
// cargo run --example rouge_eval

use std::path::PathBuf;

use stockchain::eval::{read_manifest, rouge_all, run_eval, FnJudge};
use stockchain::text::TokenScheme;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/eval.jsonl");
    let items = read_manifest(&manifest)?;

    let [r1, r2, rl] = rouge_all("预计贵州茅台下月上涨", "预计贵州茅台下月上涨，概率较大。", TokenScheme::Unicode)?;
    println!("rouge-1 {:.3}  rouge-2 {:.3}  rouge-L {:.3}", r1.f1, r2.f1, rl.f1);

    let judge = FnJudge::prefer_longer();
    let results = run_eval(&items, Some(&judge), TokenScheme::Unicode, 2)?;
    println!("{}", serde_json::to_string_pretty(&results)?);
    Ok(())
}
