// Backtest the scripted predictions against the demo benchmark and write
// the equity curve as CSV.
//
// cargo run --example backtest_portfolio -- [curve.csv]

use std::path::PathBuf;

use stockchain::backtest::BacktestConfig;
use stockchain::service::run_backtest_files;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let scenario = demo.join("scenarios/demo");
    let artifacts = run_backtest_files(
        &scenario.join("predictions.jsonl"),
        &scenario.join("prices.jsonl"),
        Some(&scenario.join("benchmark.csv")),
        &BacktestConfig::default(),
    )?;
    print!("{}", artifacts.report_json);
    match std::env::args().nth(1) {
        Some(out) => std::fs::write(out, &artifacts.curve_csv)?,
        None => print!("{}", artifacts.curve_csv),
    }
    Ok(())
}
