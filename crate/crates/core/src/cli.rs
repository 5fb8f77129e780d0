//! Command-line adapter. Every subcommand is a thin wrapper over the library;
//! failures print one JSON line on stderr and exit 1, usage errors exit 2.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::backtest::BacktestConfig;
use crate::corpus::{Corpus, Month, TemplateSet};
use crate::dialogue::{DialogueEngine, SessionStore};
use crate::eval::{read_manifest, run_eval};
use crate::prediction::{predict_corpus, write_predictions, DirectionLexicon};
use crate::service::{self, AppState, ConfigLayer, Evidence, RunConfig, RunMetadata, ENV_PREFIX};
use crate::store::{build_store, ExtractionPlan, GranularityFilter, KnowledgeStore};
use crate::text::TokenScheme;
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "stockchain", version, about = "Stock trend prediction, backtesting and financial Q&A")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chat model backend spec.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Embedding backend spec.
    #[arg(long, global = true)]
    pub embedder: Option<String>,
    /// Summary extractor spec.
    #[arg(long, global = true)]
    pub extractor: Option<String>,
    /// QA-pair extractor spec; QA extraction is skipped when absent.
    #[arg(long, global = true)]
    pub qa_extractor: Option<String>,
    /// Template directory overriding the built-in prompts.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and print its inventory.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract, embed and index a corpus.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query an index; prints one JSON hit per line.
    Retrieve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(short = 'q', long)]
        query: String,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long, default_value = "both", value_parser = parse_filter)]
        granularity: GranularityFilter,
    },
    /// Stage-1 trend prediction for every company-month in the corpus.
    Predict {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        start: Option<Month>,
        #[arg(long)]
        end: Option<Month>,
    },
    /// Backtest a predictions file against monthly prices.
    Backtest {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long)]
        rf: Option<f64>,
        #[arg(long)]
        start: Option<Month>,
        #[arg(long)]
        end: Option<Month>,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Equity-curve CSV path.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// ROUGE and pairwise preference evaluation over a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        judge: Option<String>,
        #[arg(long, default_value = "unicode", value_parser = parse_scheme)]
        tokenizer: TokenScheme,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-turn Q&A. Queries come from `-q` flags, else one per stdin line.
    Chat {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value = "cli")]
        session: String,
        #[arg(short = 'q', long = "query")]
        queries: Vec<String>,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: Option<u16>,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
}

fn parse_filter(s: &str) -> Result<GranularityFilter, String> {
    match s {
        "both" => Ok(GranularityFilter::Both),
        "summary" => Ok(GranularityFilter::SummaryOnly),
        "qa" => Ok(GranularityFilter::QaOnly),
        _ => Err(format!("expected both, summary or qa; got `{s}`")),
    }
}

fn parse_scheme(s: &str) -> Result<TokenScheme, String> {
    match s {
        "unicode" => Ok(TokenScheme::Unicode),
        "whitespace" => Ok(TokenScheme::Whitespace),
        _ => Err(format!("expected unicode or whitespace; got `{s}`")),
    }
}

impl Cli {
    fn flag_layer(&self) -> ConfigLayer {
        let g = &self.global;
        let mut layer = ConfigLayer {
            model: g.model.clone(),
            embedder: g.embedder.clone(),
            extractor: g.extractor.clone(),
            qa_extractor: g.qa_extractor.clone(),
            templates: g.templates.clone(),
            seed: g.seed,
            ..Default::default()
        };
        match &self.command {
            Command::Index { corpus, .. } | Command::Predict { corpus, .. } => layer.corpus = corpus.clone(),
            Command::Retrieve { index, k, .. } => {
                layer.index = index.clone();
                layer.k = *k;
            }
            Command::Backtest { rf, .. } => layer.rf = *rf,
            Command::Eval { judge, .. } => layer.judge = judge.clone(),
            Command::Chat {
                index, k, transcripts, ..
            } => {
                layer.index = index.clone();
                layer.k = *k;
                layer.transcripts = transcripts.clone();
            }
            Command::Serve {
                index,
                port,
                k,
                scenarios,
                transcripts,
                ..
            } => {
                layer.index = index.clone();
                layer.port = *port;
                layer.k = *k;
                layer.scenarios = scenarios.clone();
                layer.transcripts = transcripts.clone();
            }
            Command::Ingest { .. } => {}
        }
        layer
    }
}

/// `STOCKCHAIN_*` variables from the process environment.
pub fn process_env() -> HashMap<String, String> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Error> {
    p.as_deref().ok_or_else(|| {
        Error::Config(service::ConfigError::Invalid(format!(
            "no {what} path given (--{what} or {ENV_PREFIX}{})",
            what.to_uppercase()
        )))
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_meta(meta: &RunMetadata, artifact: &Path) -> Result<(), Error> {
    meta.write_beside(artifact).map_err(|e| Error::io(artifact, e))
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn window(start: Option<Month>, end: Option<Month>) -> Result<Option<(Month, Month)>, Error> {
    match (start, end) {
        (None, None) => Ok(None),
        (Some(s), Some(e)) if s <= e => Ok(Some((s, e))),
        _ => Err(Error::Config(service::ConfigError::Invalid(
            "--start and --end must be given together with start <= end".into(),
        ))),
    }
}

fn load_templates(config: &RunConfig) -> Result<TemplateSet, Error> {
    Ok(match &config.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::builtin(),
    })
}

fn engine(config: &RunConfig, templates: &TemplateSet) -> Result<DialogueEngine, Error> {
    let index = required(&config.index, "index")?;
    let store = KnowledgeStore::load(index)?;
    let api_key = config.api_key.as_deref();
    Ok(DialogueEngine::new(
        Arc::new(store),
        service::chat_backend(config.model_spec()?, api_key)?,
        service::embedder(&config.embedder, api_key)?,
        templates.clone(),
        config.k,
    ))
}

/// Runs one parsed command.
pub fn execute(
    cli: Cli,
    env: &HashMap<String, String>,
    stdout: &mut dyn Write,
    stdin: &mut dyn BufRead,
) -> Result<(), Error> {
    let config = RunConfig::resolve(cli.global.config.as_deref(), env, &cli.flag_layer())?;
    config.check_paths()?;
    let templates = load_templates(&config)?;
    let api_key = config.api_key.as_deref();
    let out_err = |e: std::io::Error| Error::Io {
        path: "<stdout>".into(),
        message: e.to_string(),
    };
    match cli.command {
        Command::Ingest { corpus, out } => {
            let stats = Corpus::load(&corpus)?.stats();
            let text = pretty(&stats);
            match out {
                Some(p) => write_text(&p, &text)?,
                None => stdout.write_all(text.as_bytes()).map_err(out_err)?,
            }
        }
        Command::Index { out, .. } => {
            let corpus = Corpus::load(required(&config.corpus, "corpus")?)?;
            let embedder = service::embedder(&config.embedder, api_key)?;
            let summarizer = service::summarizer(&config.extractor, &templates, api_key)?;
            let qa = config
                .qa_extractor
                .as_deref()
                .map(|s| service::qa_generator(s, &templates, api_key))
                .transpose()?;
            let plan = ExtractionPlan {
                summarizer: Some(summarizer.as_ref()),
                qa_generator: qa.as_deref(),
                kinds: ExtractionPlan::default_kinds(),
            };
            let store = build_store(corpus.documents(), &plan, embedder.as_ref())?;
            store.save(&out)?;
            write_meta(&RunMetadata::new("index", &config, &templates), &out)?;
            writeln!(stdout, "{}", serde_json::json!({"index": out, "records": store.len()})).map_err(out_err)?;
        }
        Command::Retrieve { query, granularity, .. } => {
            let store = KnowledgeStore::load(required(&config.index, "index")?)?;
            let embedder = service::embedder(&config.embedder, api_key)?;
            for hit in store.retrieve(&query, config.k, embedder.as_ref(), granularity)? {
                let line = serde_json::to_string(&Evidence::from(&hit)).expect("hit serializes");
                writeln!(stdout, "{line}").map_err(out_err)?;
            }
        }
        Command::Predict { out, start, end, .. } => {
            let corpus = Corpus::load(required(&config.corpus, "corpus")?)?;
            let backend = service::chat_backend(config.model_spec()?, api_key)?;
            let preds = predict_corpus(
                &corpus,
                backend.as_ref(),
                &templates,
                &DirectionLexicon::default(),
                window(start, end)?,
            )?;
            write_predictions(&out, &preds)?;
            write_meta(&RunMetadata::new("predict", &config, &templates), &out)?;
        }
        Command::Backtest {
            predictions,
            prices,
            benchmark,
            start,
            end,
            out,
            curve,
            ..
        } => {
            let bt = BacktestConfig {
                rf: config.rf,
                window: window(start, end)?,
                ..BacktestConfig::default()
            };
            let artifacts = service::run_backtest_files(&predictions, &prices, benchmark.as_deref(), &bt)?;
            match out {
                Some(p) => {
                    write_text(&p, &artifacts.report_json)?;
                    write_meta(&RunMetadata::new("backtest", &config, &templates), &p)?;
                }
                None => stdout.write_all(artifacts.report_json.as_bytes()).map_err(out_err)?,
            }
            if let Some(p) = curve {
                write_text(&p, &artifacts.curve_csv)?;
            }
        }
        Command::Eval {
            manifest,
            tokenizer,
            parallelism,
            out,
            ..
        } => {
            let items = read_manifest(&manifest)?;
            let judge = config
                .judge
                .as_deref()
                .map(|s| service::judge(s, &templates, api_key))
                .transpose()?;
            let results = run_eval(&items, judge.as_deref(), tokenizer, parallelism)?;
            let text = pretty(&results);
            match out {
                Some(p) => {
                    write_text(&p, &text)?;
                    write_meta(&RunMetadata::new("eval", &config, &templates), &p)?;
                }
                None => stdout.write_all(text.as_bytes()).map_err(out_err)?,
            }
        }
        Command::Chat { session, queries, .. } => {
            let engine = engine(&config, &templates)?;
            let sessions = match &config.transcripts {
                Some(dir) => SessionStore::with_transcripts(dir),
                None => SessionStore::new(),
            };
            let ask = |q: &str, stdout: &mut dyn Write| -> Result<(), Error> {
                let reply = sessions.respond(&engine, &session, q)?;
                let evidence: Vec<serde_json::Value> = reply
                    .evidence
                    .iter()
                    .map(|h| serde_json::json!({"doc_id": h.record.unit.doc_id, "score": h.score}))
                    .collect();
                let line = serde_json::json!({"turn": reply.turn, "response": reply.response, "evidence": evidence});
                writeln!(stdout, "{line}").map_err(out_err)
            };
            if queries.is_empty() {
                for line in stdin.lines() {
                    let line = line.map_err(|e| Error::Io {
                        path: "<stdin>".into(),
                        message: e.to_string(),
                    })?;
                    if !line.trim().is_empty() {
                        ask(&line, stdout)?;
                    }
                }
            } else {
                for q in &queries {
                    ask(q, stdout)?;
                }
            }
        }
        Command::Serve { host, .. } => {
            let engine = engine(&config, &templates)?;
            let sessions = match &config.transcripts {
                Some(dir) => SessionStore::with_transcripts(dir),
                None => SessionStore::new(),
            };
            let addr: SocketAddr = format!("{host}:{}", config.port).parse().map_err(|e| {
                Error::Config(service::ConfigError::Invalid(format!("bad listen address: {e}")))
            })?;
            let state = AppState::new(engine, sessions, config.scenarios.clone(), config.rf);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
                path: "<runtime>".into(),
                message: e.to_string(),
            })?;
            rt.block_on(service::serve(state, addr)).map_err(|e| Error::Io {
                path: addr.to_string(),
                message: e.to_string(),
            })?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdin = std::io::stdin();
    match execute(cli, &process_env(), &mut std::io::stdout().lock(), &mut stdin.lock()) {
        Ok(()) => 0,
        Err(e) => {
            let line = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{line}");
            1
        }
    }
}
