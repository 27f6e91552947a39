//! `ctxsql` command-line front end.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxsql_core::context::{ChunkParams, DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP, DEFAULT_TOP_K};
use ctxsql_core::eval::{
    build_report, fisher_exact_2x2, fisher_exact_rxc, format_p_value, render_boxplot_csv, render_csv, render_text,
    run_phase, ContingencyTable, Dataset, FisherOptions, LabelStore, PhaseRun, ReportOptions, DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_MAX_TABLES, DEFAULT_MC_DRAWS, DEFAULT_MC_SEED,
};
use ctxsql_core::llm::ProviderMode;
use ctxsql_core::pipeline::{build_environments, CorpusSources, PhaseEnvironment, QueryRequest};
use ctxsql_core::sql::{categorize_scores, complexity_score, five_number_summary, ComplexityInput, SqlAnalysis};
use ctxsql_core::util::FixedClock;
use ctxsql_core::{ExactProbability, Phase, Scalar, SchemaCatalog};
use ctxsql_service::config::{
    BandingConfig, CorpusConfig, EmbedderKind, EmbeddingConfig, ExtractionConfig, LabelsConfig, ProviderConfig,
};
use ctxsql_service::{load_workbench, ServiceConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ctxsql", version, about = "Context-aware text-to-SQL workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract structural features and the complexity score of one SELECT.
    Score {
        /// SQL file; standard input when omitted or `-`.
        file: Option<PathBuf>,
        /// Minutes an analyst needs to write the query by hand.
        #[arg(long, default_value_t = 0)]
        time_to_create: u32,
        /// Also validate table and column references against this schema.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Split scores into low/medium/high bands at the 25th and 75th percentiles.
    Band {
        /// Scores separated by commas or whitespace, or a JSON array; standard
        /// input when omitted or `-`.
        file: Option<PathBuf>,
        /// Band the reference-SQL scores of a dataset instead.
        #[arg(long, conflicts_with = "file")]
        dataset: Option<PathBuf>,
    },
    /// Chunk and embed the three phase corpora into index sidecars.
    Ingest {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: usize,
        #[arg(long, value_enum, default_value_t = Embedder::Local)]
        embedder: Embedder,
        /// Directory receiving `phaseN.index.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one question and print the full result record.
    Query {
        #[arg(long)]
        phase: Phase,
        #[arg(long)]
        nlq: String,
        /// Dataset id used as the replay key.
        #[arg(long)]
        nlq_id: Option<String>,
        #[arg(long)]
        time_to_create: Option<u32>,
        #[command(flatten)]
        setup: SetupArgs,
    },
    /// Run a dataset through one or more phases and save the run files.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        /// Phase to run; repeat for several. All three when omitted.
        #[arg(long = "phase")]
        phases: Vec<Phase>,
        /// Seed for the presentation order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
        max_in_flight: usize,
        /// Directory receiving `phaseN.run.json`.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
    },
    /// Label saved runs and print outcome tables by complexity band.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// JSON Lines label log; may be the service feedback log.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Fail on unlabeled cases instead of suggesting a label.
        #[arg(long)]
        no_auto_label: bool,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[command(flatten)]
        fisher: FisherArgs,
    },
    /// Fisher exact test on a contingency table written as `a,b;c,d`.
    Stats {
        #[arg(long)]
        table: String,
        #[command(flatten)]
        fisher: FisherArgs,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Override the listen address from the config.
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Args, Clone)]
struct CorpusArgs {
    #[arg(long, default_value = "data/sample/schema.json")]
    schema: PathBuf,
    /// JSON array of the table names kept for the narrowed phase.
    #[arg(long, default_value = "data/sample/narrowed_tables.json")]
    narrowed: PathBuf,
    #[arg(long, default_value = "data/sample/business_context.md")]
    context: PathBuf,
}

#[derive(Args, Clone)]
struct SetupArgs {
    /// Take corpus, provider and retrieval settings from a service config.
    /// Other flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Load prebuilt index sidecars from this directory.
    #[arg(long)]
    index_dir: Option<PathBuf>,
    /// Answer from a replay file instead of the remote model.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    refusal_patterns: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, value_enum)]
    embedder: Option<Embedder>,
}

#[derive(Args, Clone, Copy)]
struct FisherArgs {
    /// Enumerate exactly up to this many tables, else use Monte Carlo.
    #[arg(long, default_value_t = DEFAULT_MAX_TABLES)]
    max_tables: u64,
    #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
    draws: u64,
    #[arg(long, default_value_t = DEFAULT_MC_SEED)]
    mc_seed: u64,
}

impl From<FisherArgs> for FisherOptions {
    fn from(a: FisherArgs) -> Self {
        FisherOptions { max_tables: a.max_tables, mc_draws: a.draws, seed: a.mc_seed }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Embedder {
    Local,
    Remote,
}

impl From<Embedder> for EmbedderKind {
    fn from(e: Embedder) -> Self {
        match e {
            Embedder::Local => EmbedderKind::Local,
            Embedder::Remote => EmbedderKind::Remote,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
    Json,
    Boxplot,
}

fn read_input(file: Option<&Path>) -> Result<String> {
    match file {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("reading standard input")?;
            Ok(s)
        }
    }
}

/// Write to stdout; a closed pipe (`ctxsql ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn service_config(setup: &SetupArgs) -> Result<ServiceConfig> {
    let mut config = match &setup.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig {
            listen: String::new(),
            top_k: DEFAULT_TOP_K,
            corpus: CorpusConfig {
                schema: setup.corpus.schema.clone(),
                narrowed_tables: setup.corpus.narrowed.clone(),
                context: setup.corpus.context.clone(),
                index_dir: None,
                chunk_size: DEFAULT_CHUNK_SIZE,
                overlap: DEFAULT_OVERLAP,
            },
            provider: ProviderConfig { mode: ProviderMode::Remote, replay_file: None },
            embedding: EmbeddingConfig::default(),
            labels: LabelsConfig { feedback_log: PathBuf::new() },
            extraction: ExtractionConfig::default(),
            banding: BandingConfig::default(),
        },
    };
    if let Some(replay) = &setup.replay {
        config.provider = ProviderConfig { mode: ProviderMode::Replay, replay_file: Some(replay.clone()) };
    }
    if setup.index_dir.is_some() {
        config.corpus.index_dir = setup.index_dir.clone();
    }
    if setup.refusal_patterns.is_some() {
        config.extraction.refusal_patterns = setup.refusal_patterns.clone();
    }
    if let Some(k) = setup.top_k {
        if k == 0 {
            bail!("--top-k must be at least 1");
        }
        config.top_k = k;
    }
    if let Some(e) = setup.embedder {
        config.embedding.kind = e.into();
    }
    Ok(config)
}

fn parse_scores(text: &str) -> Result<Vec<f64>> {
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    trimmed
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("not a number: {s:?}")))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score { file, time_to_create, schema } => {
            let sql = read_input(file.as_deref())?;
            let analysis = SqlAnalysis::parse(&sql)?;
            let features = analysis.features();
            let score = complexity_score(&ComplexityInput { features, time_to_create });
            let validation = match schema {
                Some(path) => Some(analysis.validate(&SchemaCatalog::load_file(&path)?)),
                None => None,
            };
            print_json(&json!({ "features": features, "score": score, "validation": validation }))
        }
        Command::Band { file, dataset } => {
            let (ids, scores): (Option<Vec<String>>, Vec<f64>) = match dataset {
                Some(path) => {
                    let d = Dataset::load_file(&path)?;
                    let mut ids = Vec::new();
                    let mut scores = Vec::new();
                    for c in &d.cases {
                        if let Some(score) = c.reference_score() {
                            ids.push(c.id.clone());
                            scores.push(f64::from(score?));
                        }
                    }
                    (Some(ids), scores)
                }
                None => (None, parse_scores(&read_input(file.as_deref())?)?),
            };
            let banding = categorize_scores(&scores)?;
            let summary = five_number_summary(&scores)?;
            print_json(&json!({
                "method": banding.method,
                "thresholds": banding.thresholds,
                "counts": { "low": banding.counts[0], "medium": banding.counts[1], "high": banding.counts[2] },
                "ids": ids,
                "scores": scores,
                "bands": banding.bands,
                "summary": summary,
            }))
        }
        Command::Ingest { corpus, chunk_size, overlap, embedder, out } => {
            let sources = CorpusSources::load(&corpus.schema, &corpus.narrowed, &corpus.context)?;
            let params = ChunkParams::new(chunk_size, overlap)?;
            let embedder = ctxsql_service::state::make_embedder(embedder.into())?;
            let envs = build_environments(&sources, params, embedder.as_ref())?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut written = Vec::new();
            for (phase, env) in &envs {
                let path = PhaseEnvironment::<Scalar>::sidecar_path(&out, *phase);
                env.save(&path)?;
                written.push(json!({
                    "phase": phase,
                    "path": path,
                    "chunks": env.index.len(),
                    "corpus_hash": env.corpus_hash(),
                }));
            }
            print_json(&json!({
                "embedder": embedder.id(),
                "dropped_foreign_keys": sources.dropped_foreign_keys,
                "indices": written,
            }))
        }
        Command::Query { phase, nlq, nlq_id, time_to_create, setup } => {
            let (envs, workbench) = load_workbench(&service_config(&setup)?)?;
            let request = QueryRequest { nlq, phase, time_to_create, nlq_id };
            let result = workbench.answer_nlq(&request, &envs[&phase])?;
            print_json(&result)
        }
        Command::Evaluate { dataset, phases, seed, max_in_flight, out, setup } => {
            let dataset = Dataset::load_file(&dataset)?;
            let config = service_config(&setup)?;
            let (envs, mut workbench) = load_workbench(&config)?;
            if config.provider.mode == ProviderMode::Replay {
                workbench.clock = Arc::new(FixedClock(0));
            }
            let mut phases = if phases.is_empty() { Phase::ALL.to_vec() } else { phases };
            phases.sort();
            phases.dedup();
            let mut summary = Vec::new();
            for phase in phases {
                let run = run_phase(&dataset, phase, &envs[&phase], &workbench, seed, max_in_flight)?;
                let errored = run.results.values().filter(|r| r.answered().is_none()).count();
                let path = run.save_in(&out)?;
                summary.push(json!({ "phase": phase, "path": path, "cases": run.results.len(), "errored": errored }));
            }
            print_json(&json!({ "seed": seed, "runs": summary }))
        }
        Command::Report { runs, dataset, labels, no_auto_label, format, fisher } => {
            let dataset = Dataset::load_file(&dataset)?;
            let runs = PhaseRun::load_dir(&runs)?;
            if runs.is_empty() {
                bail!("no phaseN.run.json files found");
            }
            let labels = match labels {
                Some(path) => LabelStore::load_file(&path)?,
                None => LabelStore::default(),
            };
            let options = ReportOptions { auto_label: !no_auto_label, fisher: fisher.into() };
            let report = build_report(&dataset, &runs, &labels, &options)?;
            match format {
                ReportFormat::Text => emit(&render_text(&report)),
                ReportFormat::Csv => emit(&render_csv(&report)),
                ReportFormat::Boxplot => emit(&render_boxplot_csv(&report)),
                ReportFormat::Json => print_json(&report),
            }
        }
        Command::Stats { table, fisher } => {
            let table: ContingencyTable = table.parse()?;
            let result = fisher_exact_rxc::<f64>(&table.cells, &fisher.into())?;
            let exact = match table.cells.as_slice() {
                [r1, r2] if r1.len() == 2 && r2.len() == 2 => {
                    let p = fisher_exact_2x2::<ExactProbability>([[r1[0], r1[1]], [r2[0], r2[1]]]).p_value;
                    Some(p.to_string())
                }
                _ => None,
            };
            print_json(&json!({
                "table": table.to_string(),
                "row_sums": table.row_sums(),
                "col_sums": table.col_sums(),
                "p_value": result.p_value,
                "p_value_display": format_p_value(result.p_value),
                "p_value_exact": exact,
                "method": result.method,
                "total_mass": result.total_mass,
            }))
        }
        Command::Serve { config, listen } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .init();
            let mut config = ServiceConfig::load(&config)?;
            if let Some(listen) = listen {
                config.listen = listen;
            }
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(ctxsql_service::serve(config))?;
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
