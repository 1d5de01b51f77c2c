//! Command-line entry points.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shelf_core::behavior::{load_logs, InteractionLog};
use shelf_core::catalog::load_catalog;
use shelf_core::engine::{load_group_file, load_model_file};
use shelf_core::eval::{evaluate, EvalConfig};
use shelf_core::index::InstantIndex;
use shelf_core::organizer::default_group_definitions;
use shelf_core::ranker::{label_from_logs, train, RelevanceModel, TrainConfig, FEATURE_NAMES};
use shelf_core::sim::{simulate, synthetic_catalog, CatalogSpec, SimConfig};
use shelf_core::{Catalog, EngineConfig, EngineSnapshot, Sources};

use crate::app::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "shelf", version, about = "Instant search over an entertainment catalog")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a catalog, build the prefix index and report its size.
    Index(IndexArgs),
    /// Generate a synthetic catalog.
    GenCatalog(GenCatalogArgs),
    /// Generate synthetic interaction logs over a catalog.
    Simulate(SimulateArgs),
    /// Fit the relevance model on logged selections.
    Train(TrainArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Replay held-out sessions and report metrics.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    #[arg(long, env = "SHELF_CATALOG")]
    pub catalog: PathBuf,
    #[arg(long, env = "SHELF_LOGS")]
    pub logs: Option<PathBuf>,
    /// Relevance model JSON; the built-in prior is used when absent.
    #[arg(long, env = "SHELF_MODEL")]
    pub model: Option<PathBuf>,
    /// Group definition JSON; the bundled definitions are used when absent.
    #[arg(long, env = "SHELF_GROUPS")]
    pub groups: Option<PathBuf>,
}

impl SourceArgs {
    fn sources(&self) -> Sources {
        Sources {
            catalog: self.catalog.clone(),
            logs: self.logs.clone(),
            model: self.model.clone(),
            groups: self.groups.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long, env = "SHELF_CATALOG")]
    pub catalog: PathBuf,
    /// Where to write the index manifest; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenCatalogArgs {
    #[arg(long, default_value_t = 1000)]
    pub entities: usize,
    #[arg(long, default_value_t = 0.15)]
    pub unavailable: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, env = "SHELF_CATALOG")]
    pub catalog: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub profiles: usize,
    #[arg(long, default_value_t = 500)]
    pub fetch_sessions: usize,
    #[arg(long, default_value_t = 500)]
    pub explore_sessions: usize,
    #[arg(long, default_value_t = 5)]
    pub session_length: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "SHELF_CATALOG")]
    pub catalog: PathBuf,
    #[arg(long, env = "SHELF_LOGS")]
    pub logs: PathBuf,
    #[arg(long, env = "SHELF_GROUPS")]
    pub groups: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// Impressions replayed per logged query.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub sources: SourceArgs,
    #[arg(long, env = "SHELF_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "SHELF_PORT", default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub sources: SourceArgs,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 12)]
    pub max_prefix: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index(args) => cmd_index(&args),
        Command::GenCatalog(args) => cmd_gen_catalog(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Serve(args) => cmd_serve(&args),
        Command::Eval(args) => cmd_eval(&args),
    }
}

fn read_catalog(path: &Path) -> Result<Catalog> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_catalog(std::io::BufReader::new(file)).with_context(|| format!("loading catalog {}", path.display()))
}

fn read_logs(path: &Path, catalog: &Catalog) -> Result<InteractionLog> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_logs(std::io::BufReader::new(file), catalog).with_context(|| format!("loading logs {}", path.display()))
}

/// Runs `body` against `--out` or stdout.
fn with_output(out: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    with_output(out, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

#[derive(Debug, Serialize)]
struct IndexManifest {
    catalog: PathBuf,
    entities: usize,
    videos: usize,
    talents: usize,
    collections: usize,
    indexed_docs: usize,
    distinct_prefixes: usize,
}

pub fn cmd_index(args: &IndexArgs) -> Result<()> {
    let catalog = read_catalog(&args.catalog)?;
    if catalog.is_empty() {
        tracing::warn!(catalog = %args.catalog.display(), "catalog is empty; nothing to index");
    }
    let index = InstantIndex::build(&catalog);
    let manifest = IndexManifest {
        catalog: args.catalog.clone(),
        entities: catalog.len(),
        videos: catalog.video_count(),
        talents: catalog.talent_count(),
        collections: catalog.collection_count(),
        indexed_docs: index.doc_count(),
        distinct_prefixes: index.prefix_count(),
    };
    write_json(args.out.as_deref(), &manifest)
}

pub fn cmd_gen_catalog(args: &GenCatalogArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.unavailable) {
        bail!("--unavailable must lie in [0, 1]");
    }
    let spec = CatalogSpec { unavailable_fraction: args.unavailable, ..CatalogSpec::with_entities(args.entities, args.seed) };
    let catalog = synthetic_catalog(&spec);
    with_output(args.out.as_deref(), |w| catalog.write_jsonl(w))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let catalog = read_catalog(&args.catalog)?;
    let config = SimConfig {
        n_profiles: args.profiles,
        n_fetch_sessions: args.fetch_sessions,
        n_explore_sessions: args.explore_sessions,
        explore_session_length: args.session_length,
        seed: args.seed,
        ..SimConfig::default()
    };
    let log = simulate(&config, &catalog)?;
    with_output(args.out.as_deref(), |w| log.write_jsonl(w))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let catalog = read_catalog(&args.catalog)?;
    let log = read_logs(&args.logs, &catalog)?;
    let groups = match &args.groups {
        Some(p) => load_group_file(p)?,
        None => default_group_definitions(),
    };
    // Impressions are replayed with the prior model, standing in for the
    // ranking that was live when the logs were recorded.
    let snapshot = EngineSnapshot::build(catalog, &log, RelevanceModel::prior(), groups, EngineConfig::default(), 1);
    let data = label_from_logs(&log, |q| {
        snapshot.search(q, args.k).ranked.into_iter().map(|r| (r.video, r.features)).collect()
    });
    tracing::info!(
        positives = data.positives,
        negatives = data.negatives,
        skipped = data.skipped,
        "labeled logged selections"
    );
    let config = TrainConfig { learning_rate: args.learning_rate, epochs: args.epochs, l2: args.l2 };
    let outcome = train(&data.examples, config).context("training the relevance model")?;
    let every = (args.epochs / 20).max(1);
    for (epoch, loss) in outcome.losses.iter().enumerate() {
        if epoch % every == 0 || epoch == outcome.losses.len() - 1 {
            eprintln!("epoch {epoch:>5} loss {loss:.6}");
        }
    }
    for (name, w) in FEATURE_NAMES.iter().zip(outcome.model.weights.iter()) {
        tracing::debug!(feature = name, weight = w);
    }
    with_output(args.out.as_deref(), |w| writeln!(w, "{}", outcome.model.to_json()))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    if !(args.holdout > 0.0 && args.holdout < 1.0) {
        bail!("--holdout must lie in (0, 1)");
    }
    let catalog = read_catalog(&args.sources.catalog)?;
    let log = match &args.sources.logs {
        Some(p) => read_logs(p, &catalog)?,
        None => bail!("eval needs --logs"),
    };
    let model = match &args.sources.model {
        Some(p) => load_model_file(p)?,
        None => RelevanceModel::prior(),
    };
    let groups = match &args.sources.groups {
        Some(p) => load_group_file(p)?,
        None => default_group_definitions(),
    };
    let config = EvalConfig { holdout: args.holdout, seed: args.seed, k: args.k, max_prefix: args.max_prefix };
    let report = evaluate(&catalog, &log, model, groups, EngineConfig::default(), &config);
    write_json(args.out.as_deref(), &report)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    // Everything is loaded and validated before the port is bound.
    let state = AppState::load(args.sources.sources(), EngineConfig::default()).context("loading snapshot")?;
    let snapshot = state.snapshot();
    tracing::info!(
        entities = snapshot.catalog.len(),
        groups = snapshot.groups.len(),
        "snapshot version {} ready",
        snapshot.version
    );
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().context("invalid --host/--port")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(state)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
