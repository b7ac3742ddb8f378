use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dagsearch::config::load_config;
use dagsearch::data::{generate, load_dataset, write_dataset, LabelColumn, SyntheticKind};
use dagsearch::graph::{from_json, to_dot};
use dagsearch::report::{write_run, DatasetFingerprint};
use dagsearch::run::run_pipeline;
use dagsearch::search::SearchConfig;

/// Caps the number of concurrent evaluators, whatever the config says.
const WORKERS_ENV: &str = "DAGSEARCH_WORKERS";

#[derive(Parser)]
#[command(name = "dagsearch", version, about = "Evolve DAG compositions of classifiers for a CSV dataset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search, tune and evaluate on a dataset; writes a run directory.
    Run {
        /// key = value configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Label column name; the last column by default.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Writes a synthetic two-class dataset.
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Renders a saved graph document as Graphviz DOT.
    ExportDot {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gauss2,
    Xor,
    Rings,
}

impl From<Kind> for SyntheticKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Gauss2 => SyntheticKind::Gauss2,
            Kind::Xor => SyntheticKind::Xor,
            Kind::Rings => SyntheticKind::Rings,
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn worker_cap(config: &mut SearchConfig) -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let cap: usize = raw.trim().parse().with_context(|| format!("{WORKERS_ENV}={raw:?} is not a count"))?;
    if cap == 0 {
        bail!("{WORKERS_ENV} must be at least 1");
    }
    let current =
        if config.workers == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { config.workers };
    config.workers = current.min(cap);
    Ok(())
}

fn run(config_path: Option<&Path>, data: &Path, label: Option<&str>, out: &Path, seed: Option<u64>) -> Result<()> {
    let started = unix_now();
    let mut config = match config_path {
        Some(p) => load_config(p).with_context(|| format!("cannot use config {}", p.display()))?,
        None => SearchConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    worker_cap(&mut config)?;

    let raw = std::fs::read(data).with_context(|| format!("cannot read dataset {}", data.display()))?;
    let selector = label.map_or(LabelColumn::Last, LabelColumn::Named);
    let loaded = load_dataset(data, selector).with_context(|| format!("cannot load dataset {}", data.display()))?;
    if !loaded.rejected.is_empty() {
        log::warn!("{} rows rejected while loading {}", loaded.rejected.len(), data.display());
    }
    let dataset = loaded.dataset;
    log::info!("{} rows, {} features, {} classes", dataset.len(), dataset.n_features(), dataset.n_classes());

    let outcome = run_pipeline(&dataset, &config)?;
    let fingerprint = DatasetFingerprint::new(&dataset, &raw);
    write_run(out, &config, &outcome, fingerprint, &data.display().to_string(), started, unix_now())
        .with_context(|| format!("cannot write run directory {}", out.display()))?;
    println!(
        "test balanced accuracy {:.4}, fitness {:.4}, complexity {}; artifacts in {}",
        outcome.test_balanced_accuracy,
        outcome.winner.fitness,
        outcome.winner.graph.complexity(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, data, label, out, seed } => run(config.as_deref(), &data, label.as_deref(), &out, seed),
        Command::Generate { kind, n, out, seed } => {
            if n < 4 {
                Err(anyhow::anyhow!("--n must be at least 4"))
            } else {
                let d = generate(kind.into(), n, seed);
                std::fs::File::create(&out)
                    .with_context(|| format!("cannot create {}", out.display()))
                    .and_then(|f| write_dataset(&d, f).with_context(|| format!("cannot write {}", out.display())))
            }
        }
        Command::ExportDot { graph, out } => std::fs::read_to_string(&graph)
            .with_context(|| format!("cannot read graph {}", graph.display()))
            .and_then(|text| from_json(&text).with_context(|| format!("invalid graph document {}", graph.display())))
            .and_then(|g| std::fs::write(&out, to_dot(&g)).with_context(|| format!("cannot write {}", out.display()))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
