use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use evidence_core::explain::ImportanceMetric;
use evidence_core::ingest::SyntheticConfig;
use evidence_core::pnn::PriorMode;
use evidence_core::Execution;
use evidence_service::config::DATA_DIR_ENV;
use evidence_service::{api, pipeline, ServiceConfig, SessionState};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "evidence",
    version,
    about = "Transaction classification and evidence discovery"
)]
struct Cli {
    /// Directory holding the corpus and every pipeline artifact.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Seed for the train/test split and the sigma search.
    #[arg(long = "split-seed", global = true)]
    split_seed: Option<u64>,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Admit an application document (JSON) or CSV export into the corpus.
    Ingest { file: PathBuf },
    /// Admit a seeded synthetic labeled corpus.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        n: usize,
    },
    /// Split the corpus, fit the feature schema and build feature vectors.
    Featurize {
        #[arg(long)]
        text_dim: Option<usize>,
    },
    /// Train the classifier; searches the default sigma grid unless given.
    Train {
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_parser = parse_prior_mode)]
        prior_mode: Option<PriorMode>,
    },
    /// Predict, evaluate and load the evidence store.
    Evaluate,
    /// Permutation importance per feature group.
    Importance {
        #[arg(long, default_value_t = evidence_core::explain::DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "macro_f1")]
        metric: ImportanceMetric,
    },
    /// Featurize, train and evaluate in one staged run.
    Run {
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Serve the HTTP API over the current artifacts.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
    },
}

fn parse_prior_mode(s: &str) -> Result<PriorMode, String> {
    match s {
        "uniform" => Ok(PriorMode::Uniform),
        "empirical" => Ok(PriorMode::Empirical),
        _ => Err(format!("expected uniform or empirical, got {s:?}")),
    }
}

fn print<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    let written = serde_json::to_writer_pretty(&mut out, value)
        .map_err(std::io::Error::from)
        .and_then(|()| writeln!(out));
    match written {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

/// Counts instead of sha lists, which run to thousands of lines.
#[derive(Serialize)]
struct IngestCounts {
    accepted: usize,
    duplicates: usize,
    labeled: usize,
    warnings: Vec<evidence_core::ingest::IngestWarning>,
}

impl From<pipeline::IngestSummary> for IngestCounts {
    fn from(s: pipeline::IngestSummary) -> Self {
        IngestCounts {
            accepted: s.accepted.len(),
            duplicates: s.duplicates.len(),
            labeled: s.labeled,
            warnings: s.warnings,
        }
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let mut config = ServiceConfig::default().with_env();
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    if let Some(seed) = cli.split_seed {
        config.seed = seed;
    }
    if cli.sequential {
        config.exec = Execution::Sequential;
    }
    std::fs::create_dir_all(&config.data_dir)
        .with_context(|| format!("cannot create {}", config.data_dir.display()))?;
    let dir = config.data_dir.clone();

    match cli.command {
        Command::Ingest { file } => {
            let bytes = std::fs::read(&file).with_context(|| format!("cannot read {}", file.display()))?;
            let (summary, _) = pipeline::ingest_bytes(&dir, &bytes)?;
            print(&IngestCounts::from(summary))
        }
        Command::Generate { seed, n } => {
            let synthetic = SyntheticConfig::default().with_seed(seed).with_transactions(n);
            print(&IngestCounts::from(pipeline::ingest_synthetic(&dir, &synthetic)?))
        }
        Command::Featurize { text_dim } => {
            if let Some(d) = text_dim {
                config.text_dim = d;
            }
            print(&pipeline::featurize(&dir, &config)?)
        }
        Command::Train { sigma, prior_mode } => {
            config.sigma = sigma;
            if let Some(m) = prior_mode {
                config.prior_mode = m;
            }
            print(&pipeline::train(&dir, &config)?)
        }
        Command::Evaluate => print(&pipeline::evaluate(&dir, &config)?),
        Command::Importance {
            repeats,
            seed,
            metric,
        } => print(&pipeline::importance(&dir, &config, metric, repeats, seed)?),
        Command::Run { sigma } => {
            config.sigma = sigma;
            print(&pipeline::run_pipeline(&config)?)
        }
        Command::Serve { listen } => {
            config.listen = listen;
            let state = Arc::new(SessionState::load(config)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = api::bind(state.config.listen).await?;
                api::serve(listener, state).await
            })?;
            Ok(())
        }
    }
}
