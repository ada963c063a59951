use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use studybench_campaign::{run_campaign, run_local_campaign, CampaignSpec};
use studybench_core::aggregation;
use studybench_core::benchmark::{
    combine_datasets, filter_night, predictor_by_name, run_protocol, synthetic_dataset,
    BenchmarkDataset, ProtocolOptions,
};
use studybench_core::sim::{parse_mixture, synthetic_study};
use studybench_core::study::{self, accepted_ids, StoreSnapshot, Study, LATENT_FILE};
use studybench_core::{validation, ImageId, StudyConfig, WorkerId};
use studybench_service::Service;

mod analyze;

#[derive(Parser)]
#[command(
    name = "studybench",
    version,
    about = "Crowdsourced image-quality study toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic study directory (pool, gold, training, latent quality).
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 120)]
        pool: usize,
        #[arg(long, default_value_t = 5)]
        gold: usize,
        #[arg(long, default_value_t = 0)]
        night: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
    /// Print the HIT plan a worker would receive, as JSON.
    Plan {
        #[arg(long)]
        study: PathBuf,
        #[arg(long, default_value = "inspect")]
        worker: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the session service over HTTP.
    Serve {
        #[arg(long)]
        study: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Append-only event journal; state is replayed from it on start.
        #[arg(long)]
        journal: Option<PathBuf>,
        /// fsync every journal append.
        #[arg(long)]
        fsync: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Drive simulated workers through the HTTP API.
    Simulate(SimulateArgs),
    /// Run the content-separated train/test evaluation protocol.
    Benchmark(BenchmarkArgs),
    /// Write a synthetic benchmark manifest.
    Dataset {
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[arg(long, default_value_t = 1162)]
        items: usize,
        #[arg(long, default_value_t = 149)]
        night: usize,
        #[arg(long, default_value_t = 1)]
        per_group: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyses over an exported store snapshot.
    Analyze {
        #[command(subcommand)]
        command: analyze::AnalyzeCommand,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Validate a config file (defaults when omitted) and list every violation.
    Check {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Print the default configuration.
    Defaults,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    workers: usize,
    #[arg(long, default_value = "conscientious=0.9,spammer=0.1")]
    mix: String,
    /// Pool CSV inside a study directory; the directory supplies gold,
    /// training and latent quality.
    #[arg(long, conflicts_with = "study")]
    pool: Option<PathBuf>,
    #[arg(long)]
    study: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// Running service to target. Without it an in-process service is started.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 16)]
    parallelism: usize,
    #[arg(long, default_value_t = 0)]
    duplicates: usize,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the store snapshot the report was computed from.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    #[arg(long, default_value = "knn")]
    predictor: String,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long)]
    exclude_night: bool,
    /// Print only the medians, not every iteration.
    #[arg(long)]
    summary: bool,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        // `studybench ... | head` closing the pipe is not a failure
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    let kind = e
        .downcast_ref::<io::Error>()
        .map(io::Error::kind)
        .or_else(|| {
            e.downcast_ref::<serde_json::Error>()
                .and_then(|j| j.io_error_kind())
        });
    kind == Some(io::ErrorKind::BrokenPipe)
}

fn run() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Init {
            dir,
            pool,
            gold,
            night,
            seed,
        } => init(&dir, pool, gold, night, seed),
        Command::Config { command } => match command {
            ConfigCommand::Check { file } => config_check(file.as_deref()),
            ConfigCommand::Defaults => {
                print!("{}", StudyConfig::default().to_kv_string());
                Ok(())
            }
        },
        Command::Plan {
            study,
            worker,
            seed,
        } => plan(&study, &worker, seed),
        Command::Serve {
            study,
            addr,
            journal,
            fsync,
            seed,
        } => serve(&study, addr, journal.as_deref(), fsync, seed),
        Command::Simulate(args) => simulate(args),
        Command::Benchmark(args) => run_benchmark(args),
        Command::Dataset {
            name,
            items,
            night,
            per_group,
            seed,
            out,
        } => {
            let ds = synthetic_dataset(&name, items, night, per_group, seed);
            ds.write_csv(File::create(&out).with_context(|| out.display().to_string())?)?;
            eprintln!(
                "wrote {} items ({night} night) to {}",
                ds.items.len(),
                out.display()
            );
            Ok(())
        }
        Command::Analyze { command } => analyze::run(command),
    }
}

fn init(dir: &Path, pool: usize, gold: usize, night: usize, seed: u64) -> Result<()> {
    let config = StudyConfig::default();
    let (materials, latent) =
        synthetic_study(pool, gold, config.training_count as usize, night, seed);
    Study { config, materials }.save(dir)?;
    study::save_latent(dir, &latent)?;
    eprintln!("study written to {}", dir.display());
    Ok(())
}

fn config_check(file: Option<&Path>) -> Result<()> {
    let cfg = StudyConfig::load_with_env(file)?;
    match cfg.validate() {
        Ok(()) => {
            println!("ok");
            Ok(())
        }
        Err(violations) => {
            for v in &violations {
                println!("{v}");
            }
            bail!("{} violation(s)", violations.len())
        }
    }
}

fn plan(dir: &Path, worker: &str, seed: u64) -> Result<()> {
    let study = Study::load(dir)?;
    let plan = studybench_core::assemble_hit(
        &study.config,
        &study.materials,
        &HashMap::new(),
        &WorkerId::new(worker),
        seed,
    )?;
    write_json(None, &plan)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?)
}

fn serve(
    dir: &Path,
    addr: SocketAddr,
    journal: Option<&Path>,
    fsync: bool,
    seed: u64,
) -> Result<()> {
    let study = Study::load(dir)?;
    let mut builder = Service::builder(study.config, study.materials).seed(seed);
    if let Some(path) = journal {
        builder = builder.journal(path, fsync);
    }
    let service = Arc::new(builder.build()?);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        tokio::select! {
            r = studybench_service::serve(listener, service) => r?,
            _ = tokio::signal::ctrl_c() => eprintln!("shutting down"),
        }
        Ok(())
    })
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let dir = match (&args.pool, &args.study) {
        (Some(pool), _) => pool
            .parent()
            .map(|p| {
                if p.as_os_str().is_empty() {
                    Path::new(".")
                } else {
                    p
                }
            })
            .unwrap_or(Path::new("."))
            .to_owned(),
        (None, Some(d)) => d.clone(),
        (None, None) => bail!("one of --pool or --study is required"),
    };
    let mixture = parse_mixture(&args.mix)?;
    let latent = study::load_latent(&dir.join(LATENT_FILE))
        .context("latent quality is needed to simulate ratings")?;
    let mut spec = CampaignSpec::new(args.workers, mixture, args.seed);
    spec.parallelism = args.parallelism.max(1);
    spec.duplicate_attempts = args.duplicates;

    let local = match &args.endpoint {
        Some(_) => None,
        None => Some(Study::load(&dir)?),
    };
    let outcome = runtime()?.block_on(async {
        match (&args.endpoint, local) {
            (Some(url), _) => run_campaign(&spec, &latent, url.trim_end_matches('/')).await,
            (None, Some(study)) => {
                run_local_campaign(&spec, study.config, study.materials, &latent, args.seed).await
            }
            (None, None) => unreachable!("study loaded when no endpoint is given"),
        }
    })?;
    if let Some(path) = &args.export {
        serde_json::to_writer(File::create(path)?, &outcome.snapshot)?;
    }
    write_json(args.out.as_deref(), &outcome.report)
}

fn run_benchmark(args: BenchmarkArgs) -> Result<()> {
    let datasets = args
        .dataset
        .iter()
        .map(|p| BenchmarkDataset::load(p).with_context(|| p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let mut dataset = if datasets.len() == 1 {
        datasets.into_iter().next().expect("one dataset")
    } else {
        combine_datasets(&datasets)?
    };
    if args.exclude_night {
        let (kept, dropped) = filter_night(&dataset, false);
        eprintln!("night filter: {} kept, {dropped} dropped", kept.items.len());
        dataset = kept;
    }
    let predictor = predictor_by_name(&args.predictor)?;
    let report = run_protocol(
        &dataset,
        predictor.as_ref(),
        ProtocolOptions {
            n_iter: args.iters,
            train_frac: args.train_frac,
            seed: args.seed,
        },
    )?;
    if args.summary {
        let summary = serde_json::json!({
            "dataset": report.dataset,
            "predictor": report.predictor,
            "n_items": report.n_items,
            "median_srocc": report.median_srocc,
            "median_plcc": report.median_plcc,
            "failed_iterations": report.failed_iterations,
        });
        return write_json(None, &summary);
    }
    write_json(None, &report)
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = File::create(path).with_context(|| path.display().to_string())?;
            serde_json::to_writer_pretty(&mut f, value)?;
            writeln!(f)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            writeln!(lock)?;
        }
    }
    Ok(())
}

fn load_snapshot(path: &Path) -> Result<StoreSnapshot> {
    Ok(StoreSnapshot::load(path)?)
}

type Verdicts = Vec<validation::ValidationVerdict>;

// Shared by the analyze subcommands.
fn accepted_scores(snap: &StoreSnapshot) -> Result<(Verdicts, BTreeMap<ImageId, Vec<f64>>)> {
    let verdicts = snap.validate()?;
    let accepted = accepted_ids(&verdicts);
    let scores = aggregation::database_scores(&snap.sessions, &accepted);
    Ok((verdicts, scores))
}
