//! Command-line runner for federated selector experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedselect::checkpoint::load_selector;
use fedselect::data::{load_pairs, symmetrize, write_pairs_jsonl, SymmetrizeMode};
use fedselect::eval::{agreement, write_series_csv, EvalReport, SeriesPoint};
use fedselect::pipeline::{
    files, read_generated, Algorithm, DataSource, ExperimentConfig, IngestSpec, PartitionSpec, Pipeline, Stage,
};
use fedselect::rng::Streams;

#[derive(Parser)]
#[command(name = "fedselect", version, about = "Federated binary-selector experiments with DPO fine-tuning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults to the resolved config already in
    /// the output directory, then to the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset used when no config is found.
    #[arg(long, global = true, default_value = "summarization-like")]
    preset: String,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory holding every artifact.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize the synthetic world and dump its comparisons.
    GenWorld,
    /// Split a comparison file into clients.
    Partition {
        /// JSON-lines comparisons; defaults to the config's ingestion path.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "worker")]
        by: PartitionBy,
        /// Client count for Dirichlet partitioning.
        #[arg(long, default_value_t = 300)]
        clients: usize,
        /// Dirichlet concentration.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Train the selector(s).
    TrainSelector {
        #[arg(long, value_enum)]
        algo: Option<Algo>,
        /// Number of selectors.
        #[arg(long)]
        u: Option<usize>,
        /// Regroup period.
        #[arg(long)]
        tau: Option<usize>,
        /// Warm-up rounds per selector.
        #[arg(long)]
        warmup: Option<usize>,
        /// Communication rounds (after warm-up).
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Build the selector-labeled preference dataset.
    GenPrefs {
        /// Completions per instruction.
        #[arg(long)]
        n: Option<usize>,
        /// Number of instructions.
        #[arg(long)]
        instructions: Option<usize>,
    },
    /// Fine-tune the policy with DPO.
    Dpo {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Compute metrics. With `--checkpoint` and `--labeled`, scores the
    /// given selectors on a labeled comparison file instead.
    Eval {
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        labeled: Option<PathBuf>,
    },
    /// Write per-round series as CSV and print final metrics as JSON.
    Report,
    /// Every stage in order, resuming from valid checkpoints.
    Run,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionBy {
    Worker,
    Dirichlet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Fedbis,
    Fedbiscuit,
    Centralized,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let resolved = common.out.join(files::CONFIG);
    let mut config = if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ExperimentConfig::from_json(&text)?
    } else if resolved.is_file() {
        ExperimentConfig::from_json(&fs::read_to_string(&resolved)?)?
    } else {
        ExperimentConfig::preset(&common.preset)?
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(threads) = common.threads {
        config.threads = threads;
    }
    Ok(config.resolved())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::GenWorld => {
            if !matches!(config.source, DataSource::World(_)) {
                bail!("gen-world needs a world source in the config");
            }
            let pipeline = Pipeline::new(config, &out)?;
            pipeline.run_until(Stage::Data)?;
            let federation = pipeline.load_federation(&Streams::new(pipeline.config().seed))?;
            let world = federation.world.expect("world source");
            let pairs: Vec<_> = world.client_pairs.into_iter().flatten().collect();
            let path = out.join("pairs.jsonl");
            write_pairs_jsonl(fs::File::create(&path)?, &pairs)?;
            println!("wrote {} and {} ({} comparisons)", out.join(files::WORLD).display(), path.display(), pairs.len());
        }
        Command::Partition {
            input,
            by,
            clients,
            alpha,
        } => {
            let path = match (input, &config.source) {
                (Some(p), _) => p,
                (None, DataSource::Ingest(spec)) => spec.path.clone(),
                (None, DataSource::World(_)) => bail!("partition needs --input or an ingestion source"),
            };
            let partition = match by {
                PartitionBy::Worker => PartitionSpec::Worker,
                PartitionBy::Dirichlet => PartitionSpec::Dirichlet { clients, alpha },
            };
            let (val_fraction, symmetrize) = match &config.source {
                DataSource::Ingest(spec) => (spec.val_fraction, spec.symmetrize),
                DataSource::World(w) => (w.val_fraction, w.symmetrize),
            };
            config.source = DataSource::Ingest(IngestSpec {
                path,
                partition,
                val_fraction,
                symmetrize,
            });
            Pipeline::new(config, &out)?.run_until(Stage::Data)?;
            println!("wrote {}", out.join(files::PARTITION).display());
        }
        Command::TrainSelector {
            algo,
            u,
            tau,
            warmup,
            rounds,
        } => {
            if let Some(a) = algo {
                config.algorithm = match a {
                    Algo::Fedbis => Algorithm::Fedbis,
                    Algo::Fedbiscuit => Algorithm::Fedbiscuit,
                    Algo::Centralized => Algorithm::Centralized,
                };
            }
            let t = &mut config.training;
            t.selectors = u.unwrap_or(t.selectors);
            t.regroup_period = tau.unwrap_or(t.regroup_period);
            t.warmup_rounds = warmup.unwrap_or(t.warmup_rounds);
            t.fl.rounds = rounds.unwrap_or(t.fl.rounds);
            let summary = Pipeline::new(config, &out)?.run_until(Stage::Selectors)?;
            println!("selectors in {} ({})", out.join(files::SELECTORS_DIR).display(), describe(&summary.executed));
        }
        Command::GenPrefs { n, instructions } => {
            config.rlft.completions = n.unwrap_or(config.rlft.completions);
            config.rlft.instructions = instructions.unwrap_or(config.rlft.instructions);
            require_world(&config, "gen-prefs")?;
            Pipeline::new(config, &out)?.run_until(Stage::GenPrefs)?;
            let path = out.join(files::GEN_PREFS);
            let records = read_generated(&path)?;
            println!("wrote {} ({} records)", path.display(), records.len());
        }
        Command::Dpo { steps, beta } => {
            config.rlft.dpo.steps = steps.unwrap_or(config.rlft.dpo.steps);
            config.rlft.dpo.beta = beta.unwrap_or(config.rlft.dpo.beta);
            require_world(&config, "dpo")?;
            Pipeline::new(config, &out)?.run_until(Stage::Dpo)?;
            println!("wrote {}", out.join(files::POLICY).display());
        }
        Command::Eval { checkpoint, labeled } => match (checkpoint.is_empty(), labeled) {
            (false, Some(labeled)) => {
                let report = eval_checkpoints(&config, &checkpoint, &labeled)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            (true, None) => {
                let summary = Pipeline::new(config, &out)?.run_until(Stage::Eval)?;
                println!("{}", serde_json::to_string_pretty(&summary.metrics)?);
            }
            _ => bail!("--checkpoint and --labeled must be given together"),
        },
        Command::Report => report(&out)?,
        Command::Run => {
            let summary = Pipeline::new(config, &out)?.run_until(Stage::Eval)?;
            eprintln!("{}", describe(&summary.executed));
            println!("{}", serde_json::to_string_pretty(&summary.metrics)?);
        }
    }
    Ok(())
}

fn require_world(config: &ExperimentConfig, command: &str) -> Result<()> {
    if !matches!(config.source, DataSource::World(_)) {
        bail!("{command} needs a world source: ingested comparisons have no completion vocabulary");
    }
    Ok(())
}

fn describe(executed: &[Stage]) -> String {
    if executed.is_empty() {
        "all stages resumed from checkpoints".into()
    } else {
        let names: Vec<&str> = executed.iter().map(|s| s.name()).collect();
        format!("ran {}", names.join(", "))
    }
}

fn eval_checkpoints(config: &ExperimentConfig, checkpoints: &[PathBuf], labeled: &Path) -> Result<EvalReport> {
    let selectors = checkpoints
        .iter()
        .map(|p| load_selector(p).map(|(s, _)| s).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let pairs = load_pairs(labeled)?;
    let examples = symmetrize(&pairs, SymmetrizeMode::Both, &mut Streams::new(config.seed).rng("eval/labeled"));
    Ok(EvalReport {
        metric: "agreement".into(),
        value: agreement(&selectors, &examples)?,
        n: examples.len(),
        config_digest: config.digest(),
        series: Vec::new(),
    })
}

fn report(out: &Path) -> Result<()> {
    let metrics_path = out.join(files::METRICS);
    let metrics: Vec<EvalReport> = serde_json::from_slice(
        &fs::read(&metrics_path).with_context(|| format!("reading {} (run `eval` first)", metrics_path.display()))?,
    )?;
    let mut series: Vec<EvalReport> = metrics.iter().filter(|m| !m.series.is_empty()).cloned().collect();
    // fold the per-round training log in as loss and traffic series
    let rounds = fs::read_to_string(out.join(files::ROUNDS_JSONL)).unwrap_or_default();
    let mut loss = Vec::new();
    for line in rounds.lines().filter(|l| !l.trim().is_empty()) {
        let log: fedselect::fed::RoundLog = serde_json::from_str(line)?;
        let values: Vec<f64> = log.local_losses.iter().flatten().copied().collect();
        if !values.is_empty() {
            loss.push(SeriesPoint {
                round: log.round,
                value: values.iter().sum::<f64>() / values.len() as f64,
            });
        }
    }
    if let Some(digest) = metrics.first().map(|m| m.config_digest.clone()) {
        series.push(EvalReport {
            metric: "mean_local_loss".into(),
            value: loss.last().map_or(0.0, |p| p.value),
            n: loss.len().max(1),
            config_digest: digest,
            series: loss,
        });
    }
    let csv_path = out.join("report.csv");
    write_series_csv(fs::File::create(&csv_path)?, &series)?;
    let summary: serde_json::Map<String, serde_json::Value> =
        metrics.iter().map(|m| (m.metric.clone(), serde_json::json!(m.value))).collect();
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("wrote {}", csv_path.display());
    Ok(())
}
