mod commands;
mod config;
mod report;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hrvbrake_core::Error;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "hrvbrake", version, about = "ECG drowsiness detection and drowsiness-aware braking")]
struct Cli {
    /// Run configuration file (`key=value` lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Run directory; defaults to runs/<command>-s<seed>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Configuration override, `key=value`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RecordingArgs {
    /// ECG samples, one per line.
    #[arg(long, required_unless_present = "synthetic", requires_all = ["events", "meta"])]
    pub ecg: Option<PathBuf>,
    /// Event sample indices, one per line.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Metadata with sample_rate_hz and resolution_bits.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Use the built-in synthetic recording (see the synth.* keys).
    #[arg(long, conflicts_with = "ecg")]
    pub synthetic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-validate the detector for every capsule configuration.
    BenchmarkCapsules {
        #[command(flatten)]
        input: RecordingArgs,
        /// Evaluate only the first N configurations.
        #[arg(long)]
        configs_limit: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train the drowsiness detector for one capsule configuration.
    TrainDetector {
        #[command(flatten)]
        input: RecordingArgs,
        /// Capsule label such as C6400_N6_M72.
        #[arg(long)]
        capsule: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train a braking agent.
    TrainAgent {
        /// dqn, double, dueling or dddqn.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Greedy evaluation on paired alert/drowsy scenarios.
    EvalPaired {
        /// A train-agent run directory or its checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Aggregate training and evaluation runs into plot-ready series.
    Report {
        /// Run directories to aggregate.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
    /// Print every configuration key with its default.
    Defaults,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BenchmarkCapsules { .. } => "benchmark-capsules",
            Command::TrainDetector { .. } => "train-detector",
            Command::TrainAgent { .. } => "train-agent",
            Command::EvalPaired { .. } => "eval-paired",
            Command::Report { .. } => "report",
            Command::Defaults => "defaults",
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::NonTiling { .. } => 3,
        Error::Divergence(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> hrvbrake_core::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    let name = cli.command.name();
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("runs/{name}-s{}", cli.seed)));
    let ctx = commands::Context {
        seed: cli.seed,
        out,
        config_file: cli.config.clone(),
    };
    match cli.command {
        Command::BenchmarkCapsules {
            input,
            configs_limit,
            folds,
        } => {
            if let Some(k) = folds {
                cfg.folds = k;
            }
            cfg.validate()?;
            commands::benchmark_capsules(&ctx, &cfg, &input, configs_limit)
        }
        Command::TrainDetector { input, capsule, folds } => {
            if let Some(c) = capsule {
                cfg.set("capsule.config", &c)?;
            }
            if let Some(k) = folds {
                cfg.folds = k;
            }
            cfg.validate()?;
            commands::train_detector(&ctx, &cfg, &input)
        }
        Command::TrainAgent { variant, episodes } => {
            if let Some(v) = variant {
                cfg.set("agent.variant", &v)?;
            }
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            cfg.validate()?;
            commands::train_agent(&ctx, &cfg)
        }
        Command::EvalPaired { checkpoint, episodes } => {
            if let Some(n) = episodes {
                cfg.eval_episodes = n;
            }
            cfg.validate()?;
            commands::eval_paired(&ctx, &cfg, &checkpoint)
        }
        Command::Report { runs } => {
            cfg.validate()?;
            report::report(&ctx, &cfg, &runs)
        }
        Command::Defaults => {
            print!("{}", RunConfig::documented_defaults());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
