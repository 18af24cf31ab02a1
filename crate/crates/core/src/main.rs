use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use that_core::cli::{self, exit_code, RunConfig};
use that_core::Error;

#[derive(Parser)]
#[command(
    name = "that",
    version,
    about = "Hyperspectral pansharpening: data synthesis, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for synthetic data, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize Y (LR), X (pan) and GT cubes from a source cube.
    Degrade {
        /// HSC1 source cube; a synthetic scene is used when omitted.
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write the log and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint or a precomputed prediction against GT.hsc.
    Eval {
        /// Directory holding Y.hsc, X.hsc and GT.hsc.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Fused cube to score instead of running a checkpoint.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fuse an LR cube with a pan image.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// LR hyperspectral cube (HSC1).
        #[arg(long)]
        lr: PathBuf,
        /// Pan image stored as a one-band HSC1 cube.
        #[arg(long)]
        pan: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient verification.
    Gradcheck {
        /// Test hook: scale the adjoint of this op to prove failures are caught.
        #[arg(long, hide = true)]
        corrupt_op: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Parameter count and FLOPs of the configured model.
    Params {
        #[command(flatten)]
        common: Common,
    },
}

fn config(common: &Common, input: Option<&PathBuf>) -> Result<RunConfig, Error> {
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(p) = input {
        overrides.push(format!("input={}", p.display()));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Degrade { input, common } => {
            let cfg = config(&common, input.as_ref())?;
            print!("{}", cli::cmd_degrade(&cfg, &common.out)?);
        }
        Command::Train { common } => {
            let cfg = config(&common, None)?;
            print!("{}", cli::cmd_train(&cfg, &common.out, |line| println!("{line}"))?);
        }
        Command::Eval {
            data,
            checkpoint,
            pred,
            common,
        } => {
            let cfg = config(&common, None)?;
            print!(
                "{}",
                cli::cmd_eval(&cfg, &data, checkpoint.as_deref(), pred.as_deref(), &common.out)?
            );
        }
        Command::Infer {
            checkpoint,
            lr,
            pan,
            common,
        } => {
            config(&common, None)?;
            print!("{}", cli::cmd_infer(&checkpoint, &lr, &pan, &common.out)?);
        }
        Command::Gradcheck { corrupt_op, common } => {
            let cfg = config(&common, None)?;
            let report = cli::cmd_gradcheck(cfg.train.seed, corrupt_op.as_deref())?;
            print!("{}", report.render());
            if !report.passed() {
                return Err(Error::Numerical(report.failures().join("; ")));
            }
        }
        Command::Params { common } => {
            let cfg = config(&common, None)?;
            print!("{}", cli::cmd_params(&cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("THAT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
