use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use usfa_core::envs::EnvConfig;
use usfa_core::harness::{
    bound_check, evaluate_checkpoint, oracle_report, run_experiment, write_learning_curve, write_records, Checkpoint,
    ExperimentSpec,
};
use usfa_core::mdp::TaskVector;

#[derive(Parser)]
#[command(name = "usfa", version, about = "Successor features and GPI experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate from a spec (or a previous summary.json).
    Train {
        spec: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the training budget (same unit as the spec).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate a checkpoint on the tasks and regimes of a spec.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact optimal values and successor features for one task.
    Oracle {
        #[arg(long)]
        env: String,
        /// Comma-separated task vector.
        #[arg(long, allow_hyphen_values = true)]
        task: String,
    },
    /// Randomised checks of GPI dominance and the GPI bound.
    BoundCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_task(s: &str) -> anyhow::Result<TaskVector> {
    let values = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad task component {x:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(TaskVector::new(values)?)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train { spec, seed, out, steps } => {
            let mut spec = ExperimentSpec::load(&spec).with_context(|| format!("reading {}", spec.display()))?;
            if let Some(seed) = seed {
                spec.seeds = vec![seed];
            }
            if let Some(out) = out {
                spec.out_dir = out;
            }
            if let Some(steps) = steps {
                spec.training.budget = spec.training.budget.with_total(steps);
            }
            let output = run_experiment(&spec)?;
            println!("{}", serde_json::to_string_pretty(&output.summary.final_returns)?);
            eprintln!("wrote {} records to {}", output.records.len(), spec.out_dir.display());
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            spec,
            seed,
            out,
        } => {
            let spec = ExperimentSpec::load(&spec)?;
            let checkpoint = Checkpoint::load(&checkpoint)?;
            let records = evaluate_checkpoint(&spec, checkpoint, seed)?;
            match out {
                Some(path) => write_learning_curve(&path, &records)?,
                None => write_records(std::io::stdout().lock(), &records)?,
            }
            Ok(true)
        }
        Command::Oracle { env, task } => {
            let env = if env.trim_start().starts_with('{') {
                serde_json::from_str::<EnvConfig>(&env)?
            } else {
                EnvConfig::from_name(&env)?
            };
            let report = oracle_report(&env, &parse_task(&task)?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
        Command::BoundCheck { instances, seed } => {
            if instances == 0 {
                bail!("--instances must be >= 1");
            }
            let report = bound_check(instances, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
