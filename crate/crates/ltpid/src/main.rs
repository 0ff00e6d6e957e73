use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use ltpid::commands;
use ltpid::config::{presets, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ltpid", version, about = "Identification of linear time-periodic systems from sampled trajectories")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: example-a, example-a-noisy or example-b.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    noise_ratio: Option<f64>,
    /// Truncation order.
    #[arg(long, global = true)]
    p: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured trials and write trajectory CSVs.
    Simulate,
    /// Identify a model from trial 0 or from trajectory CSVs.
    Identify {
        /// Trajectory CSVs (`t,x1..xn,u1..um`); simulated when absent.
        #[arg(long, num_args = 1..)]
        trajectories: Vec<PathBuf>,
    },
    /// Validate a stored model on a fresh or recorded trajectory.
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// Recorded trajectory CSV, used when the true system is unknown.
        #[arg(long)]
        recorded: Option<PathBuf>,
    },
    /// Run all trials and aggregate the phasor errors.
    Batch {
        /// Column multipliers for a convergence table, e.g. `1,2,3,4`.
        #[arg(long, value_delimiter = ',')]
        convergence: Option<Vec<usize>>,
    },
    /// Sweep the truncation order and pick the smallest adequate one.
    SweepP {
        #[arg(long, default_value_t = 10)]
        p_max: usize,
    },
}

fn load(global: &Global) -> anyhow::Result<ExperimentConfig> {
    let mut config = match (&global.config, &global.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => presets::by_name(name)
            .ok_or_else(|| anyhow!("unknown preset {name:?}; available: {}", presets::NAMES.join(", ")))?,
        (None, None) => return Err(anyhow!("either --config or --preset is required")),
    };
    if let Some(s) = global.seed {
        config.seed = s;
    }
    if let Some(r) = global.noise_ratio {
        config.noise.ratio = r;
    }
    if let Some(p) = global.p {
        config.p = p;
    }
    if let Some(t) = global.trials {
        config.trials = t;
    }
    if let Some(o) = &global.out {
        config.output = o.clone();
    }
    config.validate().context("invalid configuration")?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config = load(&cli.global)?;
    let out: &Path = &config.output;
    match cli.command {
        Command::Simulate => {
            let manifest = commands::cmd_simulate(&config, out)?;
            let files: usize = manifest.trials.iter().map(|t| t.trajectories.len()).sum();
            println!("wrote {files} trajectories for {} trials to {}", manifest.trials.len(), out.display());
            Ok(true)
        }
        Command::Identify { trajectories } => {
            let (summary, model) = commands::cmd_identify(&config, &trajectories, out)?;
            println!(
                "L = {}, rank {}/{}, cond {:.3e}, residual {:.3e}",
                summary.columns, summary.rank, summary.required, summary.condition_number, model.residual
            );
            if model.ill_conditioned {
                println!("warning: regression is ill-conditioned");
            }
            if let Some(m) = model.error_bound_m {
                println!("error-bound constant M = {m:.3e}");
            }
            match summary.phasor_error_pct {
                Some(e) => {
                    let ok = e <= summary.threshold_pct;
                    println!(
                        "phasor error {e:.4e} % (threshold {} %): {}",
                        summary.threshold_pct,
                        if ok { "PASS" } else { "FAIL" }
                    );
                    Ok(ok)
                }
                None => Ok(true),
            }
        }
        Command::Validate { model, recorded } => {
            let report = commands::cmd_validate(&model, &config, recorded.as_deref(), out)?;
            for n in &report.notices {
                println!("notice: {n}");
            }
            if let Some(f) = &report.failure {
                println!("validation failure: {f}");
            }
            println!(
                "{} = {:.4e} % (threshold {} %): {}",
                report.criterion,
                report.value_pct.unwrap_or(f64::NAN),
                report.threshold_pct,
                if report.accepted { "ACCEPTED" } else { "REJECTED" }
            );
            Ok(report.accepted)
        }
        Command::Batch { convergence } => {
            let output = commands::cmd_batch(&config, cli.global.workers, convergence.as_deref(), out)?;
            let a = &output.report.aggregate;
            println!(
                "{} trials, {} failed, {} within {} %; median {:.4e} %, min {:.4e} %, max {:.4e} %",
                a.trials,
                a.failures,
                output.report.passed,
                output.report.threshold_pct,
                a.median_pct.unwrap_or(f64::NAN),
                a.min_pct.unwrap_or(f64::NAN),
                a.max_pct.unwrap_or(f64::NAN)
            );
            if let Some(rows) = &output.convergence {
                for r in rows {
                    println!(
                        "L = {:>5} ({}x): median {:.4e} %",
                        r.columns,
                        r.multiplier,
                        r.aggregate.median_pct.unwrap_or(f64::NAN)
                    );
                }
            }
            let median_ok = a.median_pct.is_some_and(|m| m <= output.report.threshold_pct);
            Ok(median_ok && a.failures == 0)
        }
        Command::SweepP { p_max } => {
            let sweep = commands::cmd_sweep(&config, p_max, out)?;
            for e in &sweep.entries {
                println!(
                    "p = {:>3}: top/max {:.3e}, residual {:.3e}{}",
                    e.p,
                    e.top_norm / e.max_norm,
                    e.residual,
                    if e.decayed { " (decayed)" } else { "" }
                );
            }
            match sweep.chosen {
                Some(p) => {
                    println!("chosen p = {p}");
                    Ok(true)
                }
                None => {
                    println!("no order in range decayed below the threshold");
                    Ok(false)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
