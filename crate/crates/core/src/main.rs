use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use edge_offload::experiment::{
    cmd_compare, cmd_evaluate, cmd_gen_workload, cmd_train, ExperimentConfig, SchedulerKind,
};

#[derive(Parser)]
#[command(name = "edge-offload", version, about = "Dependency-aware task offloading experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Restrict the sweep to these arrival settings (repeatable).
    #[arg(long = "lambda", global = true)]
    lambdas: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write an evaluation workload file.
    GenWorkload {
        #[arg(long, default_value_t = 9.0)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a learning scheduler for each lambda.
    Train {
        #[arg(long, default_value = "sata-drl")]
        scheduler: String,
    },
    /// Greedy evaluation of a checkpoint, or of an untrained network.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the learners and compare every configured scheduler.
    Compare,
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(episodes) = common.episodes {
        cfg.episodes = episodes;
    }
    if let Some(replications) = common.replications {
        cfg.replications = replications;
    }
    if !common.lambdas.is_empty() {
        cfg.lambdas = common.lambdas.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::GenWorkload { lambda, out } => {
            let path = cmd_gen_workload(&cfg, lambda, out)?;
            println!("wrote {}", path.display());
        }
        Command::Train { scheduler } => {
            let kind = SchedulerKind::parse(&scheduler)?;
            for out in cmd_train(&cfg, kind)? {
                let rewards = out.curve.rewards();
                let tail = &rewards[rewards.len().saturating_sub(100)..];
                println!(
                    "lambda {}: {} episodes, mean reward of last {} = {:.3}, checkpoint {}",
                    out.lambda,
                    rewards.len(),
                    tail.len(),
                    edge_offload::experiment::mean(tail),
                    out.checkpoint.display()
                );
            }
        }
        Command::Evaluate { checkpoint } => {
            for &lambda in &cfg.lambdas {
                let r = cmd_evaluate(&cfg, lambda, checkpoint.as_deref())?;
                println!(
                    "lambda {lambda}: avg makespan {:.4} s (sd {:.4}), violation rate {:.2}% (sd {:.2})",
                    r.avg_makespan, r.makespan_sd, r.violation_rate, r.violation_sd
                );
            }
        }
        Command::Compare => {
            let out = cmd_compare(&cfg)?;
            println!("{:>7} {:>12} {:>14} {:>10}", "lambda", "scheduler", "avg_makespan", "violation%");
            for r in &out.reports {
                println!("{:>7} {:>12} {:>14.4} {:>10.2}", r.lambda, r.scheduler, r.avg_makespan, r.violation_rate);
            }
            println!("results in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}
