mod bench;
mod commands;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ichea::{EngineConfig, FitnessMode, Mode};

#[derive(Parser)]
#[command(name = "ichea", version, about = "Incremental constraint-driven evolutionary solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one exam-timetabling instance.
    Solve(commands::SolveArgs),
    /// Check a solution file and print its hard violations and proximity cost.
    Evaluate(commands::EvaluateArgs),
    /// Run seeded trials over a suite and write summary statistics.
    Bench(bench::BenchArgs),
    /// Solve an N-Queens board.
    Nqueen(commands::NqueenArgs),
    /// Add an exam to a solved instance, reusing stored increment snapshots.
    Whatif(commands::WhatifArgs),
}

/// Engine settings shared by the solving subcommands. A config file is
/// applied first; flags override it.
#[derive(Args, Clone, Debug, Default)]
pub struct EngineFlags {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    fitness: Option<FitnessMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Wall-clock budget; replaces the default generation cap unless
    /// `--max-generations` is also given.
    #[arg(long)]
    budget_secs: Option<f64>,
    #[arg(long)]
    max_generations: Option<u64>,
}

impl EngineFlags {
    pub fn resolve(&self) -> anyhow::Result<EngineConfig> {
        let mut cfg = EngineConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            cfg.apply(&text)?;
        }
        if let Some(mode) = self.mode {
            cfg.set_mode(mode);
        }
        if let Some(fitness) = self.fitness {
            cfg.fitness_mode = fitness;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(secs) = self.budget_secs {
            cfg.budget_secs = Some(secs);
            cfg.max_generations = self.max_generations;
        } else if let Some(g) = self.max_generations {
            cfg.max_generations = Some(g);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => commands::solve(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Bench(args) => bench::bench(&args),
        Command::Nqueen(args) => commands::nqueen(&args),
        Command::Whatif(args) => commands::whatif(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
