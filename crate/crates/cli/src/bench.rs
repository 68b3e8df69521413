use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{data_dir, load_named};
use crate::EngineFlags;
use ichea::fitness::proximity_cost;
use ichea::timetabling::read_metadata;
use ichea::{run, EngineConfig, Mode, TimetablingProblem};

#[derive(Args)]
pub struct BenchArgs {
    /// `name T` metadata file listing the instances to run.
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "ichea,iichea")]
    modes: Vec<Mode>,
    /// Trials run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Dataset directory; defaults to `$ICHEA_DATA_DIR`, then `data`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output path stem: writes `<out>.csv` and `<out>.json`.
    #[arg(long, default_value = "bench")]
    out: PathBuf,
    /// Engine settings; `--mode` is ignored in favour of `--modes`, and
    /// trial `k` uses seed `seed + k`.
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trial {
    pub seed: u64,
    pub feasible: bool,
    pub cost: Option<f64>,
    pub cost_numerator: Option<u64>,
    pub wall_secs: f64,
}

/// Statistics for one instance and mode, over the feasible trials.
#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub instance: String,
    pub mode: Mode,
    pub best: Option<f64>,
    pub median: Option<f64>,
    pub worst: Option<f64>,
    pub sd: Option<f64>,
    pub success_rate: f64,
    pub error: Option<String>,
    pub trials: Vec<Trial>,
}

#[derive(Serialize)]
struct Report<'a> {
    seeds: Vec<u64>,
    rows: &'a [Row],
}

/// Best, lower-middle median, worst and population standard deviation.
pub fn statistics(costs: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if costs.is_empty() {
        return None;
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    Some((
        sorted[0],
        sorted[(sorted.len() - 1) / 2],
        sorted[sorted.len() - 1],
        var.sqrt(),
    ))
}

fn run_trial(problem: &TimetablingProblem, cfg: &EngineConfig) -> Result<Trial, String> {
    let result = run(problem, cfg).map_err(|e| e.to_string())?;
    let cost = if result.success {
        let tt = problem.timetable(&result.best);
        Some(
            proximity_cost(&tt, problem.conflict_matrix(), problem.instance().students())
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };
    Ok(Trial {
        seed: cfg.seed,
        feasible: cost.is_some(),
        cost: cost.as_ref().map(|c| c.value()),
        cost_numerator: cost.as_ref().map(|c| c.numerator),
        wall_secs: result.wall_time.as_secs_f64(),
    })
}

pub fn bench(args: &BenchArgs) -> anyhow::Result<u8> {
    let base = args.engine.resolve()?;
    let suite = read_metadata(&args.suite)?;
    let dir = data_dir(args.data_dir.as_deref());
    let seeds: Vec<u64> = (0..args.trials as u64).map(|k| base.seed.wrapping_add(k)).collect();

    // Problems per (instance, mode); load failures become row errors.
    let mut cells = Vec::new();
    for (name, slots) in &suite {
        let loaded = load_named(&dir, name, *slots);
        for &mode in &args.modes {
            let mut cfg = base.clone();
            cfg.set_mode(mode);
            let problem = loaded
                .as_ref()
                .map(|inst| TimetablingProblem::new(inst.clone(), cfg.fitness_mode))
                .map_err(|e| format!("{e:#}"));
            cells.push((name.clone(), cfg, problem));
        }
    }
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .context("building thread pool")?;
    let outcomes: Vec<Result<Trial, String>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, seed)| {
                let (_, cfg, problem) = &cells[c];
                let problem = problem.as_ref().map_err(Clone::clone)?;
                let mut cfg = cfg.clone();
                cfg.seed = seed;
                run_trial(problem, &cfg)
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for (name, cfg, _) in &cells {
        let mut trials = Vec::new();
        let mut errors = Vec::new();
        for outcome in outcomes.by_ref().take(seeds.len()) {
            match outcome {
                Ok(t) => trials.push(t),
                Err(e) => errors.push(e),
            }
        }
        errors.dedup();
        let costs: Vec<f64> = trials.iter().filter_map(|t| t.cost).collect();
        let stats = statistics(&costs);
        rows.push(Row {
            instance: name.clone(),
            mode: cfg.mode,
            best: stats.map(|s| s.0),
            median: stats.map(|s| s.1),
            worst: stats.map(|s| s.2),
            sd: stats.map(|s| s.3),
            success_rate: costs.len() as f64 / seeds.len().max(1) as f64,
            error: (!errors.is_empty()).then(|| errors.join("; ")),
            trials,
        });
    }

    let csv_path = args.out.with_extension("csv");
    let mut csv = csv::Writer::from_path(&csv_path).with_context(|| csv_path.display().to_string())?;
    csv.write_record(["instance", "mode", "best", "median", "worst", "sd", "sr", "error"])?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
    for r in &rows {
        csv.write_record([
            r.instance.clone(),
            r.mode.to_string(),
            fmt(r.best),
            fmt(r.median),
            fmt(r.worst),
            fmt(r.sd),
            format!("{:.2}", r.success_rate),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    let json_path = args.out.with_extension("json");
    let report = Report { seeds, rows: &rows };
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| json_path.display().to_string())?;
    for r in &rows {
        println!(
            "{:<10} {:<6} best {} median {} worst {} sd {} sr {:.2}",
            r.instance,
            r.mode,
            fmt(r.best),
            fmt(r.median),
            fmt(r.worst),
            fmt(r.sd),
            r.success_rate
        );
    }
    Ok(0)
}
