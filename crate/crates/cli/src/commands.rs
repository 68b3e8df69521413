use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;

use crate::dataset::InstanceArgs;
use crate::EngineFlags;
use ichea::engine::{
    read_snapshots, whatif_add, write_snapshots, IncrementStats, TracePoint, WhatIfOutcome,
};
use ichea::fitness::{gap_pair_counts, proximity_cost};
use ichea::nqueen::enumerate_solutions;
use ichea::timetabling::{hard_violations, read_solution, write_solution};
use ichea::{run, ConstraintId, EngineConfig, FitnessMode, Mode, NQueens, Problem, RunResult, TimetablingProblem};

#[derive(Args)]
pub struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    engine: EngineFlags,
    /// Where to write the best solution (`exam_id slot` lines).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory receiving one snapshot file per completed increment.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Where to write the JSON run summary (always printed to stdout).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Args)]
pub struct NqueenArgs {
    #[arg(long)]
    n: u32,
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(Args)]
pub struct WhatifArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    engine: EngineFlags,
    /// Snapshot directory written by `solve --snapshots`.
    #[arg(long)]
    snapshots: PathBuf,
    /// Exam to add: an existing id, or one past the last id for a new exam.
    #[arg(long)]
    add_exam: u32,
    /// 1-based student indices (stu-file line numbers) taking the exam.
    #[arg(long, value_delimiter = ',')]
    students: Vec<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// JSON run report. Wall time is left out so fixed-seed runs compare equal.
#[derive(Serialize)]
pub struct Summary {
    pub instance: String,
    pub exams: u32,
    pub students: usize,
    pub slots: u16,
    pub mode: Mode,
    pub fitness: FitnessMode,
    pub seed: u64,
    pub feasible: bool,
    pub assigned: usize,
    pub hard_violations: Option<usize>,
    /// Proximity cost with four decimals.
    pub cost: Option<String>,
    /// Exact cost numerator; the cost is this over `students`.
    pub cost_numerator: Option<u64>,
    /// Conflicting-pair counts at gaps 1..=5 (`l_0..l_4`), generic fitness only.
    pub histogram: Option<Vec<u64>>,
    pub generations: u64,
    pub trace: Vec<TracePoint>,
    pub increments: Vec<IncrementStats>,
}

pub fn summarize(problem: &TimetablingProblem, cfg: &EngineConfig, result: &RunResult) -> anyhow::Result<Summary> {
    let inst = problem.instance();
    let tt = problem.timetable(&result.best);
    let complete = result.success && tt.is_total();
    let (violations, cost, histogram) = if complete {
        let v = hard_violations(&tt, problem.conflict_matrix())?;
        let cost = (v == 0)
            .then(|| proximity_cost(&tt, problem.conflict_matrix(), inst.students()))
            .transpose()?;
        let hist = (v == 0 && cfg.fitness_mode == FitnessMode::Generic)
            .then(|| gap_pair_counts(&tt, problem.conflict_matrix()))
            .transpose()?;
        (Some(v), cost, hist)
    } else {
        (None, None, None)
    };
    Ok(Summary {
        instance: inst.name.clone(),
        exams: inst.exams,
        students: inst.students(),
        slots: inst.slots,
        mode: cfg.mode,
        fitness: cfg.fitness_mode,
        seed: cfg.seed,
        feasible: violations == Some(0),
        assigned: result.best.len(),
        hard_violations: violations,
        cost: cost.as_ref().map(ToString::to_string),
        cost_numerator: cost.as_ref().map(|c| c.numerator),
        histogram,
        generations: result.generations,
        trace: result.trace.clone(),
        increments: result.increments.clone(),
    })
}

pub fn solve(args: &SolveArgs) -> anyhow::Result<u8> {
    let cfg = args.engine.resolve()?;
    let instance = args.instance.load()?;
    let problem = TimetablingProblem::new(instance, cfg.fitness_mode);
    let result = run(&problem, &cfg)?;
    log::info!("finished in {:.2?}", result.wall_time);
    let summary = summarize(&problem, &cfg, &result)?;
    if let Some(dir) = &args.snapshots {
        write_snapshots(dir, &result.snapshots)?;
    }
    if let Some(out) = &args.out {
        if summary.feasible {
            write_solution(&problem.timetable(&result.best), out)?;
        } else {
            log::warn!("no feasible solution; {} not written", out.display());
        }
    }
    let json = serde_json::to_string_pretty(&summary)?;
    if let Some(path) = &args.summary {
        std::fs::write(path, format!("{json}\n")).with_context(|| path.display().to_string())?;
    }
    println!("{json}");
    Ok(if summary.feasible { 0 } else { 1 })
}

pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<u8> {
    let instance = args.instance.load()?;
    let problem = TimetablingProblem::new(instance, FitnessMode::Weighted);
    let inst = problem.instance();
    let tt = read_solution(&args.solution, inst.exams as usize, inst.slots)?;
    let violations = hard_violations(&tt, problem.conflict_matrix())?;
    println!("violations: {violations}");
    if violations > 0 {
        println!("cost: infeasible");
        return Ok(1);
    }
    let cost = proximity_cost(&tt, problem.conflict_matrix(), inst.students())?;
    println!("cost: {cost}");
    Ok(0)
}

pub fn nqueen(args: &NqueenArgs) -> anyhow::Result<u8> {
    if args.n == 0 {
        bail!("--n must be positive");
    }
    let oracle = (args.n <= 10)
        .then(|| enumerate_solutions(args.n as usize))
        .transpose()?;
    if oracle.as_ref().is_some_and(Vec::is_empty) {
        println!("no solution exists for N = {}", args.n);
        return Ok(1);
    }
    let cfg = args.engine.resolve()?;
    let board = NQueens::new(args.n);
    let result = run(&board, &cfg)?;
    let Some(rows) = board.rows(&result.best).filter(|_| result.success) else {
        println!("no solution found within the budget ({} queens placed)", result.best.len());
        return Ok(1);
    };
    let text: Vec<String> = rows.iter().map(u32::to_string).collect();
    println!("{}", text.join(" "));
    if let Some(oracle) = oracle {
        if !oracle.contains(&rows) {
            bail!("placement is not among the {} enumerated solutions", oracle.len());
        }
        println!("verified against {} enumerated solutions", oracle.len());
    } else if !board.is_feasible(&result.best) {
        bail!("placement has attacking queens");
    }
    Ok(0)
}

pub fn whatif(args: &WhatifArgs) -> anyhow::Result<u8> {
    let cfg = args.engine.resolve()?;
    let base = args.instance.load()?;
    let original = TimetablingProblem::new(base.clone(), cfg.fitness_mode);
    let snapshots = read_snapshots(&args.snapshots, &original.increment_order())?;
    let extended = base.with_enrollment(args.add_exam, &args.students)?;
    let problem = TimetablingProblem::new(extended, cfg.fitness_mode);
    let added = [ConstraintId(args.add_exam)];
    let report_attempts = |attempts: &[ichea::engine::Attempt]| {
        for a in attempts {
            let ids: Vec<String> = a.unresolved.iter().map(|c| c.0.to_string()).collect();
            let side = if a.blamed_snapshot { "stored exams" } else { "added exams" };
            println!("increment {}: unresolved {side} [{}]", a.increment, ids.join(", "));
        }
    };
    match whatif_add(&problem, &snapshots, &added, &cfg)? {
        WhatIfOutcome::Resolved {
            increment,
            steps_back,
            attempts,
            result,
        } => {
            report_attempts(&attempts);
            println!("resolved from increment {increment} after {steps_back} step(s) back");
            let summary = summarize(&problem, &cfg, &result)?;
            if !summary.feasible {
                println!("resumed run ended without a complete timetable");
                return Ok(1);
            }
            println!("cost: {}", summary.cost.as_deref().unwrap_or("n/a"));
            if let Some(out) = &args.out {
                write_solution(&problem.timetable(&result.best), out)?;
            }
            Ok(0)
        }
        WhatIfOutcome::Unresolved(report) => {
            report_attempts(&report.attempts);
            let ids: Vec<String> = report.added.iter().map(|c| c.0.to_string()).collect();
            println!("unresolved: no snapshot accepts exams [{}]", ids.join(", "));
            Ok(1)
        }
    }
}
