use serde::Serialize;

use super::{batch_size, Engine, IncrementPlan, IncrementSnapshot, RunResult};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{ActiveSet, ConstraintId, Gene, Problem};

/// One snapshot that could not absorb the new constraints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Attempt {
    pub increment: usize,
    /// True when the snapshot's own constraints were blamed rather than the new ones.
    pub blamed_snapshot: bool,
    pub unresolved: Vec<ConstraintId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnresolvedReport {
    pub added: Vec<ConstraintId>,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug)]
pub enum WhatIfOutcome {
    /// The new constraints fit the snapshot taken after `increment`;
    /// `result` is the run resumed from there.
    Resolved {
        increment: usize,
        steps_back: usize,
        attempts: Vec<Attempt>,
        result: Box<RunResult>,
    },
    Unresolved(UnresolvedReport),
}

/// Drops genes of a stored solution that are inactive or clash under the
/// (possibly changed) problem, keeping the rest in order.
fn sanitize(problem: &dyn Problem, genes: &[Gene], active: &ActiveSet) -> Vec<Gene> {
    let mut kept: Vec<Gene> = Vec::with_capacity(genes.len());
    for &g in genes {
        if active.contains(g.constraint)
            && kept.iter().all(|k| k.constraint != g.constraint)
            && problem.compatible(g, &kept)
        {
            kept.push(g);
        }
    }
    kept
}

/// Tries the snapshots newest first: each gets a bounded search for
/// solutions covering its constraints plus `added`; the first success
/// resumes the full run from those solutions.
///
/// Constraint strength is compared through the weakest member of each side.
pub fn whatif_add(
    problem: &dyn Problem,
    snapshots: &[IncrementSnapshot],
    added: &[ConstraintId],
    config: &EngineConfig,
) -> Result<WhatIfOutcome> {
    if snapshots.is_empty() {
        return Err(Error::NoSnapshots);
    }
    let m = problem.constraint_count();
    let known = |c: ConstraintId| c.0 >= 1 && c.index() < m;
    if let Some(c) = added.iter().copied().find(|&c| !known(c)) {
        return Err(Error::UnknownExam(c.0));
    }
    for s in snapshots {
        if let Some(c) = s.constraints.iter().copied().find(|&c| !known(c)) {
            return Err(Error::UnknownExam(c.0));
        }
    }
    let strength = |cs: &[ConstraintId]| cs.iter().map(|&c| problem.strength(c)).min().unwrap_or(0);
    let mut engine = Engine::new(problem, config.clone())?;
    let mut attempts = Vec::new();
    for (steps_back, snap) in snapshots.iter().rev().enumerate() {
        let mut active = ActiveSet::new(m);
        active.extend(snap.constraints.iter().copied());
        active.extend(added.iter().copied());
        let seeds: Vec<Vec<Gene>> = snap
            .solutions
            .iter()
            .map(|s| sanitize(problem, s, &active))
            .collect();
        let probe = engine.probe(active.members(), seeds, added, config.whatif_generations)?;
        if !probe.complete.is_empty() {
            let rest: Vec<ConstraintId> = problem
                .increment_order()
                .into_iter()
                .filter(|&c| !active.contains(c))
                .collect();
            let mut batches = vec![active.members().to_vec()];
            batches.extend(
                rest.chunks(batch_size(m, config.increment_fraction))
                    .map(<[_]>::to_vec),
            );
            let result = engine.run_plan(&IncrementPlan::from_batches(batches), probe.complete)?;
            return Ok(WhatIfOutcome::Resolved {
                increment: snap.increment,
                steps_back,
                attempts,
                result: Box::new(result),
            });
        }
        let mut held = ActiveSet::new(m);
        held.extend(probe.longest.iter().map(|g| g.constraint));
        let blamed_snapshot = strength(&snap.constraints) < strength(added);
        let unresolved = if blamed_snapshot {
            snap.constraints
                .iter()
                .copied()
                .filter(|&c| !held.contains(c))
                .collect()
        } else {
            added.to_vec()
        };
        attempts.push(Attempt {
            increment: snap.increment,
            blamed_snapshot,
            unresolved,
        });
    }
    Ok(WhatIfOutcome::Unresolved(UnresolvedReport {
        added: added.to_vec(),
        attempts,
    }))
}
