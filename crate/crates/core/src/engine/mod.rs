//! The incremental evolutionary loop and the pieces it is built from:
//! constraint batching, survivor selection, tabu regions and snapshots.

mod run;
mod snapshot;
mod whatif;

pub use run::{run, Engine, IncrementStats, RunResult, TracePoint};
pub use snapshot::{read_snapshots, write_snapshots, IncrementSnapshot};
pub use whatif::{whatif_add, Attempt, UnresolvedReport, WhatIfOutcome};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Chromosome, ConstraintId, EngineRng, Gene, Problem};
use crate::timetabling::ConflictMatrix;

/// Exams by descending count of distinct conflicting exams, ties by id.
pub fn ld_order(cm: &ConflictMatrix) -> Vec<ConstraintId> {
    let mut order: Vec<usize> = (0..cm.exam_count()).collect();
    order.sort_by_key(|&e| (std::cmp::Reverse(cm.degree(e)), e));
    order.into_iter().map(ConstraintId::from_index).collect()
}

/// Constraints split into the batches added one increment at a time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncrementPlan {
    batches: Vec<Vec<ConstraintId>>,
}

impl IncrementPlan {
    /// Chunks `order` into batches of ⌈r·m⌉ constraints.
    pub fn new(order: &[ConstraintId], fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "increment_fraction {fraction} outside (0, 1]"
            )));
        }
        let size = batch_size(order.len(), fraction);
        Ok(IncrementPlan {
            batches: order.chunks(size).map(<[_]>::to_vec).collect(),
        })
    }

    pub fn from_batches(batches: Vec<Vec<ConstraintId>>) -> Self {
        IncrementPlan {
            batches: batches.into_iter().filter(|b| !b.is_empty()).collect(),
        }
    }

    pub fn batches(&self) -> &[Vec<ConstraintId>] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// All constraints in plan order.
    pub fn order(&self) -> Vec<ConstraintId> {
        self.batches.concat()
    }
}

/// ⌈r·m⌉, at least 1; the epsilon keeps exact products like 0.05·20 from
/// rounding up a whole batch.
pub fn batch_size(m: usize, fraction: f64) -> usize {
    ((fraction * m as f64 - 1e-9).ceil() as usize).clamp(1, m.max(1))
}

/// Random genes over `batch`, dropping any that clash with genes already placed.
pub fn random_partial(batch: &[ConstraintId], rng: &mut EngineRng, problem: &dyn Problem) -> Vec<Gene> {
    let mut genes = Vec::with_capacity(batch.len());
    for &c in batch {
        let g = problem.random_gene(c, rng);
        if problem.compatible(g, &genes) {
            genes.push(g);
        }
    }
    genes
}

pub fn initialize_increment(
    batch: &[ConstraintId],
    pop_size: usize,
    rng: &mut EngineRng,
    problem: &dyn Problem,
) -> Vec<Chromosome> {
    (0..pop_size)
        .map(|_| Chromosome::new(random_partial(batch, rng, problem)))
        .collect()
}

/// The intermediate indices `f′` and the selected indices `f″`.
///
/// The printed formulas disagree with their own worked example; the
/// exponent denominator here is `n − 1`, the scale is `n + κ − 1` and the
/// dedup step builds on `f″(i−1)`, which reproduces the example exactly.
pub fn survivor_curve(n: usize, kappa: usize, rho: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::TooFewSurvivors(n));
    }
    if kappa == 0 {
        let identity: Vec<usize> = (0..n).collect();
        return Ok((identity.clone(), identity));
    }
    let last = n + kappa - 1;
    let f = |i: usize| (-rho * (n - i) as f64 / (n - 1) as f64).exp();
    let f1 = f(1);
    let scaled: Vec<usize> = (1..=n)
        .map(|i| (last as f64 * ((f(i) - f1) / (1.0 - f1))).floor() as usize)
        .collect();
    let mut picked = Vec::with_capacity(n);
    for (k, &v) in scaled.iter().enumerate() {
        let i = k + 1;
        let v = match picked.last() {
            Some(&prev) if v <= prev => prev + 1,
            _ => v,
        };
        picked.push(v.min(last - (n - i)));
    }
    Ok((scaled, picked))
}

/// Indices into a best-first pool of `n + κ` chromosomes that survive.
pub fn select_survivors(pool_len: usize, n: usize, rho: f64) -> Result<Vec<usize>> {
    if pool_len < n {
        return Err(Error::TooFewSurvivors(pool_len));
    }
    Ok(survivor_curve(n, pool_len - n, rho)?.1)
}

/// Adds every protected pool index to `selected`, then drops the
/// worst-ranked unprotected picks until `n` remain.
pub fn retain_protected(selected: &[usize], protected: &[bool], n: usize) -> Vec<usize> {
    let mut keep = vec![false; protected.len()];
    for &i in selected {
        keep[i] = true;
    }
    for (i, &p) in protected.iter().enumerate() {
        keep[i] |= p;
    }
    let mut count = keep.iter().filter(|&&k| k).count();
    for pass_protected in [false, true] {
        for i in (0..keep.len()).rev() {
            if count <= n {
                break;
            }
            if keep[i] && protected[i] == pass_protected {
                keep[i] = false;
                count -= 1;
            }
        }
    }
    (0..keep.len()).filter(|&i| keep[i]).collect()
}

/// One slot per constraint: the assigned value, or wildcard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TabuPattern {
    pub slots: Vec<Option<u32>>,
}

impl TabuPattern {
    pub fn wildcards(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }
}

/// The last `t` best solutions as positional vectors, newest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BestHistory {
    ring: VecDeque<Vec<Option<u32>>>,
    capacity: usize,
}

impl BestHistory {
    pub fn new(capacity: usize) -> Self {
        BestHistory {
            ring: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, positional: Vec<Option<u32>>) {
        if self.ring.len() == self.capacity {
            self.ring.pop_back();
        }
        self.ring.push_front(positional);
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn clear(&mut self) {
        self.ring.clear();
    }

    pub fn get(&self, i: usize) -> Option<&[Option<u32>]> {
        self.ring.get(i).map(Vec::as_slice)
    }
}

/// Intersects the current best with the `depth` previous bests: positions
/// where all agree keep their value, the rest become wildcards.
pub fn tabu_intersect(history: &BestHistory, depth: usize) -> Result<TabuPattern> {
    if depth == 0 || history.len() < depth + 1 {
        return Err(Error::InsufficientHistory {
            needed: depth + 1,
            available: history.len(),
        });
    }
    let mut slots = history.ring[0].clone();
    for prev in history.ring.iter().skip(1).take(depth) {
        for (s, p) in slots.iter_mut().zip(prev) {
            if *s != *p {
                *s = None;
            }
        }
    }
    Ok(TabuPattern { slots })
}

/// Whether `positional` agrees with every fixed position of `pattern`.
pub fn is_tabu(positional: &[Option<u32>], pattern: &TabuPattern) -> Result<bool> {
    if positional.len() != pattern.slots.len() {
        return Err(Error::LengthMismatch {
            expected: pattern.slots.len(),
            actual: positional.len(),
        });
    }
    Ok(pattern
        .slots
        .iter()
        .zip(positional)
        .all(|(p, s)| p.is_none() || p == s))
}

/// Positional vector of a gene set over `m` constraints.
pub fn positional(genes: &[Gene], m: usize) -> Vec<Option<u32>> {
    let mut out = vec![None; m];
    for g in genes {
        out[g.constraint.index()] = Some(g.value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nqueen::NQueens;
    use crate::timetabling::{build_conflict_matrix, Instance};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn survivor_curve_matches_worked_example() {
        let (scaled, picked) = survivor_curve(10, 40, 5.0).unwrap();
        assert_eq!(scaled, vec![0, 0, 0, 1, 2, 5, 8, 15, 27, 49]);
        assert_eq!(picked, vec![0, 1, 2, 3, 4, 5, 8, 15, 27, 49]);
        assert_eq!(select_survivors(50, 10, 5.0).unwrap(), picked);
    }

    #[test]
    fn survivor_edge_cases() {
        assert_eq!(select_survivors(7, 7, 5.0).unwrap(), (0..7).collect::<Vec<_>>());
        assert!(matches!(select_survivors(5, 1, 5.0), Err(Error::TooFewSurvivors(1))));
        assert!(select_survivors(3, 4, 5.0).is_err());
    }

    proptest! {
        #[test]
        fn survivors_are_spread_and_distinct(n in 2usize..60, kappa in 0usize..200, rho in 0.5f64..10.0) {
            let s = select_survivors(n + kappa, n, rho).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert_eq!(s[0], 0);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(*s.last().unwrap(), n + kappa - 1);
        }

        #[test]
        fn tabu_wildcards_never_shrink(seed in 0u64..500) {
            let mut rng = EngineRng::seed_from_u64(seed);
            let mut h = BestHistory::new(5);
            for _ in 0..5 {
                h.push((0..8).map(|_| Some(rng.gen_range(0..3))).collect());
            }
            let counts: Vec<usize> = (1..5).map(|d| tabu_intersect(&h, d).unwrap().wildcards()).collect();
            prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn retention_keeps_recent_improvers() {
        let selected = vec![0, 1, 2, 5, 9];
        let mut protected = vec![false; 10];
        protected[3] = true;
        protected[7] = true;
        assert_eq!(retain_protected(&selected, &protected, 5), vec![0, 1, 2, 3, 7]);
        assert_eq!(retain_protected(&selected, &[false; 10], 5), selected);
    }

    #[test]
    fn ld_order_sorts_by_degree_then_id() {
        // Star around exam 3 plus an isolated exam 5.
        let inst = Instance::from_text("s", "1 1\n2 1\n3 3\n4 1\n5 1\n", "1 3\n2 3\n3 4\n5\n", 3).unwrap();
        let order: Vec<u32> = ld_order(&build_conflict_matrix(&inst)).iter().map(|c| c.0).collect();
        assert_eq!(order, vec![3, 1, 2, 4, 5]);
        let flat = Instance::from_text("f", "1 1\n2 1\n3 1\n", "1\n2\n3\n", 3).unwrap();
        let order: Vec<u32> = ld_order(&build_conflict_matrix(&flat)).iter().map(|c| c.0).collect();
        assert_eq!(order, vec![1, 2, 3]);
    }

    #[test]
    fn ld_order_matches_sort_oracle() {
        let mut rng = EngineRng::seed_from_u64(9);
        for _ in 0..50 {
            let mut dense = vec![0u32; 400];
            for a in 0..20 {
                for b in a + 1..20 {
                    if rng.gen_bool(0.3) {
                        let w = rng.gen_range(1..4);
                        dense[a * 20 + b] = w;
                        dense[b * 20 + a] = w;
                    }
                }
            }
            let cm = ConflictMatrix::from_dense(20, dense.clone());
            let degree = |e: usize| (0..20).filter(|&b| dense[e * 20 + b] > 0).count();
            let mut oracle: Vec<usize> = (0..20).collect();
            for i in 0..20 {
                for j in 0..19 - i {
                    let (a, b) = (oracle[j], oracle[j + 1]);
                    if degree(a) < degree(b) || (degree(a) == degree(b) && a > b) {
                        oracle.swap(j, j + 1);
                    }
                }
            }
            let got: Vec<usize> = ld_order(&cm).iter().map(|c| c.index()).collect();
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn plan_partitions_in_order() {
        let order: Vec<ConstraintId> = (1..=45).map(ConstraintId).collect();
        let plan = IncrementPlan::new(&order, 0.05).unwrap();
        assert!(plan.batches()[..plan.len() - 1].iter().all(|b| b.len() == 3));
        assert_eq!(plan.order(), order);
        assert_eq!(batch_size(20, 0.05), 1);
        assert_eq!(batch_size(10, 0.05), 1);
        assert_eq!(batch_size(139, 0.05), 7);
        assert!(IncrementPlan::new(&order, 0.0).is_err());
    }

    #[test]
    fn tabu_examples() {
        let mut h = BestHistory::new(5);
        h.push(vec![Some(1), Some(5), Some(3)]);
        h.push(vec![Some(1), Some(2), Some(3)]);
        let p = tabu_intersect(&h, 1).unwrap();
        assert_eq!(p.slots, vec![Some(1), None, Some(3)]);
        assert!(tabu_intersect(&h, 2).is_err());

        let pattern = TabuPattern {
            slots: vec![Some(2), Some(5), None, Some(1), Some(3), None],
        };
        let s = |v: [u32; 6]| v.map(Some).to_vec();
        assert!(is_tabu(&s([2, 5, 4, 1, 3, 6]), &pattern).unwrap());
        assert!(!is_tabu(&s([2, 5, 1, 4, 3, 6]), &pattern).unwrap());
        let open = TabuPattern { slots: vec![None; 6] };
        assert!(is_tabu(&s([6, 5, 4, 3, 2, 1]), &open).unwrap());
        assert!(is_tabu(&s([1, 1, 1, 1, 1, 1])[..5], &open).is_err());

        let mut same = BestHistory::new(5);
        same.push(vec![Some(4), Some(2)]);
        same.push(vec![Some(4), Some(2)]);
        assert_eq!(tabu_intersect(&same, 1).unwrap().wildcards(), 0);
        let mut apart = BestHistory::new(5);
        apart.push(vec![Some(1), Some(2)]);
        apart.push(vec![Some(2), Some(1)]);
        assert_eq!(tabu_intersect(&apart, 1).unwrap().wildcards(), 2);
    }

    #[test]
    fn initialization_is_feasible_and_partial_on_dense_batches() {
        let mut rng = EngineRng::seed_from_u64(3);
        let q = NQueens::new(12);
        let batch: Vec<ConstraintId> = (1..=12).map(ConstraintId).collect();
        let pop = initialize_increment(&batch, 200, &mut rng, &q);
        assert_eq!(pop.len(), 200);
        assert!(pop.iter().all(|c| q.is_feasible(c.genes())));
        let mean = pop.iter().map(Chromosome::len).sum::<usize>() as f64 / 200.0;
        assert!(mean < 12.0);

        let free = Instance::from_text("f", "1 1\n2 1\n3 1\n", "1\n2\n3\n", 2).unwrap();
        let p = crate::timetabling::TimetablingProblem::new(free, crate::config::FitnessMode::Weighted);
        let batch: Vec<ConstraintId> = (1..=3).map(ConstraintId).collect();
        assert!(initialize_increment(&batch, 20, &mut rng, &p).iter().all(|c| c.len() == 3));
        assert!(initialize_increment(&batch[..1], 20, &mut rng, &p).iter().all(|c| c.len() == 1));
    }
}
