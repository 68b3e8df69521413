//! Operator sequencing and reversible clonal hill-climbing.

use std::cmp::Ordering;

use rand::Rng;

use super::OperatorKind;
use crate::model::{
    digest, ActiveSet, Chromosome, EngineRng, Gene, Guides, HistoryEntry, Optimizer, Population,
    Score, TabuEntry,
};

/// Cycles through the operators, advancing after `period` generations
/// without improvement of the best solution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorSequencer {
    current: OperatorKind,
    stagnation: u32,
    period: u32,
}

impl OperatorSequencer {
    pub fn new(period: u32) -> Self {
        OperatorSequencer {
            current: OperatorKind::KempeTraditional,
            stagnation: 0,
            period: period.max(1),
        }
    }

    pub fn current(&self) -> OperatorKind {
        self.current
    }

    pub fn stagnation(&self) -> u32 {
        self.stagnation
    }

    /// Records one generation's outcome and returns the operator to use next.
    pub fn next_operator(&mut self, improved: bool) -> OperatorKind {
        if improved {
            self.stagnation = 0;
        } else {
            self.stagnation += 1;
            if self.stagnation >= self.period {
                self.stagnation = 0;
                self.current = self.current.next();
            }
        }
        self.current
    }
}

/// Clones for the individual at 1-based fitness rank `rank`.
pub fn clone_count(rank: usize, pop_size: usize, alpha: usize) -> usize {
    assert!(rank >= 1, "ranks are 1-based");
    (alpha * pop_size / rank).min(5)
}

pub struct RchcContext<'a> {
    pub optimizer: &'a dyn Optimizer,
    pub op: OperatorKind,
    pub degree: usize,
    pub pop_size: usize,
    pub clone_constant: usize,
    pub backtrack_stagnation: u32,
    pub strict_tabu: bool,
    pub generation: u64,
    /// Members that may not act as donors (tabu-region matches).
    pub excluded: &'a dyn Fn(&Chromosome) -> bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RchcOutcome {
    /// Members dropped after exhausting their history; the caller refills.
    pub removed: usize,
    pub reverted: usize,
    pub replacements: usize,
}

fn score_of(c: &mut Chromosome, opt: &dyn Optimizer) -> Score {
    if c.fitness().is_none() {
        let s = opt.score(c.genes());
        c.set_fitness(s);
    }
    c.fitness().expect("scored").clone()
}

/// Indices of `pool` from best to worst, ties broken by ascending digest.
pub fn rank_order(pool: &mut [Chromosome], opt: &dyn Optimizer) -> Vec<usize> {
    let keyed: Vec<(Score, u64)> = pool
        .iter_mut()
        .map(|c| (score_of(c, opt), c.digest()))
        .collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        keyed[b].0
            .cmp_quality(&keyed[a].0)
            .then(keyed[a].1.cmp(&keyed[b].1))
    });
    order
}

fn is_tabu(c: &Chromosome, score: &Score, dig: u64, strict: bool) -> bool {
    c.rchc
        .tabu
        .iter()
        .any(|t| t.score == *score && (strict || t.digest == dig))
}

/// One generation of clone-mutate-replace over a pool of feasible members.
pub fn rchc_step(pool: &mut Vec<Chromosome>, ctx: &RchcContext<'_>, rng: &mut EngineRng) -> RchcOutcome {
    let mut outcome = RchcOutcome::default();
    if pool.is_empty() {
        return outcome;
    }
    let opt = ctx.optimizer;
    let order = rank_order(pool, opt);
    let best_idx = order[0];
    let best_genes: Vec<Gene> = pool[best_idx].genes().to_vec();
    let donors: Vec<usize> = (0..pool.len()).filter(|&i| !(ctx.excluded)(&pool[i])).collect();
    let snapshot: Vec<Vec<Gene>> = pool.iter().map(|c| c.genes().to_vec()).collect();
    let mut remove = vec![false; pool.len()];

    for (rank, &idx) in order.iter().enumerate() {
        let clones = clone_count(rank + 1, ctx.pop_size, ctx.clone_constant);
        let mut improved = false;
        for _ in 0..clones {
            let peer = pick_peer(&donors, idx, rng).unwrap_or(best_idx);
            let guides = Guides {
                best: &best_genes,
                peer: &snapshot[peer],
                degree: ctx.degree,
            };
            let member = &mut pool[idx];
            let mutant = opt.mutate(ctx.op, member.genes(), guides, rng);
            let dig = digest(&mutant);
            if dig == member.digest() {
                continue;
            }
            let score = opt.score(&mutant);
            if is_tabu(member, &score, dig, ctx.strict_tabu) {
                continue;
            }
            let current = score_of(member, opt);
            if score.better_than(&current) {
                let old = member.genes().to_vec();
                member.rchc.history.push(HistoryEntry {
                    genes: old,
                    score: current,
                });
                member.set_genes(mutant);
                member.set_fitness(score);
                improved = true;
                outcome.replacements += 1;
            }
        }
        let member = &mut pool[idx];
        if improved {
            member.rchc.stagnation = 0;
            member.improved_at = ctx.generation;
            continue;
        }
        member.rchc.stagnation += 1;
        if member.rchc.stagnation < ctx.backtrack_stagnation || idx == best_idx {
            continue;
        }
        let score = score_of(member, opt);
        let dig = member.digest();
        member.rchc.tabu.push(TabuEntry { score, digest: dig });
        match member.rchc.history.pop_newest() {
            Some(prev) => {
                member.set_genes(prev.genes);
                member.set_fitness(prev.score);
                member.rchc.stagnation = 0;
                outcome.reverted += 1;
            }
            None => remove[idx] = true,
        }
    }

    let mut i = 0;
    pool.retain(|_| {
        let keep = !remove[i];
        i += 1;
        keep
    });
    outcome.removed = remove.iter().filter(|&&r| r).count();
    outcome
}

fn pick_peer(donors: &[usize], me: usize, rng: &mut EngineRng) -> Option<usize> {
    let others: Vec<usize> = donors.iter().copied().filter(|&d| d != me).collect();
    if others.is_empty() {
        None
    } else {
        Some(others[rng.gen_range(0..others.len())])
    }
}

/// Pulls each community's infeasible members toward its feasible anchor.
///
/// Returns the tags of members that now satisfy every active constraint.
pub fn community_influence_step(
    pop: &mut Population,
    opt: &dyn Optimizer,
    active: &ActiveSet,
    degree: usize,
    rng: &mut EngineRng,
) -> Vec<u64> {
    let mut complete = Vec::new();
    for community in &pop.communities {
        let Some(anchor) = pop.cop_pool.iter().find(|c| c.tag == community.anchor) else {
            continue;
        };
        let anchor_genes = anchor.genes().to_vec();
        for &tag in &community.members {
            let Some(member) = pop.csp_pool.iter_mut().find(|c| c.tag == tag) else {
                continue;
            };
            let moved = opt.influence(member.genes(), &anchor_genes, degree, rng);
            member.set_genes(moved);
            if active.covered_by(member.genes()) {
                complete.push(tag);
            }
        }
    }
    complete
}

/// Total preorder on optional scores where a missing score is worst.
pub fn cmp_optional(a: Option<&Score>, b: Option<&Score>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => a.cmp_quality(b),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => Ordering::Equal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// One-gene chromosomes whose value is their cost; `step` scripts mutation.
    struct Scripted {
        step: fn(u32) -> u32,
    }

    impl Optimizer for Scripted {
        fn score(&self, genes: &[Gene]) -> Score {
            Score::Cost(u64::from(genes[0].value))
        }

        fn mutate(&self, _: OperatorKind, genes: &[Gene], _: Guides<'_>, _: &mut EngineRng) -> Vec<Gene> {
            vec![Gene::new(1, (self.step)(genes[0].value))]
        }

        fn influence(&self, member: &[Gene], _: &[Gene], _: usize, _: &mut EngineRng) -> Vec<Gene> {
            member.to_vec()
        }

        fn positional(&self, genes: &[Gene]) -> Vec<Option<u32>> {
            vec![Some(genes[0].value)]
        }
    }

    fn member(v: u32) -> Chromosome {
        Chromosome::new(vec![Gene::new(1, v)])
    }

    fn ctx<'a>(opt: &'a Scripted, generation: u64, excluded: &'a dyn Fn(&Chromosome) -> bool) -> RchcContext<'a> {
        RchcContext {
            optimizer: opt,
            op: OperatorKind::KempeTraditional,
            degree: 3,
            pop_size: 2,
            clone_constant: 1,
            backtrack_stagnation: 5,
            strict_tabu: false,
            generation,
            excluded,
        }
    }

    fn value(c: &Chromosome) -> u32 {
        c.genes()[0].value
    }

    #[test]
    fn sequencer_trace() {
        let mut s = OperatorSequencer::new(5);
        for _ in 0..20 {
            assert_eq!(s.next_operator(true), OperatorKind::KempeTraditional);
        }
        let mut seen = vec![s.current()];
        for g in 1..=40 {
            let op = s.next_operator(false);
            if g % 5 == 0 {
                assert_ne!(op, *seen.last().unwrap());
                seen.push(op);
            } else {
                assert_eq!(op, *seen.last().unwrap());
            }
        }
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[8], OperatorKind::KempeTraditional);
        let mut all = seen[..8].to_vec();
        all.sort_by_key(|k| k.index());
        assert_eq!(all, OperatorKind::ALL.to_vec());

        let mut s = OperatorSequencer::new(5);
        for _ in 0..4 {
            s.next_operator(false);
        }
        assert_eq!(s.next_operator(true), OperatorKind::KempeTraditional);
        assert_eq!(s.stagnation(), 0);
    }

    #[test]
    fn clone_counts() {
        assert_eq!(clone_count(1, 100, 1), 5);
        assert_eq!(clone_count(100, 100, 1), 1);
        assert_eq!(clone_count(101, 100, 1), 0);
        assert_eq!(clone_count(30, 100, 1), 3);
    }

    #[test]
    fn monotone_improvement_fills_history() {
        let opt = Scripted { step: |v| v.saturating_sub(1) };
        let none = |_: &Chromosome| false;
        let mut pool = vec![member(100), member(50)];
        let mut rng = EngineRng::seed_from_u64(1);
        for g in 1..=10 {
            let out = rchc_step(&mut pool, &ctx(&opt, g, &none), &mut rng);
            assert_eq!((out.removed, out.reverted), (0, 0));
        }
        for c in &pool {
            assert_eq!(c.rchc.history.len(), 3);
            assert_eq!(c.rchc.stagnation, 0);
        }
    }

    #[test]
    fn stagnant_member_without_history_is_removed() {
        let opt = Scripted { step: |v| v };
        let none = |_: &Chromosome| false;
        let mut pool = vec![member(1), member(9)];
        let mut rng = EngineRng::seed_from_u64(1);
        let mut removed = 0;
        for g in 1..=5 {
            removed += rchc_step(&mut pool, &ctx(&opt, g, &none), &mut rng).removed;
        }
        assert_eq!(removed, 1);
        assert_eq!(pool.len(), 1);
        assert_eq!(value(&pool[0]), 1, "the best member is never dropped");
    }

    #[test]
    fn reverted_member_cannot_return_to_tabu_state() {
        // 5 improves to 4 and then stalls; once reverted, 4 is tabu.
        let opt = Scripted { step: |v| if v == 5 { 4 } else { v } };
        let none = |_: &Chromosome| false;
        let mut pool = vec![member(0), member(5)];
        let mut rng = EngineRng::seed_from_u64(1);
        let mut trace = Vec::new();
        for g in 1..=12 {
            rchc_step(&mut pool, &ctx(&opt, g, &none), &mut rng);
            trace.push(pool.iter().map(value).max().unwrap());
        }
        // g1: 5→4; g2..g6 stall; g6 reverts to 5; 4 stays rejected afterwards;
        // g11 exhausts the history and the member is removed.
        assert_eq!(trace[0], 4);
        assert_eq!(trace[5], 5);
        assert!(trace[6..10].iter().all(|&v| v == 5));
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn lifo_revert_order() {
        // Scripted path 10 → 9 → 8 then stall: reverts replay 8 → 9 → 10.
        let opt = Scripted { step: |v| if v > 8 { v - 1 } else { v } };
        let none = |_: &Chromosome| false;
        let mut pool = vec![member(0), member(10)];
        let mut rng = EngineRng::seed_from_u64(1);
        let mut states = Vec::new();
        for g in 1..=40 {
            rchc_step(&mut pool, &ctx(&opt, g, &none), &mut rng);
            if let Some(c) = pool.iter().find(|c| value(c) != 0) {
                if states.last() != Some(&value(c)) {
                    states.push(value(c));
                }
            }
        }
        assert_eq!(states, vec![9, 8, 9, 10]);
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn best_score_never_worsens() {
        let opt = Scripted { step: |v| (v * 7 + 3) % 23 };
        let none = |_: &Chromosome| false;
        let mut pool: Vec<Chromosome> = (0..6).map(|v| member(v * 3 + 4)).collect();
        let mut rng = EngineRng::seed_from_u64(3);
        let mut best = u32::MAX;
        for g in 1..=60 {
            rchc_step(&mut pool, &ctx(&opt, g, &none), &mut rng);
            let now = pool.iter().map(value).min().unwrap();
            assert!(now <= best);
            best = now;
        }
    }
}
