use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::{
    is_tabu, positional, random_partial, retain_protected, select_survivors, tabu_intersect,
    BestHistory, IncrementPlan, IncrementSnapshot, TabuPattern,
};
use crate::config::{EngineConfig, Mode};
use crate::crossover::intermarriage_fuse;
use crate::error::Result;
use crate::localsearch::{
    community_influence_step, rank_order, rchc_step, OperatorKind, OperatorSequencer, RchcContext,
};
use crate::model::{
    digest, ActiveSet, Chromosome, Community, ConstraintId, EngineRng, Gene, Guides, Population,
    Problem, RchcState, Score,
};

/// A change of the overall best solution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TracePoint {
    pub generation: u64,
    pub increment: usize,
    /// Constraints satisfied by the best solution.
    pub satisfied: usize,
    pub score: Option<Score>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IncrementStats {
    pub increment: usize,
    pub batch_size: usize,
    /// Constraints active once the batch is added.
    pub active: usize,
    pub start_generation: u64,
    /// First generation with a solution covering every active constraint.
    pub feasible_generation: Option<u64>,
    pub end_generation: u64,
    pub best_length: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    /// Best solution; the longest partial one when the run fails.
    pub best: Vec<Gene>,
    pub success: bool,
    pub score: Option<Score>,
    pub generations: u64,
    pub trace: Vec<TracePoint>,
    pub increments: Vec<IncrementStats>,
    #[serde(skip)]
    pub snapshots: Vec<IncrementSnapshot>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Solves `problem` increment by increment in its own constraint order.
pub fn run(problem: &dyn Problem, config: &EngineConfig) -> Result<RunResult> {
    let plan = IncrementPlan::new(&problem.increment_order(), config.increment_fraction)?;
    Engine::new(problem, config.clone())?.run_plan(&plan, Vec::new())
}

/// Outcome of a bounded constraint-satisfaction search.
pub(crate) struct Probe {
    pub complete: Vec<Vec<Gene>>,
    pub longest: Vec<Gene>,
}

pub struct Engine<'a> {
    problem: &'a dyn Problem,
    cfg: EngineConfig,
    rng: EngineRng,
    active: ActiveSet,
    pop: Population,
    csp_target: usize,
    next_tag: u64,
    generation: u64,
    started: Instant,
    sequencer: OperatorSequencer,
    history: BestHistory,
    pattern: Option<TabuPattern>,
    stall: u64,
    increment: usize,
    increment_best: Option<(usize, Option<Score>)>,
    best: Option<(Vec<Gene>, Option<Score>)>,
    trace: Vec<TracePoint>,
}

impl<'a> Engine<'a> {
    pub fn new(problem: &'a dyn Problem, cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Engine {
            problem,
            rng: EngineRng::seed_from_u64(cfg.seed),
            active: ActiveSet::new(problem.constraint_count()),
            pop: Population::default(),
            csp_target: cfg.population_size - cfg.cop_capacity(),
            next_tag: 0,
            generation: 0,
            started: Instant::now(),
            sequencer: OperatorSequencer::new(cfg.stagnant_generations),
            history: BestHistory::new(cfg.tabu_history),
            pattern: None,
            stall: 0,
            increment: 0,
            increment_best: None,
            best: None,
            trace: Vec::new(),
            cfg,
        })
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    fn reset(&mut self) {
        self.active = ActiveSet::new(self.problem.constraint_count());
        self.pop = Population::default();
        self.generation = 0;
        self.started = Instant::now();
        self.increment = 0;
        self.best = None;
        self.trace.clear();
        self.reset_increment();
    }

    fn reset_increment(&mut self) {
        self.sequencer = OperatorSequencer::new(self.cfg.stagnant_generations);
        self.history.clear();
        self.pattern = None;
        self.stall = 0;
        self.increment_best = None;
        self.pop.communities.clear();
    }

    /// Runs every batch of `plan`; `seeds` join the first increment's pool.
    pub fn run_plan(&mut self, plan: &IncrementPlan, seeds: Vec<Vec<Gene>>) -> Result<RunResult> {
        self.reset();
        let order = plan.order();
        let has_optimizer = self.problem.optimizer().is_some();
        let mut seeds = Some(seeds);
        let mut stats = Vec::new();
        let mut snapshots = Vec::new();
        let mut position = 0;
        let mut completed = 0;
        for (k, batch) in plan.batches().iter().enumerate() {
            let is_final = k + 1 == plan.len();
            self.increment = k + 1;
            self.begin_increment(batch, seeds.take().unwrap_or_default());
            let start = self.generation;
            let mut feasible_at = (!self.pop.cop_pool.is_empty()).then_some(start);
            let mut exhausted = false;
            loop {
                if let Some(f) = feasible_at {
                    let optimizing = has_optimizer && (is_final || self.cfg.mode == Mode::Iichea);
                    if !optimizing
                        || (!is_final
                            && self.generation - f >= self.cfg.optimize_generations_per_increment)
                    {
                        break;
                    }
                }
                if self.exhausted() {
                    exhausted = true;
                    break;
                }
                self.step(batch, is_final)?;
                if feasible_at.is_none() && !self.pop.cop_pool.is_empty() {
                    feasible_at = Some(self.generation);
                }
            }
            stats.push(IncrementStats {
                increment: k + 1,
                batch_size: batch.len(),
                active: self.active.len(),
                start_generation: start,
                feasible_generation: feasible_at,
                end_generation: self.generation,
                best_length: self.increment_best.as_ref().map_or(0, |b| b.0),
            });
            if feasible_at.is_some() {
                completed += 1;
                snapshots.push(IncrementSnapshot {
                    increment: k + 1,
                    batch: (position + 1, position + batch.len()),
                    constraints: order[..position + batch.len()].to_vec(),
                    solutions: self.ranked_cop(),
                });
            }
            position += batch.len();
            if exhausted {
                break;
            }
        }
        let (best, score) = self.best.clone().unwrap_or_default();
        let mut all = ActiveSet::new(self.problem.constraint_count());
        all.extend(order.iter().copied());
        let success = completed == plan.len() && all.covered_by(&best);
        Ok(RunResult {
            best,
            success,
            score,
            generations: self.generation,
            trace: self.trace.clone(),
            increments: stats,
            snapshots,
            wall_time: self.started.elapsed(),
        })
    }

    /// Searches only for solutions covering `constraints`, starting from
    /// `seeds` plus fresh chromosomes over `fresh`.
    pub(crate) fn probe(
        &mut self,
        constraints: &[ConstraintId],
        seeds: Vec<Vec<Gene>>,
        fresh: &[ConstraintId],
        generations: u64,
    ) -> Result<Probe> {
        self.reset();
        self.active.extend(constraints.iter().copied());
        for genes in seeds.into_iter().take(self.csp_target) {
            let c = self.tagged(genes);
            self.pop.csp_pool.push(c);
        }
        self.fill_csp(fresh);
        self.migrate(fresh);
        for _ in 0..generations {
            if !self.pop.cop_pool.is_empty() {
                break;
            }
            self.generation += 1;
            self.csp_phase()?;
            self.migrate(fresh);
        }
        let longest = self
            .pop
            .cop_pool
            .iter()
            .chain(&self.pop.csp_pool)
            .fold(None::<&Chromosome>, |acc, c| match acc {
                Some(a) if a.len() >= c.len() => Some(a),
                _ => Some(c),
            })
            .map(|c| c.genes().to_vec())
            .unwrap_or_default();
        Ok(Probe {
            complete: self.pop.cop_pool.iter().map(|c| c.genes().to_vec()).collect(),
            longest,
        })
    }

    fn exhausted(&self) -> bool {
        self.cfg.max_generations.is_some_and(|g| self.generation >= g)
            || self
                .cfg
                .budget_secs
                .is_some_and(|s| self.started.elapsed().as_secs_f64() >= s)
    }

    fn tagged(&mut self, genes: Vec<Gene>) -> Chromosome {
        self.next_tag += 1;
        let mut c = Chromosome::new(genes);
        c.tag = self.next_tag;
        c
    }

    fn fresh(&mut self, batch: &[ConstraintId]) -> Chromosome {
        let genes = random_partial(batch, &mut self.rng, self.problem);
        self.tagged(genes)
    }

    fn fill_csp(&mut self, batch: &[ConstraintId]) {
        while self.pop.csp_pool.len() < self.csp_target {
            let c = self.fresh(batch);
            self.pop.csp_pool.push(c);
        }
    }

    /// Adds `batch` to the active set. The previous increment's feasible pool
    /// and longest partials carry over into half of the CSP pool; fresh
    /// chromosomes over the batch fill the rest.
    fn begin_increment(&mut self, batch: &[ConstraintId], seeds: Vec<Vec<Gene>>) {
        self.active.extend(batch.iter().copied());
        self.reset_increment();
        let mut carried = self.ranked_cop();
        let mut partials = std::mem::take(&mut self.pop.csp_pool);
        partials.sort_by_key(|c| std::cmp::Reverse(c.len()));
        carried.extend(partials.into_iter().map(Chromosome::into_genes));
        carried.truncate(self.csp_target / 2);
        self.pop.cop_pool.clear();
        let mut pool = Vec::new();
        for genes in seeds.into_iter().chain(carried).take(self.csp_target) {
            pool.push(self.tagged(genes));
        }
        self.pop.csp_pool = pool;
        self.fill_csp(batch);
        self.migrate(batch);
        self.update_best();
    }

    fn ranked_cop(&mut self) -> Vec<Vec<Gene>> {
        let order: Vec<usize> = match self.problem.optimizer() {
            Some(opt) => rank_order(&mut self.pop.cop_pool, opt),
            None => (0..self.pop.cop_pool.len()).collect(),
        };
        order
            .into_iter()
            .map(|i| self.pop.cop_pool[i].genes().to_vec())
            .collect()
    }

    fn step(&mut self, batch: &[ConstraintId], is_final: bool) -> Result<()> {
        self.generation += 1;
        self.csp_phase()?;
        self.migrate(batch);
        let optimizing = self.problem.optimizer().is_some()
            && !self.pop.cop_pool.is_empty()
            && (is_final || self.cfg.mode == Mode::Iichea);
        if optimizing {
            self.cop_phase(batch);
        }
        let improved = self.update_best();
        if optimizing {
            self.sequencer.next_operator(improved);
        }
        self.update_tabu(improved);
        Ok(())
    }

    fn matches_pattern(&self, c: &Chromosome) -> bool {
        self.pattern.as_ref().is_some_and(|p| {
            is_tabu(&positional(c.genes(), self.problem.constraint_count()), p).unwrap_or(false)
        })
    }

    fn recently_improved(&self, c: &Chromosome) -> bool {
        c.improved_at > 0
            && self.generation - c.improved_at < u64::from(self.cfg.backtrack_stagnation)
    }

    /// Fusion of random parent pairs, repair of each offspring, then
    /// length-ranked survivor selection over parents and accepted offspring.
    fn csp_phase(&mut self) -> Result<()> {
        let pool = std::mem::take(&mut self.pop.csp_pool);
        if pool.len() < 2 {
            self.pop.csp_pool = pool;
            return Ok(());
        }
        let mut eligible: Vec<usize> = (0..pool.len())
            .filter(|&i| !self.matches_pattern(&pool[i]))
            .collect();
        if eligible.len() < 2 {
            eligible = (0..pool.len()).collect();
        }
        eligible.shuffle(&mut self.rng);
        let d = (self.csp_target / 2).max(2).min(eligible.len()) & !1;
        let mut offspring = Vec::new();
        for pair in eligible[..d].chunks_exact(2) {
            let (a, b) = (&pool[pair[0]], &pool[pair[1]]);
            let (ra, rb) = intermarriage_fuse(a.genes(), b.genes(), self.problem, &self.active)?;
            for (report, parent) in [(ra, a), (rb, b)] {
                let mut genes = report.offspring.into_genes();
                self.problem.repair(&mut genes, &self.active, &mut self.rng);
                let longer = genes.len() > parent.len();
                if longer || (genes.len() == parent.len() && digest(&genes) != parent.digest()) {
                    offspring.push(self.tagged(genes));
                }
            }
        }
        let mut merged = pool;
        merged.extend(offspring);
        // Among equal lengths the newest chromosome ranks first, so sideways
        // moves out of a dead-end partial survive selection.
        merged.sort_by_key(|c| std::cmp::Reverse((c.len(), c.tag)));
        let n = self.csp_target;
        if merged.len() > n {
            let picked = select_survivors(merged.len(), n, self.cfg.selection_rho)?;
            let protected: Vec<bool> = merged.iter().map(|c| self.recently_improved(c)).collect();
            let keep = retain_protected(&picked, &protected, n);
            let mut slots: Vec<Option<Chromosome>> = merged.into_iter().map(Some).collect();
            merged = keep
                .into_iter()
                .map(|i| slots[i].take().expect("indices are distinct"))
                .collect();
        }
        self.pop.csp_pool = merged;
        Ok(())
    }

    /// Moves every CSP member covering the active set into the COP pool and
    /// replaces it with a fresh chromosome over `batch`.
    fn migrate(&mut self, batch: &[ConstraintId]) {
        let (complete, rest): (Vec<Chromosome>, Vec<Chromosome>) =
            std::mem::take(&mut self.pop.csp_pool)
                .into_iter()
                .partition(|c| self.active.covered_by(c.genes()));
        self.pop.csp_pool = rest;
        for c in complete {
            self.admit(c);
            let f = self.fresh(batch);
            self.pop.csp_pool.push(f);
        }
    }

    /// Adds a complete chromosome to the COP pool unless it is a duplicate;
    /// a full pool only accepts it in place of a worse member.
    fn admit(&mut self, mut c: Chromosome) -> bool {
        let d = c.digest();
        if self.pop.cop_pool.iter().any(|m| m.digest() == d) {
            return false;
        }
        c.rchc = RchcState::new(self.cfg.history_depth, self.cfg.tabu_capacity);
        c.improved_at = 0;
        let opt = self.problem.optimizer();
        if let Some(opt) = opt {
            c.set_fitness(opt.score(c.genes()));
        }
        if self.pop.cop_pool.len() < self.cfg.cop_capacity() {
            self.pop.cop_pool.push(c);
            return true;
        }
        if opt.is_none() {
            return false;
        }
        let worst = (0..self.pop.cop_pool.len())
            .min_by(|&a, &b| {
                crate::localsearch::cmp_optional(
                    self.pop.cop_pool[a].fitness(),
                    self.pop.cop_pool[b].fitness(),
                )
            })
            .expect("pool is full");
        let better = match (c.fitness(), self.pop.cop_pool[worst].fitness()) {
            (Some(new), Some(old)) => new.better_than(old),
            _ => false,
        };
        if better {
            self.pop.cop_pool[worst] = c;
        }
        better
    }

    fn cop_phase(&mut self, batch: &[ConstraintId]) {
        let opt = self.problem.optimizer().expect("optimizing");
        let op = self.sequencer.current();
        let pattern = self.pattern.clone();
        let m = self.problem.constraint_count();
        let excluded = move |c: &Chromosome| {
            pattern
                .as_ref()
                .is_some_and(|p| is_tabu(&positional(c.genes(), m), p).unwrap_or(false))
        };
        let ctx = RchcContext {
            optimizer: opt,
            op,
            degree: self.cfg.degree_of_influence,
            pop_size: self.cfg.population_size,
            clone_constant: self.cfg.clone_constant,
            backtrack_stagnation: self.cfg.backtrack_stagnation,
            strict_tabu: self.cfg.strict_tabu,
            generation: self.generation,
            excluded: &excluded,
        };
        let outcome = rchc_step(&mut self.pop.cop_pool, &ctx, &mut self.rng);
        for _ in 0..outcome.removed {
            self.refill_cop(op);
        }
        if op == OperatorKind::CommunityInfluence {
            self.ensure_communities();
            let before: Vec<(u64, usize)> = self.pop.csp_pool.iter().map(|c| (c.tag, c.len())).collect();
            community_influence_step(
                &mut self.pop,
                opt,
                &self.active,
                self.cfg.degree_of_influence,
                &mut self.rng,
            );
            for (c, (tag, len)) in self.pop.csp_pool.iter_mut().zip(before) {
                if c.tag == tag && c.len() > len {
                    c.improved_at = self.generation;
                }
            }
            self.migrate(batch);
        }
    }

    /// Replaces a member dropped by backtracking with a mutated copy of a
    /// surviving member.
    fn refill_cop(&mut self, op: OperatorKind) {
        let opt = self.problem.optimizer().expect("optimizing");
        let len = self.pop.cop_pool.len();
        if len == 0 {
            return;
        }
        let best = rank_order(&mut self.pop.cop_pool, opt)[0];
        let (src, peer) = (self.rng.gen_range(0..len), self.rng.gen_range(0..len));
        let guides = Guides {
            best: self.pop.cop_pool[best].genes(),
            peer: self.pop.cop_pool[peer].genes(),
            degree: self.cfg.degree_of_influence,
        };
        let genes = opt.mutate(op, self.pop.cop_pool[src].genes(), guides, &mut self.rng);
        let c = self.tagged(genes);
        self.admit(c);
    }

    /// Keeps communities while their anchor and members still exist;
    /// otherwise regroups random CSP members around the best COP members.
    fn ensure_communities(&mut self) {
        let intact = !self.pop.communities.is_empty()
            && self.pop.communities.iter().all(|com| {
                self.pop.cop_pool.iter().any(|c| c.tag == com.anchor)
                    && com
                        .members
                        .iter()
                        .all(|t| self.pop.csp_pool.iter().any(|c| c.tag == *t))
            });
        if intact {
            return;
        }
        let opt = self.problem.optimizer().expect("optimizing");
        let ranked = rank_order(&mut self.pop.cop_pool, opt);
        let anchors: Vec<u64> = ranked
            .iter()
            .take(self.cfg.total_communities)
            .map(|&i| self.pop.cop_pool[i].tag)
            .collect();
        let want = (anchors.len() * self.cfg.community_size).min(self.pop.csp_pool.len());
        let picks = rand::seq::index::sample(&mut self.rng, self.pop.csp_pool.len(), want).into_vec();
        let members: Vec<u64> = picks.iter().map(|&i| self.pop.csp_pool[i].tag).collect();
        self.pop.communities = anchors
            .into_iter()
            .zip(members.chunks(self.cfg.community_size))
            .map(|(anchor, m)| Community {
                anchor,
                members: m.to_vec(),
            })
            .collect();
    }

    /// Updates the increment and overall bests; true when the increment
    /// best improved.
    fn update_best(&mut self) -> bool {
        let candidate: Option<(Vec<Gene>, Option<Score>)> = if self.pop.cop_pool.is_empty() {
            self.pop
                .csp_pool
                .iter()
                .fold(None::<&Chromosome>, |acc, c| match acc {
                    Some(a) if a.len() >= c.len() => Some(a),
                    _ => Some(c),
                })
                .map(|c| (c.genes().to_vec(), None))
        } else {
            let i = match self.problem.optimizer() {
                Some(opt) => rank_order(&mut self.pop.cop_pool, opt)[0],
                None => 0,
            };
            let c = &self.pop.cop_pool[i];
            Some((c.genes().to_vec(), c.fitness().cloned()))
        };
        let Some((genes, score)) = candidate else {
            return false;
        };
        let beats = |len: usize, s: &Option<Score>, other: &(usize, Option<Score>)| {
            len > other.0
                || (len == other.0
                    && matches!((s, &other.1), (Some(a), Some(b)) if a.better_than(b)))
        };
        let improved = match &self.increment_best {
            None => true,
            Some(prev) => beats(genes.len(), &score, prev),
        };
        if !improved {
            return false;
        }
        self.increment_best = Some((genes.len(), score.clone()));
        self.history
            .push(positional(&genes, self.problem.constraint_count()));
        let global = match &self.best {
            None => true,
            Some((g, s)) => beats(genes.len(), &score, &(g.len(), s.clone())),
        };
        if global {
            self.trace.push(TracePoint {
                generation: self.generation,
                increment: self.increment,
                satisfied: genes.len(),
                score: score.clone(),
            });
            self.best = Some((genes, score));
        }
        true
    }

    /// Engages tabu regions of growing depth while the increment best stalls.
    fn update_tabu(&mut self, improved: bool) {
        if improved {
            self.stall = 0;
            self.pattern = None;
            return;
        }
        self.stall += 1;
        let threshold = self.cfg.tabu_stall_generations().max(1);
        if self.stall >= threshold && self.history.len() >= 2 {
            let depth = (1 + ((self.stall - threshold) / threshold) as usize).min(self.history.len() - 1);
            self.pattern = tabu_intersect(&self.history, depth).ok();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FitnessMode;
    use crate::nqueen::{enumerate_solutions, NQueens};
    use crate::timetabling::{Instance, TimetablingProblem};

    fn quick(mode: Mode, seed: u64) -> EngineConfig {
        let mut cfg = EngineConfig::for_mode(mode);
        cfg.seed = seed;
        cfg.population_size = 40;
        cfg.max_generations = Some(400);
        cfg
    }

    #[test]
    fn eight_queens_solutions_are_in_the_oracle_set() {
        let oracle = enumerate_solutions(8).unwrap();
        let q = NQueens::new(8);
        for seed in 0..5 {
            let r = run(&q, &quick(Mode::Ichea, seed)).unwrap();
            assert!(r.success, "seed {seed}: {:?}", r.increments);
            assert!(oracle.contains(&q.rows(&r.best).unwrap()));
        }
    }

    #[test]
    fn conflict_free_instance_reaches_zero_cost() {
        let crs: String = (1..=10).map(|e| format!("{e} 1\n")).collect();
        let stu: String = (1..=10).map(|e| format!("{e}\n")).collect();
        let p = TimetablingProblem::new(
            Instance::from_text("free", &crs, &stu, 10).unwrap(),
            FitnessMode::Weighted,
        );
        let mut cfg = quick(Mode::Iichea, 1);
        cfg.increment_fraction = 0.1;
        cfg.max_generations = Some(2_000);
        let r = run(&p, &cfg).unwrap();
        assert!(r.success);
        assert_eq!(r.increments.len(), 10);
        assert_eq!(r.score, Some(Score::Cost(0)));
        assert_eq!(r.snapshots.len(), 10);
    }

    #[test]
    fn satisfied_count_never_drops() {
        let q = NQueens::new(20);
        let r = run(&q, &quick(Mode::Ichea, 3)).unwrap();
        assert!(r.trace.windows(2).all(|w| w[0].satisfied <= w[1].satisfied));
        for s in &r.snapshots {
            assert!(s.solutions.iter().all(|g| q.is_feasible(g) && g.len() == s.constraints.len()));
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let q = NQueens::new(12);
        let a = run(&q, &quick(Mode::Ichea, 9)).unwrap();
        let b = run(&q, &quick(Mode::Ichea, 9)).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.increments, b.increments);
        assert_eq!(a.snapshots, b.snapshots);
    }

    #[test]
    fn unsolvable_board_reports_longest_partial() {
        let q = NQueens::new(3);
        let mut cfg = quick(Mode::Ichea, 0);
        cfg.max_generations = Some(50);
        let r = run(&q, &cfg).unwrap();
        assert!(!r.success);
        assert_eq!(r.best.len(), 2);
        assert!(q.is_feasible(&r.best));
    }
}
