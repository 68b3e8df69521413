//! Problem-agnostic domain model.
//!
//! A chromosome is a variable-length list of constraint assignments that is
//! always a *feasible partial solution*: every pair of genes it carries is
//! compatible under the owning [`Problem`]. Gene order records insertion
//! order; digests and feasibility never depend on it.

use std::cmp::Ordering;
use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fitness;
use crate::localsearch::OperatorKind;

/// Deterministic RNG shared by every stochastic routine in the crate.
pub type EngineRng = rand_chacha::ChaCha8Rng;

/// 1-based index of one constraint (queen column, exam id).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConstraintId(pub u32);

impl ConstraintId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        ConstraintId(index as u32 + 1)
    }
}

/// One satisfied constraint together with its concrete value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Gene {
    pub constraint: ConstraintId,
    pub value: u32,
}

impl Gene {
    pub fn new(constraint: u32, value: u32) -> Self {
        Gene {
            constraint: ConstraintId(constraint),
            value,
        }
    }
}

/// Quality of a chromosome under the active objective.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Score {
    /// Number of satisfied constraints; larger is better.
    Length(usize),
    /// Exact proximity-cost numerator (cost times student count); smaller is better.
    Cost(u64),
    /// Gap histogram ranked by the combined preference order.
    Preference(Vec<u64>),
}

impl Score {
    /// `Greater` means `self` is the better score.
    pub fn cmp_quality(&self, other: &Score) -> Ordering {
        match (self, other) {
            (Score::Length(a), Score::Length(b)) => a.cmp(b),
            (Score::Cost(a), Score::Cost(b)) => b.cmp(a),
            (Score::Preference(a), Score::Preference(b)) => fitness::compare_combined(a, b),
            _ => panic!("comparing scores of different objectives: {self:?} vs {other:?}"),
        }
    }

    pub fn better_than(&self, other: &Score) -> bool {
        self.cmp_quality(other) == Ordering::Greater
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-insensitive 64-bit digest of a gene set.
pub fn digest(genes: &[Gene]) -> u64 {
    let sum = genes.iter().fold(0u64, |acc, g| {
        let key = (u64::from(g.constraint.0) << 32) | u64::from(g.value);
        acc.wrapping_add(mix64(key ^ 0x5851_f42d_4c95_7f2d))
    });
    mix64(sum ^ (genes.len() as u64).wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// A fixed-capacity FIFO that evicts its oldest entry when full.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BoundedQueue<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> BoundedQueue<T> {
    pub fn new(capacity: usize) -> Self {
        BoundedQueue {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    /// Removes the newest entry (stack discipline).
    pub fn pop_newest(&mut self) -> Option<T> {
        self.items.pop_back()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryEntry {
    pub genes: Vec<Gene>,
    pub score: Score,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TabuEntry {
    pub score: Score,
    pub digest: u64,
}

/// Per-individual state for reversible clonal hill-climbing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RchcState {
    /// Prior states, newest last; oldest evicted beyond capacity H.
    pub history: BoundedQueue<HistoryEntry>,
    pub tabu: BoundedQueue<TabuEntry>,
    /// Generations since the last improvement.
    pub stagnation: u32,
}

impl RchcState {
    pub fn new(history_depth: usize, tabu_capacity: usize) -> Self {
        RchcState {
            history: BoundedQueue::new(history_depth),
            tabu: BoundedQueue::new(tabu_capacity),
            stagnation: 0,
        }
    }
}

impl Default for RchcState {
    fn default() -> Self {
        RchcState::new(3, 10)
    }
}

/// A feasible partial solution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chromosome {
    genes: Vec<Gene>,
    fitness: Option<Score>,
    pub rchc: RchcState,
    /// Stable identity used for community membership and retention.
    pub tag: u64,
    /// Generation of the last fitness gain.
    pub improved_at: u64,
}

impl Chromosome {
    pub fn new(genes: Vec<Gene>) -> Self {
        Chromosome {
            genes,
            fitness: None,
            rchc: RchcState::default(),
            tag: 0,
            improved_at: 0,
        }
    }

    pub fn genes(&self) -> &[Gene] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn digest(&self) -> u64 {
        digest(&self.genes)
    }

    pub fn fitness(&self) -> Option<&Score> {
        self.fitness.as_ref()
    }

    pub fn set_fitness(&mut self, score: Score) {
        self.fitness = Some(score);
    }

    /// Replaces the gene set, invalidating the cached fitness.
    pub fn set_genes(&mut self, genes: Vec<Gene>) {
        self.genes = genes;
        self.fitness = None;
    }

    pub fn push(&mut self, gene: Gene) {
        self.genes.push(gene);
        self.fitness = None;
    }

    pub fn value_of(&self, c: ConstraintId) -> Option<u32> {
        self.genes
            .iter()
            .find(|g| g.constraint == c)
            .map(|g| g.value)
    }

    pub fn into_genes(self) -> Vec<Gene> {
        self.genes
    }
}

/// Infeasible members gathered around one feasible anchor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Community {
    /// Tag of the feasible anchor chromosome.
    pub anchor: u64,
    /// Tags of infeasible members.
    pub members: Vec<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct Population {
    pub csp_pool: Vec<Chromosome>,
    pub cop_pool: Vec<Chromosome>,
    pub communities: Vec<Community>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.csp_pool.len() + self.cop_pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The constraints currently in play.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    mask: Vec<bool>,
    members: Vec<ConstraintId>,
}

impl ActiveSet {
    pub fn new(constraint_count: usize) -> Self {
        ActiveSet {
            mask: vec![false; constraint_count],
            members: Vec::new(),
        }
    }

    pub fn full(constraint_count: usize) -> Self {
        let mut set = ActiveSet::new(constraint_count);
        set.extend((0..constraint_count).map(ConstraintId::from_index));
        set
    }

    pub fn extend(&mut self, ids: impl IntoIterator<Item = ConstraintId>) {
        for id in ids {
            if !self.mask[id.index()] {
                self.mask[id.index()] = true;
                self.members.push(id);
            }
        }
    }

    pub fn contains(&self, id: ConstraintId) -> bool {
        self.mask.get(id.index()).copied().unwrap_or(false)
    }

    pub fn members(&self) -> &[ConstraintId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// True when `genes` assigns every active constraint.
    pub fn covered_by(&self, genes: &[Gene]) -> bool {
        let mut seen = vec![false; self.mask.len()];
        let mut count = 0;
        for g in genes {
            let i = g.constraint.index();
            if self.mask[i] && !seen[i] {
                seen[i] = true;
                count += 1;
            }
        }
        count == self.members.len()
    }
}

/// Donor solutions available to guided operators.
#[derive(Clone, Copy, Debug)]
pub struct Guides<'a> {
    pub best: &'a [Gene],
    pub peer: &'a [Gene],
    pub degree: usize,
}

/// The contract every concrete problem implements.
pub trait Problem {
    /// Total number of constraints `m`.
    fn constraint_count(&self) -> usize;

    fn domain(&self, c: ConstraintId) -> Vec<u32>;

    /// Pairwise conflict predicate between two assignments of distinct constraints.
    fn conflicts(&self, a: Gene, b: Gene) -> bool;

    /// Whether `gene` can join `genes` without breaking feasibility.
    fn compatible(&self, gene: Gene, genes: &[Gene]) -> bool {
        genes
            .iter()
            .all(|g| g.constraint != gene.constraint && !self.conflicts(gene, *g))
    }

    /// Preference rank of a constraint; larger is stronger.
    fn strength(&self, c: ConstraintId) -> u32;

    /// Order in which constraints are introduced by increments.
    fn increment_order(&self) -> Vec<ConstraintId>;

    /// Size of the marker vector used to detect duplicate alleles.
    fn fusion_key_space(&self) -> usize;

    /// Position of a gene in the marker vector.
    fn fusion_key(&self, gene: Gene) -> usize;

    /// Maps a donor gene onto the receiver, or `None` when it has no place there.
    fn adopt(&self, donor: Gene, receiver: &[Gene], active: &ActiveSet) -> Option<Gene>;

    fn random_gene(&self, c: ConstraintId, rng: &mut EngineRng) -> Gene {
        let domain = self.domain(c);
        Gene {
            constraint: c,
            value: domain[rng.gen_range(0..domain.len())],
        }
    }

    /// Constraint-guided mutation of an incomplete chromosome. Must keep it feasible.
    fn repair(&self, genes: &mut Vec<Gene>, active: &ActiveSet, rng: &mut EngineRng);

    /// Optimization hooks; `None` for pure satisfaction problems.
    fn optimizer(&self) -> Option<&dyn Optimizer> {
        None
    }

    /// Full pairwise compatibility re-check.
    fn is_feasible(&self, genes: &[Gene]) -> bool {
        genes
            .iter()
            .enumerate()
            .all(|(i, g)| self.compatible(*g, &genes[i + 1..]))
    }
}

/// Operators used to optimize feasible (complete for the active set) chromosomes.
pub trait Optimizer {
    fn score(&self, genes: &[Gene]) -> Score;

    fn mutate(
        &self,
        op: OperatorKind,
        genes: &[Gene],
        guides: Guides<'_>,
        rng: &mut EngineRng,
    ) -> Vec<Gene>;

    /// Pulls an infeasible member toward a feasible anchor by `degree` alleles.
    fn influence(
        &self,
        member: &[Gene],
        anchor: &[Gene],
        degree: usize,
        rng: &mut EngineRng,
    ) -> Vec<Gene>;

    /// Positional vector (one slot per constraint) used by tabu patterns.
    fn positional(&self, genes: &[Gene]) -> Vec<Option<u32>>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use std::collections::HashSet;

    #[test]
    fn empty_digest_is_stable() {
        assert_eq!(digest(&[]), digest(&[]));
        assert_eq!(Chromosome::new(vec![]).digest(), digest(&[]));
    }

    #[test]
    fn digest_ignores_order() {
        let a = [Gene::new(1, 3), Gene::new(2, 6)];
        let b = [Gene::new(2, 6), Gene::new(1, 3)];
        assert_eq!(digest(&a), digest(&b));
        assert_ne!(digest(&a), digest(&[Gene::new(1, 6), Gene::new(2, 3)]));
    }

    #[test]
    fn digest_has_no_collisions_on_random_sets() {
        let mut rng = EngineRng::seed_from_u64(11);
        let mut sets = HashSet::new();
        let mut digests = HashSet::new();
        while sets.len() < 10_000 {
            let len = rng.gen_range(0..12);
            let mut cols: Vec<u32> = (1..=40).collect();
            cols.shuffle(&mut rng);
            let mut genes: Vec<Gene> = cols[..len]
                .iter()
                .map(|&c| Gene::new(c, rng.gen_range(0..20)))
                .collect();
            genes.sort();
            if sets.insert(genes.clone()) {
                digests.insert(digest(&genes));
            }
        }
        assert_eq!(digests.len(), sets.len());
    }

    #[test]
    fn bounded_queue_evicts_oldest() {
        let mut q = BoundedQueue::new(3);
        for i in 0..5 {
            q.push(i);
        }
        assert_eq!(q.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(q.pop_newest(), Some(4));
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn active_set_coverage() {
        let mut active = ActiveSet::new(4);
        active.extend([ConstraintId(2), ConstraintId(4)]);
        assert!(active.covered_by(&[Gene::new(4, 0), Gene::new(2, 1)]));
        assert!(!active.covered_by(&[Gene::new(4, 0), Gene::new(1, 1)]));
    }

    #[test]
    fn score_ordering() {
        assert!(Score::Length(4).better_than(&Score::Length(3)));
        assert!(Score::Cost(10).better_than(&Score::Cost(11)));
    }
}
