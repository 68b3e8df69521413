use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{build_conflict_matrix, ConflictMatrix, Instance, Timetable};
use crate::config::FitnessMode;
use crate::crossover::{best_guided_exchange, Influence, KempeInfluence};
use crate::engine::ld_order;
use crate::error::Result;
use crate::fitness::{gap_pair_counts, proximity_cost, proximity_numerator, ProximityCost};
use crate::localsearch::{
    boundary_kempe_move, cluster_mutation, kempe_traditional, move_or_swap_slot,
    removal_reinsert, swap_exams, OperatorKind, RepairSet,
};
use crate::model::{ActiveSet, ConstraintId, EngineRng, Gene, Guides, Optimizer, Problem, Score};

/// Exam timetabling as a [`Problem`]: constraint `c` is exam `c`, the gene
/// value is its slot.
#[derive(Clone, Debug)]
pub struct TimetablingProblem {
    instance: Instance,
    cm: ConflictMatrix,
    order: Vec<ConstraintId>,
    mode: FitnessMode,
}

impl TimetablingProblem {
    pub fn new(instance: Instance, mode: FitnessMode) -> Self {
        let cm = build_conflict_matrix(&instance);
        let order = ld_order(&cm);
        TimetablingProblem {
            instance,
            cm,
            order,
            mode,
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn conflict_matrix(&self) -> &ConflictMatrix {
        &self.cm
    }

    pub fn slots(&self) -> u16 {
        self.instance.slots
    }

    pub fn fitness_mode(&self) -> FitnessMode {
        self.mode
    }

    pub fn timetable(&self, genes: &[Gene]) -> Timetable {
        Timetable::from_genes(self.instance.exams as usize, self.instance.slots, genes)
    }

    pub fn cost(&self, genes: &[Gene]) -> Result<ProximityCost> {
        proximity_cost(&self.timetable(genes), &self.cm, self.instance.students())
    }
}

impl Problem for TimetablingProblem {
    fn constraint_count(&self) -> usize {
        self.instance.exams as usize
    }

    fn domain(&self, _c: ConstraintId) -> Vec<u32> {
        (0..u32::from(self.instance.slots)).collect()
    }

    fn conflicts(&self, a: Gene, b: Gene) -> bool {
        a.value == b.value && self.cm.conflicting(a.constraint.index(), b.constraint.index())
    }

    fn random_gene(&self, c: ConstraintId, rng: &mut EngineRng) -> Gene {
        Gene {
            constraint: c,
            value: rng.gen_range(0..u32::from(self.instance.slots)),
        }
    }

    /// Largest-degree rank.
    fn strength(&self, c: ConstraintId) -> u32 {
        self.cm.degree(c.index()) as u32
    }

    fn increment_order(&self) -> Vec<ConstraintId> {
        self.order.clone()
    }

    fn fusion_key_space(&self) -> usize {
        self.instance.exams as usize
    }

    fn fusion_key(&self, gene: Gene) -> usize {
        gene.constraint.index()
    }

    fn adopt(&self, donor: Gene, _receiver: &[Gene], active: &ActiveSet) -> Option<Gene> {
        active.contains(donor.constraint).then_some(donor)
    }

    /// Places one missing active exam: into the first clash-free slot in
    /// random order, or else into the least-clashing slot after ejecting the
    /// exams it clashes with there.
    fn repair(&self, genes: &mut Vec<Gene>, active: &ActiveSet, rng: &mut EngineRng) {
        let tt = self.timetable(genes);
        let missing: Vec<ConstraintId> = active
            .members()
            .iter()
            .copied()
            .filter(|c| tt.slot(c.index()).is_none())
            .collect();
        let Some(&exam) = missing.choose(rng) else {
            return;
        };
        let e = exam.index();
        let mut slots: Vec<u16> = (0..self.instance.slots).collect();
        slots.shuffle(rng);
        if let Some(&s) = slots.iter().find(|&&s| tt.fits(&self.cm, e, s)) {
            genes.push(Gene::new(exam.0, u32::from(s)));
            return;
        }
        let clashes = |s: u16| {
            self.cm
                .neighbors(e)
                .iter()
                .filter(|&&(b, _)| tt.slot(b as usize) == Some(s))
                .count()
        };
        let fewest = slots.iter().map(|&s| clashes(s)).min().expect("T > 0");
        let s = *slots.iter().find(|&&s| clashes(s) == fewest).expect("minimum exists");
        let gene = Gene::new(exam.0, u32::from(s));
        genes.retain(|&g| !self.conflicts(gene, g));
        genes.push(gene);
    }

    fn optimizer(&self) -> Option<&dyn Optimizer> {
        Some(self)
    }
}

impl Optimizer for TimetablingProblem {
    fn score(&self, genes: &[Gene]) -> Score {
        let tt = self.timetable(genes);
        match self.mode {
            FitnessMode::Weighted => Score::Cost(
                proximity_numerator(&tt, &self.cm).expect("scored chromosomes are feasible"),
            ),
            FitnessMode::Generic => Score::Preference(
                gap_pair_counts(&tt, &self.cm).expect("scored chromosomes are feasible"),
            ),
        }
    }

    fn mutate(&self, op: OperatorKind, genes: &[Gene], guides: Guides<'_>, rng: &mut EngineRng) -> Vec<Gene> {
        let tt = self.timetable(genes);
        let cm = &self.cm;
        let out = match op {
            OperatorKind::KempeTraditional => kempe_traditional(&tt, cm, rng),
            OperatorKind::KempeBoundary => boundary_kempe_move(&tt, cm, rng),
            OperatorKind::SwapExams => swap_exams(&tt, cm, rng, &mut RepairSet::new(1)),
            OperatorKind::MoveOrSwapSlot => move_or_swap_slot(&tt, rng),
            OperatorKind::RemovalReinsert => removal_reinsert(&tt, cm, rng),
            OperatorKind::ClusterMutation => cluster_mutation(&tt, cm, rng),
            OperatorKind::CommunityInfluence => {
                let best = self.timetable(guides.best);
                KempeInfluence { cm }
                    .influence(&tt, &best, guides.degree, rng)
                    .expect("influence over shared exams")
            }
            OperatorKind::KempeCrossover => {
                let best = self.timetable(guides.best);
                let peer = self.timetable(guides.peer);
                best_guided_exchange(&KempeInfluence { cm }, &tt, &peer, &best, guides.degree, rng)
                    .expect("influence over shared exams")
                    .0
            }
        };
        out.to_genes()
    }

    /// Copies up to `degree` of the anchor's differing assignments into the
    /// member, ejecting the member's exams that would clash with them.
    fn influence(&self, member: &[Gene], anchor: &[Gene], degree: usize, rng: &mut EngineRng) -> Vec<Gene> {
        let tt = self.timetable(member);
        let differing: Vec<Gene> = anchor
            .iter()
            .copied()
            .filter(|g| tt.slot(g.constraint.index()) != Some(g.value as u16))
            .collect();
        let mut genes = member.to_vec();
        for i in sample(rng, differing.len(), degree.min(differing.len())) {
            let gene = differing[i];
            genes.retain(|&g| g.constraint != gene.constraint && !self.conflicts(gene, g));
            genes.push(gene);
        }
        genes
    }

    fn positional(&self, genes: &[Gene]) -> Vec<Option<u32>> {
        let mut out = vec![None; self.instance.exams as usize];
        for g in genes {
            out[g.constraint.index()] = Some(g.value);
        }
        out
    }
}
