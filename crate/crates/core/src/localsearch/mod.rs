//! Timetable neighbourhood operators and the hill-climbing machinery that
//! sequences them.
//!
//! Every operator works on partial timetables too: unassigned exams are
//! simply ignored. On a hard-feasible input every operator returns a
//! hard-feasible output.

mod rchc;

pub use rchc::{
    clone_count, cmp_optional, community_influence_step, rank_order, rchc_step, OperatorSequencer,
    RchcContext, RchcOutcome,
};

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fitness::exam_penalties;
use crate::model::EngineRng;
use crate::timetabling::{ConflictMatrix, Timetable};

/// The eight optimization operators, in sequencer order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    KempeTraditional,
    KempeBoundary,
    SwapExams,
    MoveOrSwapSlot,
    RemovalReinsert,
    ClusterMutation,
    CommunityInfluence,
    KempeCrossover,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 8] = [
        OperatorKind::KempeTraditional,
        OperatorKind::KempeBoundary,
        OperatorKind::SwapExams,
        OperatorKind::MoveOrSwapSlot,
        OperatorKind::RemovalReinsert,
        OperatorKind::ClusterMutation,
        OperatorKind::CommunityInfluence,
        OperatorKind::KempeCrossover,
    ];

    pub fn index(self) -> usize {
        OperatorKind::ALL.iter().position(|&k| k == self).expect("listed")
    }

    pub fn next(self) -> OperatorKind {
        OperatorKind::ALL[(self.index() + 1) % OperatorKind::ALL.len()]
    }
}

/// Swaps the Kempe chain grown from `seeds` between slots `i` and `j`.
///
/// The chain is the connected component of the conflict graph, restricted to
/// exams in `i ∪ j`, that contains the seeds.
pub fn kempe_chain_move(
    tt: &Timetable,
    i: u16,
    j: u16,
    seeds: &[usize],
    cm: &ConflictMatrix,
) -> Result<Timetable> {
    for &s in seeds {
        if s >= tt.exam_count() {
            return Err(Error::UnknownExam(s as u32 + 1));
        }
        if tt.slot(s) != Some(i) {
            return Err(Error::SeedNotInSlot {
                exam: s as u32 + 1,
                slot: i,
            });
        }
    }
    let mut out = tt.clone();
    if i == j {
        return Ok(out);
    }
    let mut in_chain = vec![false; tt.exam_count()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if !in_chain[s] {
            in_chain[s] = true;
            queue.push_back(s);
        }
    }
    let mut chain = Vec::new();
    while let Some(e) = queue.pop_front() {
        chain.push(e);
        for &(nb, _) in cm.neighbors(e) {
            let nb = nb as usize;
            if !in_chain[nb] && matches!(tt.slot(nb), Some(s) if s == i || s == j) {
                in_chain[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    for e in chain {
        let target = if tt.slot(e) == Some(i) { j } else { i };
        out.assign(e, target);
    }
    Ok(out)
}

fn random_seeds(tt: &Timetable, slot: u16, first: usize, rng: &mut EngineRng) -> Vec<usize> {
    let mut rest: Vec<usize> = tt.exams_in(slot).into_iter().filter(|&e| e != first).collect();
    rest.shuffle(rng);
    let k = rng.gen_range(1..=5usize);
    let mut seeds = vec![first];
    seeds.extend(rest.into_iter().take(k - 1));
    seeds
}

fn random_assigned(tt: &Timetable, rng: &mut EngineRng) -> Option<usize> {
    let assigned: Vec<usize> = tt.assigned().map(|(e, _)| e).collect();
    assigned.choose(rng).copied()
}

/// Kempe move from the slot of a random exam to a random other slot.
pub fn kempe_traditional(tt: &Timetable, cm: &ConflictMatrix, rng: &mut EngineRng) -> Timetable {
    let t = tt.num_slots();
    let Some(first) = random_assigned(tt, rng) else {
        return tt.clone();
    };
    if t < 2 {
        return tt.clone();
    }
    let i = tt.slot(first).expect("assigned");
    let mut j = rng.gen_range(0..t - 1);
    if j >= i {
        j += 1;
    }
    let seeds = random_seeds(tt, i, first, rng);
    kempe_chain_move(tt, i, j, &seeds, cm).expect("seeds drawn from slot i")
}

/// Candidate boundary slots: the two at each end of the timetable.
pub fn boundary_slots(num_slots: u16, exclude: u16) -> Vec<u16> {
    let t = num_slots;
    let mut out: Vec<u16> = [0, 1, t.saturating_sub(2), t.saturating_sub(1)]
        .into_iter()
        .filter(|&s| s < t && s != exclude)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Exams in the top 10% by proximity penalty (at least one), ties by id.
pub fn most_penalized(tt: &Timetable, cm: &ConflictMatrix) -> Vec<usize> {
    let penalties = exam_penalties(tt, cm).expect("operators require hard-feasible input");
    let mut assigned: Vec<usize> = tt.assigned().map(|(e, _)| e).collect();
    assigned.sort_by(|&a, &b| penalties[b].cmp(&penalties[a]).then(a.cmp(&b)));
    let top = assigned.len().div_ceil(10).max(1).min(assigned.len());
    assigned.truncate(top);
    assigned
}

/// Kempe move from the slot of a heavily penalized exam toward an end of the
/// timetable.
pub fn boundary_kempe_move(tt: &Timetable, cm: &ConflictMatrix, rng: &mut EngineRng) -> Timetable {
    if tt.num_slots() < 2 {
        return tt.clone();
    }
    let hot = most_penalized(tt, cm);
    let Some(&first) = hot.choose(rng) else {
        return tt.clone();
    };
    let i = tt.slot(first).expect("assigned");
    let j = *boundary_slots(tt.num_slots(), i)
        .choose(rng)
        .expect("at least two slots");
    let seeds = random_seeds(tt, i, first, rng);
    kempe_chain_move(tt, i, j, &seeds, cm).expect("seeds drawn from slot i")
}

/// Infeasible swaps awaiting Kempe repair.
#[derive(Clone, Debug, Default)]
pub struct RepairSet {
    held: Vec<(Timetable, usize, usize)>,
    capacity: usize,
    pub repaired: usize,
    pub discarded: usize,
}

impl RepairSet {
    pub fn new(capacity: usize) -> Self {
        RepairSet {
            held: Vec::new(),
            capacity,
            repaired: 0,
            discarded: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    /// Holds the pre-swap timetable and the two exams; false when full.
    fn hold(&mut self, original: Timetable, a: usize, b: usize) -> bool {
        if self.held.len() >= self.capacity {
            self.discarded += 1;
            return false;
        }
        self.held.push((original, a, b));
        true
    }

    /// Repairs every held swap, emptying the set.
    ///
    /// Exam `a` is carried into `b`'s slot by its Kempe chain; if `b` did not
    /// travel with it, `b`'s own chain then carries it into `a`'s old slot.
    pub fn repair_all(&mut self, cm: &ConflictMatrix) -> Vec<Timetable> {
        let mut out = Vec::with_capacity(self.held.len());
        for (tt, a, b) in self.held.drain(..) {
            let (sa, sb) = (tt.slot(a).expect("assigned"), tt.slot(b).expect("assigned"));
            let repaired = kempe_chain_move(&tt, sa, sb, &[a], cm).and_then(|t1| {
                if t1.slot(b) == Some(sb) {
                    kempe_chain_move(&t1, sb, sa, &[b], cm)
                } else {
                    Ok(t1)
                }
            });
            match repaired {
                Ok(t) if t.is_hard_feasible(cm) => {
                    self.repaired += 1;
                    out.push(t);
                }
                _ => {
                    self.discarded += 1;
                    out.push(tt);
                }
            }
        }
        out
    }
}

/// Swaps the slots of two random exams; an infeasible swap goes through the
/// repair set and comes back repaired, or the original is returned.
pub fn swap_exams(
    tt: &Timetable,
    cm: &ConflictMatrix,
    rng: &mut EngineRng,
    repair: &mut RepairSet,
) -> Timetable {
    let Some(a) = random_assigned(tt, rng) else {
        return tt.clone();
    };
    let sa = tt.slot(a).expect("assigned");
    let others: Vec<usize> = tt.assigned().filter(|&(_, s)| s != sa).map(|(e, _)| e).collect();
    let Some(&b) = others.choose(rng) else {
        return tt.clone();
    };
    let sb = tt.slot(b).expect("assigned");
    let mut swapped = tt.clone();
    swapped.unassign(a);
    swapped.unassign(b);
    if swapped.fits(cm, a, sb) && swapped.fits(cm, b, sa) {
        swapped.assign(a, sb);
        swapped.assign(b, sa);
        return swapped;
    }
    if !repair.hold(tt.clone(), a, b) {
        return tt.clone();
    }
    repair.repair_all(cm).pop().expect("one held swap")
}

/// Exchanges the contents of slots `i` and `j`.
pub fn swap_slots(tt: &Timetable, i: u16, j: u16) -> Timetable {
    let mut out = tt.clone();
    for (e, s) in tt.assigned() {
        if s == i {
            out.assign(e, j);
        } else if s == j {
            out.assign(e, i);
        }
    }
    out
}

/// Removes slot position `from` and reinserts it at `to`, shifting the rest.
pub fn move_slot(tt: &Timetable, from: u16, to: u16) -> Timetable {
    let mut order: Vec<u16> = (0..tt.num_slots()).collect();
    let s = order.remove(from as usize);
    order.insert(to as usize, s);
    let mut new_index = vec![0u16; order.len()];
    for (pos, &old) in order.iter().enumerate() {
        new_index[old as usize] = pos as u16;
    }
    let mut out = tt.clone();
    for (e, s) in tt.assigned() {
        out.assign(e, new_index[s as usize]);
    }
    out
}

/// Either swaps two random slots or moves one slot to a new position.
pub fn move_or_swap_slot(tt: &Timetable, rng: &mut EngineRng) -> Timetable {
    let t = tt.num_slots();
    if t < 2 {
        return tt.clone();
    }
    let (i, j) = (rng.gen_range(0..t), rng.gen_range(0..t));
    if rng.gen_bool(0.5) {
        swap_slots(tt, i, j)
    } else {
        move_slot(tt, i, j)
    }
}

/// Moves a random exam to a random other slot, keeping the original when
/// that would clash.
pub fn removal_reinsert(tt: &Timetable, cm: &ConflictMatrix, rng: &mut EngineRng) -> Timetable {
    let t = tt.num_slots();
    let Some(e) = random_assigned(tt, rng) else {
        return tt.clone();
    };
    if t < 2 {
        return tt.clone();
    }
    let current = tt.slot(e).expect("assigned");
    let mut target = rng.gen_range(0..t - 1);
    if target >= current {
        target += 1;
    }
    if tt.fits(cm, e, target) {
        let mut out = tt.clone();
        out.assign(e, target);
        out
    } else {
        tt.clone()
    }
}

/// Exams outside `slot` that could join it without a clash.
pub fn slot_cluster(tt: &Timetable, cm: &ConflictMatrix, slot: u16) -> Vec<usize> {
    tt.assigned()
        .filter(|&(e, s)| s != slot && tt.fits(cm, e, slot))
        .map(|(e, _)| e)
        .collect()
}

/// Pulls a random compatible exam into a random slot.
pub fn cluster_mutation(tt: &Timetable, cm: &ConflictMatrix, rng: &mut EngineRng) -> Timetable {
    let slot = rng.gen_range(0..tt.num_slots());
    let cluster = slot_cluster(tt, cm, slot);
    match cluster.choose(rng) {
        Some(&e) => {
            let mut out = tt.clone();
            out.assign(e, slot);
            out
        }
        None => tt.clone(),
    }
}
