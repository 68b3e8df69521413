//! Constraint-guided recombination.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::localsearch::kempe_chain_move;
use crate::model::{ActiveSet, Chromosome, EngineRng, Gene, Problem};
use crate::timetabling::{ConflictMatrix, Timetable};

/// Marker vector and the keys held by only one of the two chromosomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonDuplicates {
    /// 1 marks a key of the first chromosome, 10 of the second, 11 of both.
    pub marker: Vec<u8>,
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
}

pub fn mark_nonduplicates(c1: &[usize], c2: &[usize], n: usize) -> Result<NonDuplicates> {
    let mut marker = vec![0u8; n];
    for (keys, inc) in [(c1, 1u8), (c2, 10u8)] {
        for &k in keys {
            let slot = marker.get_mut(k).ok_or(Error::AlleleOutOfRange {
                value: k,
                bound: n,
            })?;
            *slot += inc;
        }
    }
    let positions = |v: u8| -> Vec<usize> {
        marker
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == v)
            .map(|(i, _)| i)
            .collect()
    };
    let (d1, d2) = (positions(1), positions(10));
    Ok(NonDuplicates { marker, d1, d2 })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionReport {
    pub offspring: Chromosome,
    /// Donor alleles appended to the receiver.
    pub appended: usize,
    /// Non-duplicate donor alleles dropped as incompatible.
    pub rejected: usize,
    /// Elementary operations; the shared duplicate-detection cost is charged
    /// to the first report of a pair.
    pub ops: usize,
}

/// Fuses two feasible partial solutions into two offspring, each receiving the
/// other parent's compatible non-duplicate alleles one at a time.
pub fn intermarriage_fuse<P: Problem + ?Sized>(
    pi: &[Gene],
    pj: &[Gene],
    problem: &P,
    active: &ActiveSet,
) -> Result<(FusionReport, FusionReport)> {
    for parent in [pi, pj] {
        if !problem.is_feasible(parent) {
            return Err(Error::BrokenInvariant(
                "fusion parent is not a feasible partial solution".into(),
            ));
        }
    }
    let n = problem.fusion_key_space();
    let mut marker = vec![0u8; n];
    for g in pi {
        marker[problem.fusion_key(*g)] += 1;
    }
    for g in pj {
        marker[problem.fusion_key(*g)] += 10;
    }
    let detection_ops = pi.len() + pj.len() + n;

    let mut first = fuse_into(pi, pj, 10, &marker, problem, active);
    first.ops += detection_ops;
    let second = fuse_into(pj, pi, 1, &marker, problem, active);
    Ok((first, second))
}

fn fuse_into<P: Problem + ?Sized>(
    receiver: &[Gene],
    donor: &[Gene],
    donor_mark: u8,
    marker: &[u8],
    problem: &P,
    active: &ActiveSet,
) -> FusionReport {
    let mut genes = receiver.to_vec();
    let (mut appended, mut rejected, mut ops) = (0, 0, 0);
    for &d in donor {
        if marker[problem.fusion_key(d)] != donor_mark {
            continue;
        }
        let Some(candidate) = problem.adopt(d, &genes, active) else {
            rejected += 1;
            continue;
        };
        let mut ok = true;
        for &g in &genes {
            ops += 1;
            if g.constraint == candidate.constraint || problem.conflicts(candidate, g) {
                ok = false;
                break;
            }
        }
        if ok {
            genes.push(candidate);
            appended += 1;
        } else {
            rejected += 1;
        }
    }
    FusionReport {
        offspring: Chromosome::new(genes),
        appended,
        rejected,
        ops,
    }
}

/// Relocates each `b[q]` inside `a` to position `q` (remove, then insert).
pub fn influence_move(a: &[u32], b: &[u32], positions: &[usize]) -> Result<Vec<u32>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut out = a.to_vec();
    for &q in positions {
        if q >= out.len() {
            return Err(Error::PositionOutOfRange {
                position: q,
                length: out.len(),
            });
        }
        let value = b[q];
        let from = out.iter().position(|&v| v == value).ok_or_else(|| {
            Error::BrokenInvariant(format!("value {value} missing from influenced permutation"))
        })?;
        out.remove(from);
        out.insert(q, value);
    }
    Ok(out)
}

/// An influence operator `a ⊗ b` pulling `a` toward `b`.
pub trait Influence {
    type Solution: Clone;

    fn influence(
        &self,
        a: &Self::Solution,
        b: &Self::Solution,
        degree: usize,
        rng: &mut EngineRng,
    ) -> Result<Self::Solution>;
}

/// Influence on permutations through [`influence_move`] at random positions.
#[derive(Clone, Copy, Debug, Default)]
pub struct PermutationInfluence;

impl Influence for PermutationInfluence {
    type Solution = Vec<u32>;

    fn influence(&self, a: &Vec<u32>, b: &Vec<u32>, degree: usize, rng: &mut EngineRng) -> Result<Vec<u32>> {
        let positions = sample(rng, a.len(), degree.min(a.len())).into_vec();
        influence_move(a, b, &positions)
    }
}

/// Influence on timetables through [`kempe_crossover`] on random exams.
#[derive(Clone, Copy, Debug)]
pub struct KempeInfluence<'a> {
    pub cm: &'a ConflictMatrix,
}

impl Influence for KempeInfluence<'_> {
    type Solution = Timetable;

    fn influence(&self, a: &Timetable, b: &Timetable, degree: usize, rng: &mut EngineRng) -> Result<Timetable> {
        let shared: Vec<usize> = (0..a.exam_count())
            .filter(|&e| a.slot(e).is_some() && b.slot(e).is_some())
            .collect();
        let mut out = a.clone();
        for i in sample(rng, shared.len(), degree.min(shared.len())) {
            out = kempe_crossover(&out, b, shared[i], self.cm)?;
        }
        Ok(out)
    }
}

/// Two-way exchange followed by both offspring moving toward the best.
pub fn best_guided_exchange<I: Influence>(
    op: &I,
    pi: &I::Solution,
    pj: &I::Solution,
    pbest: &I::Solution,
    degree: usize,
    rng: &mut EngineRng,
) -> Result<(I::Solution, I::Solution)> {
    let pi1 = op.influence(pi, pj, degree, rng)?;
    let pj1 = op.influence(pj, pi, degree, rng)?;
    let pi2 = op.influence(&pi1, pbest, degree, rng)?;
    let pj2 = op.influence(&pj1, pbest, degree, rng)?;
    Ok((pi2, pj2))
}

/// Moves exam `e` (0-based) of `a` into the slot it occupies in `b`, carrying
/// its Kempe chain along so `a` stays feasible.
pub fn kempe_crossover(a: &Timetable, b: &Timetable, e: usize, cm: &ConflictMatrix) -> Result<Timetable> {
    let unknown = || Error::UnknownExam(e as u32 + 1);
    if e >= a.exam_count() || e >= b.exam_count() {
        return Err(unknown());
    }
    let target = b.slot(e).ok_or_else(unknown)?;
    let current = a.slot(e).ok_or_else(unknown)?;
    if target == current {
        return Ok(a.clone());
    }
    kempe_chain_move(a, current, target, &[e], cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nqueen::NQueens;
    use crate::timetabling::{build_conflict_matrix, Instance};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn queens(rows: &[u32]) -> Vec<Gene> {
        rows.iter()
            .enumerate()
            .map(|(c, &r)| Gene::new(c as u32 + 1, r))
            .collect()
    }

    fn rows(genes: &[Gene]) -> Vec<u32> {
        genes.iter().map(|g| g.value).collect()
    }

    #[test]
    fn marker_example() {
        let nd = mark_nonduplicates(&[2, 3], &[0, 2], 5).unwrap();
        assert_eq!(nd.marker, vec![10, 0, 11, 1, 0]);
        assert_eq!(nd.d1, vec![3]);
        assert_eq!(nd.d2, vec![0]);
        let same = mark_nonduplicates(&[1, 4], &[4, 1], 5).unwrap();
        assert!(same.d1.is_empty() && same.d2.is_empty());
        let disjoint = mark_nonduplicates(&[0, 1], &[3, 4], 5).unwrap();
        assert_eq!((disjoint.d1, disjoint.d2), (vec![0, 1], vec![3, 4]));
        assert!(mark_nonduplicates(&[5], &[], 5).is_err());
    }

    #[test]
    fn six_queens_fusion() {
        let q = NQueens::new(6);
        let active = ActiveSet::full(6);
        let (o1, o2) = intermarriage_fuse(&queens(&[3, 6]), &queens(&[6, 2, 5]), &q, &active).unwrap();
        assert_eq!(rows(o1.offspring.genes()), vec![3, 6, 2, 5]);
        assert_eq!((o1.appended, o1.rejected), (2, 0));
        assert_eq!(o2.offspring.genes(), queens(&[6, 2, 5]).as_slice());
        assert_eq!((o2.appended, o2.rejected), (0, 1));
    }

    #[test]
    fn fusion_into_empty_receiver() {
        let q = NQueens::new(6);
        let active = ActiveSet::full(6);
        let (o1, _) = intermarriage_fuse(&[], &queens(&[4]), &q, &active).unwrap();
        assert_eq!(o1.offspring.genes(), &[Gene::new(1, 4)]);
    }

    #[test]
    fn fusion_rejects_infeasible_parent() {
        let q = NQueens::new(6);
        let active = ActiveSet::full(6);
        assert!(matches!(
            intermarriage_fuse(&queens(&[1, 2]), &[], &q, &active),
            Err(Error::BrokenInvariant(_))
        ));
    }

    fn random_partial(rng: &mut EngineRng, q: &NQueens) -> Vec<Gene> {
        let n = q.size();
        let mut cols: Vec<u32> = (1..=n).collect();
        cols.shuffle(rng);
        let mut genes = Vec::new();
        for c in cols.into_iter().take(rng.gen_range(0..=n as usize)) {
            let g = Gene::new(c, rng.gen_range(1..=n));
            if q.compatible(g, &genes) {
                genes.push(g);
            }
        }
        genes
    }

    #[test]
    fn fusion_never_shrinks_and_stays_feasible() {
        let q = NQueens::new(10);
        let active = ActiveSet::full(10);
        let mut rng = EngineRng::seed_from_u64(12);
        for _ in 0..2000 {
            let (a, b) = (random_partial(&mut rng, &q), random_partial(&mut rng, &q));
            let (o1, o2) = intermarriage_fuse(&a, &b, &q, &active).unwrap();
            assert!(o1.offspring.len() >= a.len() && o2.offspring.len() >= b.len());
            assert!(q.is_feasible(o1.offspring.genes()) && q.is_feasible(o2.offspring.genes()));
            let keys = |g: &[Gene]| g.iter().map(|g| g.value as usize - 1).collect::<Vec<_>>();
            let nd = mark_nonduplicates(&keys(&a), &keys(&b), 10).unwrap();
            assert_eq!(o1.appended + o1.rejected, nd.d2.len());
            assert_eq!(o2.appended + o2.rejected, nd.d1.len());
        }
    }

    #[test]
    fn influence_example() {
        let a = [4, 2, 5, 1, 3];
        let b = [3, 1, 4, 2, 5];
        assert_eq!(influence_move(&a, &b, &[1]).unwrap(), vec![4, 1, 2, 5, 3]);
        assert_eq!(influence_move(&a, &b, &[]).unwrap(), a.to_vec());
        assert_eq!(influence_move(&a, &a, &[0, 2, 4]).unwrap(), a.to_vec());
        assert!(influence_move(&a, &b, &[5]).is_err());
    }

    #[test]
    fn influence_output_is_a_permutation() {
        let mut rng = EngineRng::seed_from_u64(3);
        for _ in 0..1000 {
            let mut a: Vec<u32> = (1..=8).collect();
            let mut b = a.clone();
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            let out = PermutationInfluence.influence(&a, &b, 3, &mut rng).unwrap();
            let mut sorted = out.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (1..=8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn single_relocation_only_shifts_the_spanned_range() {
        let mut rng = EngineRng::seed_from_u64(9);
        for _ in 0..1000 {
            let mut a: Vec<u32> = (1..=6).collect();
            let mut b = a.clone();
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            let q = rng.gen_range(0..6);
            let from = a.iter().position(|&v| v == b[q]).unwrap();
            let out = influence_move(&a, &b, &[q]).unwrap();
            assert_eq!(out[q], b[q]);
            let (lo, hi) = (from.min(q), from.max(q));
            for i in (0..6).filter(|i| *i < lo || *i > hi) {
                assert_eq!(out[i], a[i]);
            }
        }
    }

    #[test]
    fn exchange_fixed_point() {
        let mut rng = EngineRng::seed_from_u64(1);
        let p: Vec<u32> = vec![2, 4, 6, 1, 3, 5];
        let (x, y) = best_guided_exchange(&PermutationInfluence, &p, &p, &p, 3, &mut rng).unwrap();
        assert_eq!((x, y), (p.clone(), p));
    }

    fn two_exam_instance() -> (Instance, ConflictMatrix) {
        let inst = Instance::from_text("pair", "1 1\n2 1\n", "1 2\n", 2).unwrap();
        let cm = build_conflict_matrix(&inst);
        (inst, cm)
    }

    #[test]
    fn kempe_crossover_on_two_exams() {
        let (_, cm) = two_exam_instance();
        let a = Timetable::from_slots(vec![0, 1], 2);
        let b = Timetable::from_slots(vec![1, 0], 2);
        let out = kempe_crossover(&a, &b, 0, &cm).unwrap();
        assert_eq!(out, b);
        assert_eq!(kempe_crossover(&a, &a, 0, &cm).unwrap(), a);
        assert!(kempe_crossover(&a, &b, 5, &cm).is_err());
    }

    #[test]
    fn kempe_exchange_keeps_timetables_feasible() {
        let mut rng = EngineRng::seed_from_u64(21);
        let stu: String = (0..30)
            .map(|_| {
                let mut e: Vec<u32> = (1..=20).collect();
                e.shuffle(&mut rng);
                let k = rng.gen_range(1..=3);
                e[..k].iter().map(u32::to_string).collect::<Vec<_>>().join(" ") + "\n"
            })
            .collect();
        let crs: String = (1..=20).map(|e| format!("{e} 0\n")).collect();
        let inst = Instance::from_text("r", &crs, &stu, 8).unwrap();
        let cm = build_conflict_matrix(&inst);
        let random_tt = |rng: &mut EngineRng| loop {
            let tt = Timetable::from_slots((0..20).map(|_| rng.gen_range(0..8)).collect(), 8);
            if tt.is_hard_feasible(&cm) {
                break tt;
            }
        };
        let op = KempeInfluence { cm: &cm };
        for _ in 0..1000 {
            let (a, b, c) = (random_tt(&mut rng), random_tt(&mut rng), random_tt(&mut rng));
            let (x, y) = best_guided_exchange(&op, &a, &b, &c, 3, &mut rng).unwrap();
            assert!(x.is_hard_feasible(&cm) && y.is_hard_feasible(&cm));
            assert!(x.is_total() && y.is_total());
            let e = rng.gen_range(0..20);
            let k = kempe_crossover(&a, &b, e, &cm).unwrap();
            assert!(k.is_hard_feasible(&cm));
            assert_eq!(k.slot(e), b.slot(e));
        }
    }
}
