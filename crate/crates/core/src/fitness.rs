//! Fitness and cost functions.
//!
//! Preference fitness values grow like `(L²+2)^(D+1)`, so the exact forms
//! return [`BigUint`]; the hot loop compares histograms lexicographically
//! instead, which induces the same order.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::model::{Gene, Problem};
use crate::timetabling::{ConflictMatrix, Timetable};

/// Number of satisfied constraints of a full assignment.
///
/// Constraint `c_i` is satisfied when its gene conflicts with no other gene.
pub fn violation_fitness<P: Problem + ?Sized>(x: &[Gene], problem: &P) -> Result<usize> {
    Ok(satisfied_mask(x, problem)?.iter().filter(|&&s| s).count())
}

/// Weighted sum of satisfied constraints; `w` is indexed by constraint.
pub fn weighted_fitness<P: Problem + ?Sized>(x: &[Gene], w: &[f64], problem: &P) -> Result<f64> {
    let m = problem.constraint_count();
    if w.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: w.len(),
        });
    }
    let mask = satisfied_mask(x, problem)?;
    Ok(x
        .iter()
        .zip(&mask)
        .filter(|(_, &s)| s)
        .map(|(g, _)| w[g.constraint.index()])
        .sum())
}

fn satisfied_mask<P: Problem + ?Sized>(x: &[Gene], problem: &P) -> Result<Vec<bool>> {
    let m = problem.constraint_count();
    let mut seen = vec![false; m];
    for g in x {
        let i = g.constraint.index();
        if i >= m {
            return Err(Error::TooLong {
                length: i + 1,
                constraints: m,
            });
        }
        seen[i] = true;
    }
    let assigned = seen.iter().filter(|&&s| s).count();
    if assigned != m || x.len() != m {
        return Err(Error::PartialAssignment {
            assigned,
            expected: m,
        });
    }
    Ok(x
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            x.iter()
                .enumerate()
                .all(|(j, &b)| i == j || !problem.conflicts(a, b))
        })
        .collect())
}

/// Unsatisfied constraint count of a partial solution.
pub fn partial_cost(p: &[Gene], m: usize) -> Result<usize> {
    if p.len() > m {
        return Err(Error::TooLong {
            length: p.len(),
            constraints: m,
        });
    }
    Ok(m - p.len())
}

pub fn partial_fitness(p: &[Gene]) -> usize {
    p.len()
}

/// Satisfied-constraint counts per preference level, highest preference first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PreferenceHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl PreferenceHistogram {
    /// `counts` holds `l_0..=l_D` (so `D = counts.len() - 1`); `total` is L.
    pub fn new(counts: Vec<u64>, total: u64) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidHistogram(format!(
                "need at least two preference levels, got {}",
                counts.len()
            )));
        }
        if total == 0 {
            return Err(Error::InvalidHistogram("L must be positive".into()));
        }
        Ok(PreferenceHistogram { counts, total })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Lowest preference index D.
    pub fn depth(&self) -> usize {
        self.counts.len() - 1
    }

    /// L², the largest admissible entry.
    pub fn bound(&self) -> u64 {
        self.total * self.total
    }

    fn base(&self) -> BigUint {
        BigUint::from(self.bound()) + 2u32
    }

    fn check_bound(&self) -> Result<()> {
        let bound = self.bound();
        match self.counts.iter().position(|&l| l > bound) {
            Some(index) => Err(Error::HistogramExceedsBound {
                index,
                value: self.counts[index],
                bound,
            }),
            None => Ok(()),
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.counts.len() != other.counts.len() || self.total != other.total {
            return Err(Error::InvalidHistogram(format!(
                "dimension mismatch: (L={}, D={}) vs (L={}, D={})",
                self.total,
                self.depth(),
                other.total,
                other.depth()
            )));
        }
        Ok(())
    }
}

pub fn basic_pref_fitness(h: &PreferenceHistogram) -> u64 {
    h.counts.iter().sum()
}

pub fn weighted_pref_fitness(h: &PreferenceHistogram, w: &[f64]) -> Result<f64> {
    if w.len() != h.counts.len() {
        return Err(Error::LengthMismatch {
            expected: h.counts.len(),
            actual: w.len(),
        });
    }
    Ok(h.counts.iter().zip(w).map(|(&l, &w)| l as f64 * w).sum())
}

/// `Σ l_p μ^(D−p)` with `μ = L²+2`: higher preferences dominate.
pub fn pref_fitness_max(h: &PreferenceHistogram) -> BigUint {
    let mu = h.base();
    h.counts
        .iter()
        .fold(BigUint::from(0u32), |acc, &l| acc * &mu + l)
}

/// `Σ (L² − l_p) μ^p`: fewer satisfied constraints at low preferences is better.
pub fn pref_fitness_min(h: &PreferenceHistogram) -> Result<BigUint> {
    h.check_bound()?;
    let mu = h.base();
    let bound = h.bound();
    Ok(h
        .counts
        .iter()
        .rev()
        .fold(BigUint::from(0u32), |acc, &l| acc * &mu + (bound - l)))
}

/// `μ^(D+1) Σ l_p + pref_fitness_min`: more satisfied constraints always wins.
pub fn pref_fitness_combined(h: &PreferenceHistogram) -> Result<BigUint> {
    let min = pref_fitness_min(h)?;
    let lead = h.base().pow(h.counts.len() as u32) * basic_pref_fitness(h);
    Ok(lead + min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

/// Compares two histograms; `Greater` means `a` has the higher fitness under
/// the exact function of the chosen sense.
pub fn pref_compare_lex(
    a: &PreferenceHistogram,
    b: &PreferenceHistogram,
    sense: Sense,
) -> Result<Ordering> {
    a.same_shape(b)?;
    Ok(match sense {
        Sense::Max => a.counts.cmp(&b.counts),
        Sense::Min => compare_min(&a.counts, &b.counts),
    })
}

fn compare_min(a: &[u64], b: &[u64]) -> Ordering {
    b.iter().rev().cmp(a.iter().rev())
}

/// Order of [`pref_fitness_combined`] on raw counts: larger total first, then
/// the min-sense order.
pub fn compare_combined(a: &[u64], b: &[u64]) -> Ordering {
    let (sa, sb): (u64, u64) = (a.iter().sum(), b.iter().sum());
    sa.cmp(&sb).then_with(|| compare_min(a, b))
}

/// Weight of a conflicting pair at slot distance `gap`.
pub fn gap_weight(gap: u32) -> u64 {
    if (1..=5).contains(&gap) {
        1 << (5 - gap)
    } else {
        0
    }
}

/// Proximity cost held as an exact fraction `numerator / students`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ProximityCost {
    pub numerator: u64,
    pub students: u64,
}

impl ProximityCost {
    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.students as f64
    }
}

impl fmt::Display for ProximityCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.value())
    }
}

fn for_each_pair(
    tt: &Timetable,
    cm: &ConflictMatrix,
    mut visit: impl FnMut(usize, usize, u32, u32),
) -> Result<()> {
    for (a, sa) in tt.assigned() {
        for &(b, shared) in cm.neighbors(a) {
            let b = b as usize;
            if b <= a {
                continue;
            }
            if let Some(sb) = tt.slot(b) {
                if sa == sb {
                    return Err(Error::HardViolation(a as u32 + 1, b as u32 + 1));
                }
                visit(a, b, u32::from(sa.abs_diff(sb)), shared);
            }
        }
    }
    Ok(())
}

/// Σ over conflicting assigned pairs of `shared · 2^(5−gap)`.
pub fn proximity_numerator(tt: &Timetable, cm: &ConflictMatrix) -> Result<u64> {
    let mut total = 0u64;
    for_each_pair(tt, cm, |_, _, gap, shared| {
        total += u64::from(shared) * gap_weight(gap)
    })?;
    Ok(total)
}

pub fn proximity_cost(tt: &Timetable, cm: &ConflictMatrix, students: usize) -> Result<ProximityCost> {
    if students == 0 {
        return Err(Error::NoStudents);
    }
    Ok(ProximityCost {
        numerator: proximity_numerator(tt, cm)?,
        students: students as u64,
    })
}

/// Each exam's share of the proximity numerator (a pair counts for both exams).
pub fn exam_penalties(tt: &Timetable, cm: &ConflictMatrix) -> Result<Vec<u64>> {
    let mut penalties = vec![0u64; tt.exam_count()];
    for_each_pair(tt, cm, |a, b, gap, shared| {
        let w = u64::from(shared) * gap_weight(gap);
        penalties[a] += w;
        penalties[b] += w;
    })?;
    Ok(penalties)
}

/// Shared-student totals per gap 1..=5.
pub fn gap_student_counts(tt: &Timetable, cm: &ConflictMatrix) -> Result<[u64; 5]> {
    let mut counts = [0u64; 5];
    for_each_pair(tt, cm, |_, _, gap, shared| {
        if (1..=5).contains(&gap) {
            counts[gap as usize - 1] += u64::from(shared);
        }
    })?;
    Ok(counts)
}

/// Conflicting-pair counts per gap 1..=5 (`l_0..l_4`).
pub fn gap_pair_counts(tt: &Timetable, cm: &ConflictMatrix) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; 5];
    for_each_pair(tt, cm, |_, _, gap, _| {
        if (1..=5).contains(&gap) {
            counts[gap as usize - 1] += 1;
        }
    })?;
    Ok(counts)
}

/// Gap histogram with L = number of conflicting pairs and D = 4.
///
/// A conflict-free instance still reports L = 1 so the histogram stays valid.
pub fn preference_histogram(tt: &Timetable, cm: &ConflictMatrix) -> Result<PreferenceHistogram> {
    let counts = gap_pair_counts(tt, cm)?;
    PreferenceHistogram::new(counts, cm.conflict_pairs().max(1) as u64)
}
