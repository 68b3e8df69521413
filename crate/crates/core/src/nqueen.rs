//! N-Queens: constraint `c` is column `c`, the gene value is the queen's row.
//! Rows and columns are both 1-based.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::crossover::intermarriage_fuse;
use crate::error::{Error, Result};
use crate::model::{ActiveSet, ConstraintId, EngineRng, Gene, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NQueens {
    n: u32,
}

impl NQueens {
    pub fn new(n: u32) -> Self {
        assert!(n > 0, "board size must be positive");
        NQueens { n }
    }

    pub fn size(&self) -> u32 {
        self.n
    }

    /// Rows indexed by column, if `genes` places a queen in every column.
    pub fn rows(&self, genes: &[Gene]) -> Option<Vec<u32>> {
        let mut rows = vec![0u32; self.n as usize];
        for g in genes {
            rows[g.constraint.index()] = g.value;
        }
        rows.iter().all(|&r| r > 0).then_some(rows)
    }
}

fn attacks(a: Gene, b: Gene) -> bool {
    a.value == b.value || a.value.abs_diff(b.value) == a.constraint.0.abs_diff(b.constraint.0)
}

/// Whether a queen can join `c` with its row and both diagonals clear.
pub fn queen_compatible(a: Gene, c: &[Gene]) -> Result<bool> {
    if c.iter().any(|g| g.constraint == a.constraint) {
        return Err(Error::DuplicateColumn(a.constraint.0));
    }
    Ok(c.iter().all(|&g| !attacks(a, g)))
}

/// Every full placement as rows indexed by column, in lexicographic order.
pub fn enumerate_solutions(n: usize) -> Result<Vec<Vec<u32>>> {
    if n > 10 {
        return Err(Error::OracleScaleExceeded(n));
    }
    fn place(n: usize, rows: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let col = rows.len();
        if col == n {
            out.push(rows.clone());
            return;
        }
        for r in 1..=n as u32 {
            let clear = rows
                .iter()
                .enumerate()
                .all(|(c, &q)| q != r && q.abs_diff(r) as usize != col - c);
            if clear {
                rows.push(r);
                place(n, rows, out);
                rows.pop();
            }
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        place(n, &mut Vec::with_capacity(n), &mut out);
    }
    Ok(out)
}

/// Elementary operations spent fusing `pi` and `pj` both ways.
pub fn count_fusion_ops(pi: &[Gene], pj: &[Gene], n: u32) -> Result<usize> {
    let problem = NQueens::new(n);
    let active = ActiveSet::full(n as usize);
    let (a, b) = intermarriage_fuse(pi, pj, &problem, &active)?;
    Ok(a.ops + b.ops)
}

impl Problem for NQueens {
    fn constraint_count(&self) -> usize {
        self.n as usize
    }

    fn domain(&self, _c: ConstraintId) -> Vec<u32> {
        (1..=self.n).collect()
    }

    fn conflicts(&self, a: Gene, b: Gene) -> bool {
        attacks(a, b)
    }

    fn random_gene(&self, c: ConstraintId, rng: &mut EngineRng) -> Gene {
        Gene {
            constraint: c,
            value: rng.gen_range(1..=self.n),
        }
    }

    fn strength(&self, _c: ConstraintId) -> u32 {
        1
    }

    fn increment_order(&self) -> Vec<ConstraintId> {
        (1..=self.n).map(ConstraintId).collect()
    }

    fn fusion_key_space(&self) -> usize {
        self.n as usize
    }

    fn fusion_key(&self, gene: Gene) -> usize {
        gene.value as usize - 1
    }

    /// The donor's row moves to the receiver's leftmost free active column.
    fn adopt(&self, donor: Gene, receiver: &[Gene], active: &ActiveSet) -> Option<Gene> {
        let mut used = vec![false; self.n as usize];
        for g in receiver {
            used[g.constraint.index()] = true;
        }
        (0..self.n as usize)
            .map(ConstraintId::from_index)
            .find(|&c| active.contains(c) && !used[c.index()])
            .map(|constraint| Gene {
                constraint,
                value: donor.value,
            })
    }

    /// Linear-time check: columns, rows and both diagonals all distinct.
    fn is_feasible(&self, genes: &[Gene]) -> bool {
        let (mut cols, mut rows, mut up, mut down) =
            (HashSet::new(), HashSet::new(), HashSet::new(), HashSet::new());
        genes.iter().all(|g| {
            let (c, r) = (i64::from(g.constraint.0), i64::from(g.value));
            cols.insert(c) && rows.insert(r) && up.insert(r - c) && down.insert(r + c)
        })
    }

    /// Places a queen in a random free column on a least-attacked row and
    /// removes the queens that attack it.
    fn repair(&self, genes: &mut Vec<Gene>, active: &ActiveSet, rng: &mut EngineRng) {
        let mut used = vec![false; self.n as usize];
        for g in genes.iter() {
            used[g.constraint.index()] = true;
        }
        let free: Vec<ConstraintId> = active
            .members()
            .iter()
            .copied()
            .filter(|c| !used[c.index()])
            .collect();
        let Some(&column) = free.choose(rng) else {
            return;
        };
        let mut best_rows = Vec::new();
        let mut best = usize::MAX;
        for row in 1..=self.n {
            let candidate = Gene::new(column.0, row);
            let hits = genes.iter().filter(|&&g| attacks(candidate, g)).count();
            if hits < best {
                best = hits;
                best_rows.clear();
            }
            if hits == best {
                best_rows.push(row);
            }
        }
        let gene = Gene::new(column.0, *best_rows.choose(rng).expect("n > 0"));
        genes.retain(|&g| !attacks(gene, g));
        genes.push(gene);
    }
}
