use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ConstraintId, Gene};

/// The feasible pool frozen at the end of one increment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncrementSnapshot {
    /// 1-based increment index.
    pub increment: usize,
    /// 1-based inclusive positions `k..l` of this increment's batch in plan order.
    pub batch: (usize, usize),
    /// Every constraint active at the end of the increment.
    pub constraints: Vec<ConstraintId>,
    pub solutions: Vec<Vec<Gene>>,
}

impl IncrementSnapshot {
    pub fn file_name(&self) -> String {
        format!("increment_{:04}.txt", self.increment)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# increment {} batch {}..{}\n",
            self.increment, self.batch.0, self.batch.1
        );
        for (k, solution) in self.solutions.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let mut genes = solution.clone();
            genes.sort();
            for g in genes {
                let _ = writeln!(out, "{} {}", g.constraint.0, g.value);
            }
        }
        out
    }

    /// Parses a snapshot file; `order` is the plan order the run used, from
    /// which the active constraints `order[..l]` are recovered.
    pub fn from_text(text: &str, order: &[ConstraintId], path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "missing header".into()))?;
        let (increment, batch) = parse_header(header).ok_or_else(|| {
            err(1, format!("expected `# increment i batch k..l`, got {header:?}"))
        })?;
        if batch.0 == 0 || batch.0 > batch.1 || batch.1 > order.len() {
            return Err(err(1, format!("batch {}..{} outside the plan", batch.0, batch.1)));
        }
        let constraints = order[..batch.1].to_vec();
        let mut solutions = Vec::new();
        let mut current: Vec<Gene> = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                if !current.is_empty() {
                    solutions.push(std::mem::take(&mut current));
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let parsed = match (fields.next(), fields.next(), fields.next()) {
                (Some(c), Some(v), None) => c.parse::<u32>().ok().zip(v.parse::<u32>().ok()),
                _ => None,
            };
            let (c, v) = parsed
                .filter(|&(c, _)| c > 0)
                .ok_or_else(|| err(i + 1, format!("expected `id value`, got {line:?}")))?;
            current.push(Gene::new(c, v));
        }
        if !current.is_empty() {
            solutions.push(current);
        }
        Ok(IncrementSnapshot {
            increment,
            batch,
            constraints,
            solutions,
        })
    }
}

fn parse_header(line: &str) -> Option<(usize, (usize, usize))> {
    let rest = line.trim().strip_prefix('#')?.trim();
    let mut words = rest.split_whitespace();
    if words.next()? != "increment" {
        return None;
    }
    let increment = words.next()?.parse().ok()?;
    if words.next()? != "batch" {
        return None;
    }
    let (k, l) = words.next()?.split_once("..")?;
    if words.next().is_some() {
        return None;
    }
    Some((increment, (k.parse().ok()?, l.parse().ok()?)))
}

pub fn write_snapshots(dir: &Path, snapshots: &[IncrementSnapshot]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    snapshots
        .iter()
        .map(|s| {
            let path = dir.join(s.file_name());
            fs::write(&path, s.to_text()).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Every `increment_*.txt` in `dir`, oldest increment first.
pub fn read_snapshots(dir: &Path, order: &[ConstraintId]) -> Result<Vec<IncrementSnapshot>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !(name.starts_with("increment_") && name.ends_with(".txt")) {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.push(IncrementSnapshot::from_text(&text, order, &path)?);
    }
    if out.is_empty() {
        return Err(Error::NoSnapshots);
    }
    out.sort_by_key(|s| s.increment);
    Ok(out)
}
