//! Toronto (version I) uncapacitated exam timetabling.
//!
//! Exams are 1-based ids in the files and in genes; internally every vector
//! is indexed by `id - 1`.

mod problem;

pub use problem::TimetablingProblem;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ConstraintId, Gene};

/// Exam counts and student counts as documented for the public distribution.
pub const DOCUMENTED_INSTANCES: &[(&str, u32, u32, u16)] = &[
    ("car-s-91", 682, 16925, 35),
    ("car-f-92", 543, 18419, 32),
    ("ear-f-83", 190, 1125, 24),
    ("hec-s-92", 81, 2823, 18),
    ("kfu-s-93", 461, 5349, 20),
    ("lse-f-91", 381, 2726, 18),
    ("pur-s-93", 2419, 30029, 42),
    ("rye-s-93", 486, 11483, 23),
    ("sta-f-83", 139, 611, 13),
    ("tre-s-92", 261, 4360, 23),
    ("uta-s-92", 622, 21266, 35),
    ("ute-s-92", 184, 2749, 10),
    ("yor-f-83", 181, 941, 21),
];

/// Resolves short names such as `Sta83` to the distribution's file stem.
pub fn canonical_name(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    let compact: String = lower.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    for (stem, ..) in DOCUMENTED_INSTANCES {
        let stem_compact: String = stem.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        let short = format!("{}{}", &stem[..3], &stem[stem.len() - 2..]);
        if compact == stem_compact || compact == short {
            return (*stem).to_string();
        }
    }
    lower
}

pub fn documented_counts(name: &str) -> Option<(u32, u32, u16)> {
    let stem = canonical_name(name);
    DOCUMENTED_INSTANCES
        .iter()
        .find(|(s, ..)| *s == stem)
        .map(|&(_, e, s, t)| (e, s, t))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    /// Exam count E; ids are 1..=E.
    pub exams: u32,
    /// Per-student exam ids, deduplicated.
    pub enrollments: Vec<Vec<u32>>,
    /// Timeslot count T.
    pub slots: u16,
    /// Enrollment per exam as listed in the course file (0 when absent).
    pub listed_enrollment: Vec<u32>,
}

impl Instance {
    pub fn students(&self) -> usize {
        self.enrollments.len()
    }

    /// Enrollment per exam recomputed from the student lists.
    pub fn enrollment(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.exams as usize];
        for exams in &self.enrollments {
            for &e in exams {
                counts[e as usize - 1] += 1;
            }
        }
        counts
    }

    /// Exams whose listed enrollment disagrees with the student file.
    pub fn enrollment_mismatches(&self) -> Vec<u32> {
        self.enrollment()
            .iter()
            .zip(&self.listed_enrollment)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i as u32 + 1)
            .collect()
    }

    pub fn from_text(name: &str, crs: &str, stu: &str, slots: u16) -> Result<Self> {
        Self::parse_text(name, Path::new("<crs>"), crs, Path::new("<stu>"), stu, slots)
    }

    fn parse_text(
        name: &str,
        crs_path: &Path,
        crs: &str,
        stu_path: &Path,
        stu: &str,
        slots: u16,
    ) -> Result<Self> {
        if slots == 0 {
            return Err(Error::InvalidConfig("slot count must be positive".into()));
        }
        let parse_err = |path: &Path, line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };

        let mut listed: Vec<(u32, u32)> = Vec::new();
        for (n, line) in crs.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 2 {
                return Err(parse_err(
                    crs_path,
                    n + 1,
                    format!("expected `exam_id enrollment`, got {line:?}"),
                ));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| parse_err(crs_path, n + 1, format!("bad exam id {:?}", fields[0])))?;
            let count: u32 = fields[1]
                .parse()
                .map_err(|_| parse_err(crs_path, n + 1, format!("bad enrollment {:?}", fields[1])))?;
            if id == 0 {
                return Err(parse_err(crs_path, n + 1, "exam id 0 out of range".into()));
            }
            listed.push((id, count));
        }

        let mut enrollments = Vec::new();
        for (n, line) in stu.lines().enumerate() {
            let mut exams = Vec::new();
            for field in line.split_whitespace() {
                let id: u32 = field
                    .parse()
                    .map_err(|_| parse_err(stu_path, n + 1, format!("bad exam id {field:?}")))?;
                if id == 0 {
                    return Err(parse_err(stu_path, n + 1, "exam id 0 out of range".into()));
                }
                exams.push(id);
            }
            if exams.is_empty() {
                continue;
            }
            exams.sort_unstable();
            exams.dedup();
            enrollments.push(exams);
        }
        if enrollments.is_empty() {
            return Err(Error::NoStudents);
        }

        let exams = listed
            .iter()
            .map(|&(id, _)| id)
            .chain(enrollments.iter().flatten().copied())
            .max()
            .unwrap_or(0);
        let mut listed_enrollment = vec![0u32; exams as usize];
        for (id, count) in listed {
            listed_enrollment[id as usize - 1] = count;
        }
        let instance = Instance {
            name: name.to_string(),
            exams,
            enrollments,
            slots,
            listed_enrollment,
        };
        let mismatches = instance.enrollment_mismatches();
        if !mismatches.is_empty() {
            log::warn!(
                "{name}: {} exams have enrollment counts that disagree with the student file (first: {})",
                mismatches.len(),
                mismatches[0]
            );
        }
        if let Some((e, s, _)) = documented_counts(name) {
            if e != instance.exams || s as usize != instance.students() {
                log::warn!(
                    "{name}: parsed {} exams / {} students, documented {e} / {s}",
                    instance.exams,
                    instance.students()
                );
            }
        }
        Ok(instance)
    }

    /// Returns a copy with `students` additionally enrolled in `exam`.
    ///
    /// `exam` may be an existing id or `E + 1` to create a new exam.
    pub fn with_enrollment(&self, exam: u32, students: &[u32]) -> Result<Instance> {
        if exam == 0 || exam > self.exams + 1 {
            return Err(Error::UnknownExam(exam));
        }
        let mut next = self.clone();
        if exam == self.exams + 1 {
            next.exams += 1;
            next.listed_enrollment.push(0);
        }
        for &s in students {
            if s == 0 || s as usize > self.students() {
                return Err(Error::UnknownStudent(s));
            }
            let list = &mut next.enrollments[s as usize - 1];
            if let Err(pos) = list.binary_search(&exam) {
                list.insert(pos, exam);
                next.listed_enrollment[exam as usize - 1] += 1;
            }
        }
        Ok(next)
    }
}

pub fn parse_instance(crs: &Path, stu: &Path, slots: u16) -> Result<Instance> {
    let crs_text = fs::read_to_string(crs).map_err(|e| Error::io(crs, e))?;
    let stu_text = fs::read_to_string(stu).map_err(|e| Error::io(stu, e))?;
    let name = crs
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Instance::parse_text(&name, crs, &crs_text, stu, &stu_text, slots)
}

/// Reads an `instances.txt` metadata file of `name T` lines.
pub fn read_metadata(path: &Path) -> Result<Vec<(String, u16)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(name), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("expected `name T`, got {line:?}"),
            });
        };
        let slots: u16 = t.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: format!("bad slot count {t:?}"),
        })?;
        entries.push((name.to_string(), slots));
    }
    Ok(entries)
}

/// Paths of the course and student files for `name` under `dir`.
pub fn dataset_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    let stem = canonical_name(name);
    (dir.join(format!("{stem}.crs")), dir.join(format!("{stem}.stu")))
}

/// Symmetric exam-by-exam matrix of shared-student counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConflictMatrix {
    n: usize,
    counts: Vec<u32>,
    adjacency: Vec<Vec<(u32, u32)>>,
}

impl ConflictMatrix {
    pub fn from_dense(n: usize, counts: Vec<u32>) -> Self {
        assert_eq!(counts.len(), n * n);
        let adjacency = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && counts[i * n + j] > 0)
                    .map(|j| (j as u32, counts[i * n + j]))
                    .collect()
            })
            .collect();
        ConflictMatrix {
            n,
            counts,
            adjacency,
        }
    }

    pub fn exam_count(&self) -> usize {
        self.n
    }

    /// Shared students of exams at 0-based indices `a` and `b`.
    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.counts[a * self.n + b]
    }

    pub fn conflicting(&self, a: usize, b: usize) -> bool {
        self.get(a, b) > 0
    }

    /// Conflicting exams of `a` with their shared-student counts.
    pub fn neighbors(&self, a: usize) -> &[(u32, u32)] {
        &self.adjacency[a]
    }

    /// Number of distinct conflicting exams.
    pub fn degree(&self, a: usize) -> usize {
        self.adjacency[a].len()
    }

    pub fn conflict_pairs(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

pub fn build_conflict_matrix(inst: &Instance) -> ConflictMatrix {
    let n = inst.exams as usize;
    let mut counts = vec![0u32; n * n];
    for exams in &inst.enrollments {
        for (i, &a) in exams.iter().enumerate() {
            for &b in &exams[i + 1..] {
                let (a, b) = (a as usize - 1, b as usize - 1);
                counts[a * n + b] += 1;
                counts[b * n + a] += 1;
            }
        }
    }
    ConflictMatrix::from_dense(n, counts)
}

/// Exam-to-slot assignment; `None` marks an exam not yet placed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Timetable {
    slots: Vec<Option<u16>>,
    num_slots: u16,
}

impl Timetable {
    pub fn empty(exams: usize, num_slots: u16) -> Self {
        Timetable {
            slots: vec![None; exams],
            num_slots,
        }
    }

    pub fn from_slots(slots: Vec<u16>, num_slots: u16) -> Self {
        debug_assert!(slots.iter().all(|&s| s < num_slots));
        Timetable {
            slots: slots.into_iter().map(Some).collect(),
            num_slots,
        }
    }

    pub fn from_genes(exams: usize, num_slots: u16, genes: &[Gene]) -> Self {
        let mut tt = Timetable::empty(exams, num_slots);
        for g in genes {
            tt.slots[g.constraint.index()] = Some(g.value as u16);
        }
        tt
    }

    /// Assigned exams as genes, in ascending exam order.
    pub fn to_genes(&self) -> Vec<Gene> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                s.map(|s| Gene {
                    constraint: ConstraintId::from_index(i),
                    value: u32::from(s),
                })
            })
            .collect()
    }

    pub fn exam_count(&self) -> usize {
        self.slots.len()
    }

    pub fn num_slots(&self) -> u16 {
        self.num_slots
    }

    /// Slot of the exam at 0-based index `exam`.
    pub fn slot(&self, exam: usize) -> Option<u16> {
        self.slots[exam]
    }

    pub fn assign(&mut self, exam: usize, slot: u16) {
        debug_assert!(slot < self.num_slots);
        self.slots[exam] = Some(slot);
    }

    pub fn unassign(&mut self, exam: usize) {
        self.slots[exam] = None;
    }

    pub fn slots(&self) -> &[Option<u16>] {
        &self.slots
    }

    pub fn is_total(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    pub fn assigned(&self) -> impl Iterator<Item = (usize, u16)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)))
    }

    /// 0-based indices of the exams in `slot`.
    pub fn exams_in(&self, slot: u16) -> Vec<usize> {
        self.assigned()
            .filter(|&(_, s)| s == slot)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when no conflicting pair of assigned exams shares a slot.
    pub fn is_hard_feasible(&self, cm: &ConflictMatrix) -> bool {
        self.first_violation(cm).is_none()
    }

    /// First same-slot conflicting pair, as 0-based indices.
    pub fn first_violation(&self, cm: &ConflictMatrix) -> Option<(usize, usize)> {
        for (a, sa) in self.assigned() {
            for &(b, _) in cm.neighbors(a) {
                let b = b as usize;
                if b > a && self.slots[b] == Some(sa) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    /// Whether `exam` could sit in `slot` given the other assigned exams.
    pub fn fits(&self, cm: &ConflictMatrix, exam: usize, slot: u16) -> bool {
        cm.neighbors(exam)
            .iter()
            .all(|&(b, _)| self.slots[b as usize] != Some(slot))
    }
}

/// Count of conflicting exam pairs that share a slot.
pub fn hard_violations(tt: &Timetable, cm: &ConflictMatrix) -> Result<usize> {
    if let Some(missing) = tt.slots.iter().position(Option::is_none) {
        return Err(Error::IncompleteSolution(missing as u32 + 1));
    }
    let mut count = 0;
    for (a, sa) in tt.assigned() {
        for &(b, _) in cm.neighbors(a) {
            if b as usize > a && tt.slots[b as usize] == Some(sa) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Renders a total timetable as `exam_id slot` lines in ascending exam order.
pub fn format_solution(tt: &Timetable) -> Result<String> {
    let mut out = String::new();
    for (i, s) in tt.slots.iter().enumerate() {
        let s = s.ok_or(Error::IncompleteSolution(i as u32 + 1))?;
        writeln!(out, "{} {}", i + 1, s).expect("write to string");
    }
    Ok(out)
}

pub fn write_solution(tt: &Timetable, path: &Path) -> Result<()> {
    let text = format_solution(tt)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_solution(text: &str, exams: usize, num_slots: u16) -> Result<Timetable> {
    let mut tt = Timetable::empty(exams, num_slots);
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = || Error::Parse {
            path: PathBuf::from("<solution>"),
            line: n + 1,
            message: format!("expected `exam_id slot`, got {line:?}"),
        };
        if fields.len() != 2 {
            return Err(bad());
        }
        let exam: u32 = fields[0].parse().map_err(|_| bad())?;
        let slot: u32 = fields[1].parse().map_err(|_| bad())?;
        if exam == 0 || exam as usize > exams {
            return Err(Error::UnknownExam(exam));
        }
        if slot >= u32::from(num_slots) {
            return Err(Error::SlotOutOfRange {
                slot,
                slots: num_slots,
            });
        }
        let idx = exam as usize - 1;
        if tt.slots[idx].is_some() {
            return Err(Error::DuplicateExam(exam));
        }
        tt.slots[idx] = Some(slot as u16);
    }
    if let Some(missing) = tt.slots.iter().position(Option::is_none) {
        return Err(Error::IncompleteSolution(missing as u32 + 1));
    }
    Ok(tt)
}

pub fn read_solution(path: &Path, exams: usize, num_slots: u16) -> Result<Timetable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_solution(&text, exams, num_slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EngineRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn parses_two_line_fixture() {
        let inst = Instance::from_text("tiny", "0001 2\n", "1\n1 2\n", 3).unwrap();
        assert!(inst.exams >= 2);
        assert_eq!(inst.students(), 2);
        assert_eq!(inst.enrollment()[0], 2);
        assert_eq!(inst.enrollment_mismatches(), vec![2]);
    }

    #[test]
    fn empty_student_file_is_rejected() {
        assert!(matches!(
            Instance::from_text("x", "1 0\n", "", 3),
            Err(Error::NoStudents)
        ));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        match Instance::from_text("x", "1 2\n2 x\n", "1\n", 3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match Instance::from_text("x", "1 2\n", "1\n1 0\n", 3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enrollment_totals_agree() {
        let inst = Instance::from_text("x", "1 2\n2 2\n3 1\n", "1 2\n2 3 1\n", 4).unwrap();
        let per_student: usize = inst.enrollments.iter().map(Vec::len).sum();
        let per_exam: u32 = inst.enrollment().iter().sum();
        assert_eq!(per_student, per_exam as usize);
    }

    #[test]
    fn canonical_names() {
        assert_eq!(canonical_name("Sta83"), "sta-f-83");
        assert_eq!(canonical_name("hec-s-92"), "hec-s-92");
        assert_eq!(canonical_name("yor83"), "yor-f-83");
        assert_eq!(documented_counts("Sta83"), Some((139, 611, 13)));
    }

    #[test]
    fn conflict_matrix_from_one_student() {
        let inst = Instance::from_text("x", "1 1\n2 1\n3 1\n", "1 2 3\n", 3).unwrap();
        let cm = build_conflict_matrix(&inst);
        assert_eq!(cm.get(0, 1), 1);
        assert_eq!(cm.get(0, 2), 1);
        assert_eq!(cm.get(1, 2), 1);
        assert_eq!(cm.get(1, 0), 1);
        assert_eq!(cm.get(0, 0), 0);
        assert_eq!(cm.degree(0), 2);
    }

    #[test]
    fn zero_matrix_without_shared_students() {
        let inst = Instance::from_text("x", "1 1\n2 1\n", "1\n2\n", 3).unwrap();
        let cm = build_conflict_matrix(&inst);
        assert_eq!(cm.conflict_pairs(), 0);
    }

    #[test]
    fn hard_violation_counts() {
        let inst = Instance::from_text("x", "1 1\n2 1\n", "1 2\n", 3).unwrap();
        let cm = build_conflict_matrix(&inst);
        assert_eq!(hard_violations(&Timetable::from_slots(vec![0, 1], 3), &cm).unwrap(), 0);
        assert_eq!(hard_violations(&Timetable::from_slots(vec![2, 2], 3), &cm).unwrap(), 1);
        assert!(hard_violations(&Timetable::empty(2, 3), &cm).is_err());
    }

    fn random_instance(rng: &mut EngineRng, exams: u32, students: usize) -> Instance {
        let stu: String = (0..students)
            .map(|_| {
                let k = rng.gen_range(1..=4);
                (0..k)
                    .map(|_| rng.gen_range(1..=exams).to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
                    + "\n"
            })
            .collect();
        let crs: String = (1..=exams).map(|e| format!("{e} 0\n")).collect();
        Instance::from_text("rand", &crs, &stu, 5).unwrap()
    }

    #[test]
    fn hard_violations_match_pair_loop() {
        let mut rng = EngineRng::seed_from_u64(3);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 10, 12);
            let cm = build_conflict_matrix(&inst);
            let slots: Vec<u16> = (0..inst.exams).map(|_| rng.gen_range(0..5)).collect();
            let tt = Timetable::from_slots(slots.clone(), 5);
            let mut oracle = 0;
            for a in 0..slots.len() {
                for b in a + 1..slots.len() {
                    let shared = inst
                        .enrollments
                        .iter()
                        .any(|s| s.contains(&(a as u32 + 1)) && s.contains(&(b as u32 + 1)));
                    if shared && slots[a] == slots[b] {
                        oracle += 1;
                    }
                }
            }
            assert_eq!(hard_violations(&tt, &cm).unwrap(), oracle);
            assert_eq!(tt.is_hard_feasible(&cm), oracle == 0);
        }
    }

    #[test]
    fn conflict_degree_is_row_nonzero_count() {
        let mut rng = EngineRng::seed_from_u64(5);
        let inst = random_instance(&mut rng, 20, 30);
        let cm = build_conflict_matrix(&inst);
        for a in 0..20 {
            let nonzero = (0..20).filter(|&b| cm.get(a, b) > 0).count();
            assert_eq!(cm.degree(a), nonzero);
            for b in 0..20 {
                assert_eq!(cm.get(a, b), cm.get(b, a));
                assert!(cm.get(a, b) as usize <= inst.students());
            }
        }
    }

    #[test]
    fn solution_errors() {
        assert!(matches!(
            parse_solution("1 0\n2 5\n", 2, 5),
            Err(Error::SlotOutOfRange { .. })
        ));
        assert!(matches!(
            parse_solution("1 0\n", 2, 5),
            Err(Error::IncompleteSolution(2))
        ));
        assert!(matches!(
            parse_solution("1 0\n1 1\n2 0\n", 2, 5),
            Err(Error::DuplicateExam(1))
        ));
    }

    #[test]
    fn solution_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sol.txt");
        let tt = Timetable::from_slots(vec![3, 0, 2, 2], 4);
        write_solution(&tt, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "1 3\n2 0\n3 2\n4 2\n");
        assert_eq!(read_solution(&path, 4, 4).unwrap(), tt);
    }

    #[test]
    fn with_enrollment_adds_exam() {
        let inst = Instance::from_text("x", "1 1\n2 1\n", "1\n2\n", 3).unwrap();
        let next = inst.with_enrollment(3, &[1, 2]).unwrap();
        assert_eq!(next.exams, 3);
        let cm = build_conflict_matrix(&next);
        assert!(cm.conflicting(2, 0) && cm.conflicting(2, 1));
        assert!(matches!(inst.with_enrollment(5, &[1]), Err(Error::UnknownExam(5))));
        assert!(matches!(inst.with_enrollment(3, &[9]), Err(Error::UnknownStudent(9))));
    }

    proptest! {
        #[test]
        fn solution_text_round_trips(slots in proptest::collection::vec(0u16..7, 1..40)) {
            let tt = Timetable::from_slots(slots, 7);
            let text = format_solution(&tt).unwrap();
            prop_assert_eq!(parse_solution(&text, tt.exam_count(), 7).unwrap(), tt);
        }
    }
}
