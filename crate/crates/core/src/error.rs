use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partial assignment: {assigned} of {expected} constraints assigned")]
    PartialAssignment { assigned: usize, expected: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("chromosome length {length} exceeds constraint count {constraints}")]
    TooLong { length: usize, constraints: usize },

    #[error("histogram exceeds bound: l[{index}] = {value} > L^2 = {bound}")]
    HistogramExceedsBound { index: usize, value: u64, bound: u64 },

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("hard violation: exams {0} and {1} share a slot")]
    HardViolation(u32, u32),

    #[error("allele {value} out of range [0, {bound})")]
    AlleleOutOfRange { value: usize, bound: usize },

    #[error("broken invariant: {0}")]
    BrokenInvariant(String),

    #[error("position {position} out of range for length {length}")]
    PositionOutOfRange { position: usize, length: usize },

    #[error("unknown exam {0}")]
    UnknownExam(u32),

    #[error("unknown student {0}")]
    UnknownStudent(u32),

    #[error("exam {exam} is not in slot {slot}")]
    SeedNotInSlot { exam: u32, slot: u16 },

    #[error("duplicate column {0}")]
    DuplicateColumn(u32),

    #[error("oracle scale exceeded: N = {0} > 10")]
    OracleScaleExceeded(usize),

    #[error("selection needs at least 2 survivors, got {0}")]
    TooFewSurvivors(usize),

    #[error("insufficient history: need {needed} entries, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no students")]
    NoStudents,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate exam {0} in solution")]
    DuplicateExam(u32),

    #[error("slot {slot} out of range for {slots} slots")]
    SlotOutOfRange { slot: u32, slots: u16 },

    #[error("incomplete solution: exam {0} is unassigned")]
    IncompleteSolution(u32),

    #[error("no snapshots stored")]
    NoSnapshots,

    #[error("{path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            error: source,
        }
    }
}
