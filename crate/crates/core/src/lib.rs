//! Constraint-driven evolutionary search over variable-length feasible
//! partial solutions, with N-Queens and uncapacitated exam-timetabling
//! adapters.

pub mod config;
pub mod crossover;
pub mod engine;
pub mod error;
pub mod fitness;
pub mod localsearch;
pub mod model;
pub mod nqueen;
pub mod timetabling;

pub use config::{EngineConfig, FitnessMode, Mode};
pub use engine::{run, RunResult};
pub use error::{Error, Result};
pub use model::{ActiveSet, Chromosome, ConstraintId, EngineRng, Gene, Optimizer, Problem, Score};
pub use nqueen::NQueens;
pub use timetabling::{Instance, TimetablingProblem};
