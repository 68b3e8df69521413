//! Engine configuration. Defaults follow the published parameter table.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Incremental feasibility only; no optimization between increments.
    Ichea,
    /// Optimizes each increment's feasible partial solutions for G generations.
    Iichea,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ichea => "ichea",
            Mode::Iichea => "iichea",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ichea" => Ok(Mode::Ichea),
            "iichea" => Ok(Mode::Iichea),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitnessMode {
    /// Problem-dependent weighted penalty (Carter proximity cost).
    Weighted,
    /// Generic preference-ordered fitness over the gap histogram.
    Generic,
}

impl fmt::Display for FitnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitnessMode::Weighted => "weighted",
            FitnessMode::Generic => "generic",
        })
    }
}

impl FromStr for FitnessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weighted" => Ok(FitnessMode::Weighted),
            "generic" => Ok(FitnessMode::Generic),
            other => Err(Error::InvalidConfig(format!("unknown fitness mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub population_size: usize,
    /// G: optimization generations per increment (0 in ichea mode).
    pub optimize_generations_per_increment: u64,
    pub degree_of_influence: usize,
    pub community_size: usize,
    pub total_communities: usize,
    /// s: stagnant generations before the operator sequencer advances.
    pub stagnant_generations: u32,
    /// α: clone-count constant.
    pub clone_constant: usize,
    /// H: RCHC history depth.
    pub history_depth: usize,
    /// δ: stagnant generations before an individual backtracks.
    pub backtrack_stagnation: u32,
    /// t: best solutions remembered for tabu regions.
    pub tabu_history: usize,
    pub tabu_capacity: usize,
    /// Store fitness alone as the RCHC tabu entry instead of (fitness, digest).
    pub strict_tabu: bool,
    /// r: fraction of constraints added per increment.
    pub increment_fraction: f64,
    /// ρ: survivor-selection curvature.
    pub selection_rho: f64,
    pub seed: u64,
    pub mode: Mode,
    pub fitness_mode: FitnessMode,
    pub budget_secs: Option<f64>,
    pub max_generations: Option<u64>,
    /// Generation budget for each what-if attempt on one snapshot.
    pub whatif_generations: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            population_size: 100,
            optimize_generations_per_increment: 50,
            degree_of_influence: 3,
            community_size: 4,
            total_communities: 10,
            stagnant_generations: 5,
            clone_constant: 1,
            history_depth: 3,
            backtrack_stagnation: 5,
            tabu_history: 5,
            tabu_capacity: 10,
            strict_tabu: false,
            increment_fraction: 0.05,
            selection_rho: 5.0,
            seed: 0,
            mode: Mode::Iichea,
            fitness_mode: FitnessMode::Weighted,
            budget_secs: None,
            max_generations: Some(2_000),
            whatif_generations: 200,
        }
    }
}

impl EngineConfig {
    /// Default configuration for `mode`, with G forced to 0 for ichea.
    pub fn for_mode(mode: Mode) -> Self {
        let mut config = EngineConfig::default();
        config.set_mode(mode);
        config
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.optimize_generations_per_increment = match mode {
            Mode::Ichea => 0,
            Mode::Iichea if self.optimize_generations_per_increment == 0 => 50,
            Mode::Iichea => self.optimize_generations_per_increment,
        };
    }

    /// Generations without global improvement before tabu regions engage.
    pub fn tabu_stall_generations(&self) -> u64 {
        5 * u64::from(self.stagnant_generations)
    }

    pub fn cop_capacity(&self) -> usize {
        self.population_size / 2
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("population_size", self.population_size),
            ("degree_of_influence", self.degree_of_influence),
            ("community_size", self.community_size),
            ("total_communities", self.total_communities),
            ("stagnant_generations", self.stagnant_generations as usize),
            ("clone_constant", self.clone_constant),
            ("history_depth", self.history_depth),
            ("backtrack_stagnation", self.backtrack_stagnation as usize),
            ("tabu_history", self.tabu_history),
            ("tabu_capacity", self.tabu_capacity),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.population_size < 4 {
            return Err(Error::InvalidConfig(
                "population_size must be at least 4".into(),
            ));
        }
        if !(self.increment_fraction > 0.0 && self.increment_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "increment_fraction {} outside (0, 1]",
                self.increment_fraction
            )));
        }
        if self.selection_rho <= 0.0 || !self.selection_rho.is_finite() {
            return Err(Error::InvalidConfig("selection_rho must be positive".into()));
        }
        match (self.mode, self.optimize_generations_per_increment) {
            (Mode::Ichea, 0) => {}
            (Mode::Ichea, g) => {
                return Err(Error::InvalidConfig(format!(
                    "ichea mode requires G = 0, got {g}"
                )))
            }
            (Mode::Iichea, 0) => {
                return Err(Error::InvalidConfig("iichea mode requires G > 0".into()))
            }
            (Mode::Iichea, _) => {}
        }
        if self.budget_secs.is_none() && self.max_generations.is_none() {
            return Err(Error::InvalidConfig(
                "either budget_secs or max_generations must be set".into(),
            ));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
        }
        fn budget<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
            if value.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                num(key, value).map(Some)
            }
        }
        match key {
            "population_size" => self.population_size = num(key, value)?,
            "optimize_generations_per_increment" => {
                self.optimize_generations_per_increment = num(key, value)?
            }
            "degree_of_influence" => self.degree_of_influence = num(key, value)?,
            "community_size" => self.community_size = num(key, value)?,
            "total_communities" => self.total_communities = num(key, value)?,
            "stagnant_generations" => self.stagnant_generations = num(key, value)?,
            "clone_constant" => self.clone_constant = num(key, value)?,
            "history_depth" => self.history_depth = num(key, value)?,
            "backtrack_stagnation" => self.backtrack_stagnation = num(key, value)?,
            "tabu_history" => self.tabu_history = num(key, value)?,
            "tabu_capacity" => self.tabu_capacity = num(key, value)?,
            "strict_tabu" => self.strict_tabu = num(key, value)?,
            "increment_fraction" => self.increment_fraction = num(key, value)?,
            "selection_rho" => self.selection_rho = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "mode" => self.set_mode(value.parse()?),
            "fitness_mode" => self.fitness_mode = value.parse()?,
            "budget_secs" => self.budget_secs = budget(key, value)?,
            "max_generations" => self.max_generations = budget(key, value)?,
            "whatif_generations" => self.whatif_generations = num(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = EngineConfig::default();
        config.apply(text)?;
        Ok(config)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", n + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}
