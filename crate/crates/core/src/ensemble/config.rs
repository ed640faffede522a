//! Experiment configuration files (TOML) and their resolution into
//! ready-to-run systems.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::discrete::ChainConfig;
use crate::error::{Error, Result};
use crate::operators::{CVector, KrausSet, QuantumState};
use crate::sde::SdeConfig;
use crate::simplex::SimplexPoint;

/// Which process an ensemble simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Discrete weak-measurement chain over a projective set.
    Discrete,
    /// Classical simplex diffusion only.
    Continuous,
    /// Simplex diffusion coupled to the projective state equation.
    ProjectiveQsd,
    /// Simplex diffusion with the pullback of a general Kraus set.
    Generalized,
    /// Coupled state equation of a positive commuting Kraus set.
    CommutingQsd,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Discrete => "discrete",
            Mode::Continuous => "continuous",
            Mode::ProjectiveQsd => "projective_qsd",
            Mode::Generalized => "generalized",
            Mode::CommutingQsd => "commuting_qsd",
        }
    }

    /// Checkpoints count chain steps in discrete mode and time otherwise.
    pub fn checkpoint_unit(self) -> &'static str {
        match self {
            Mode::Discrete => "steps",
            _ => "time",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial pure state as real amplitudes or `[re, im]` pairs. It is
/// normalized on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Real(Vec<f64>),
    Complex(Vec<[f64; 2]>),
}

impl StateSpec {
    fn to_vector(&self) -> CVector {
        match self {
            StateSpec::Real(v) => {
                CVector::from_iterator(v.len(), v.iter().map(|a| Complex::new(*a, 0.0)))
            }
            StateSpec::Complex(v) => {
                CVector::from_iterator(v.len(), v.iter().map(|[re, im]| Complex::new(*re, *im)))
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            StateSpec::Real(v) => v.len(),
            StateSpec::Complex(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dimension: usize,
    /// Kraus set file; computational-basis projectors when absent. Relative
    /// paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_file: Option<PathBuf>,
    pub initial_state: StateSpec,
}

/// Discrete-chain parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainParams {
    pub lambda: f64,
    pub eps_stop: f64,
    pub max_steps: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        let c = ChainConfig::default();
        Self {
            lambda: 0.2,
            eps_stop: c.eps_stop,
            max_steps: c.max_steps,
        }
    }
}

impl ChainParams {
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            eps_stop: self.eps_stop,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Output directory; the CLI falls back to its own default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write one JSON line per trajectory.
    pub trajectories_jsonl: bool,
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub trajectories: u64,
    pub master_seed: u64,
    /// Worker threads; 0 lets the pool decide. Never affects results.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    pub system: SystemSpec,
    #[serde(default)]
    pub chain: ChainParams,
    #[serde(default)]
    pub sde: SdeConfig,
    #[serde(default)]
    pub output: OutputSpec,
}

fn toml_error(path: &Path, err: impl fmt::Display) -> Error {
    Error::format(path, err.to_string().trim_end().to_string())
}

/// Sets `a.b.c = value` inside a TOML table. The value is parsed as TOML and
/// taken as a plain string when that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::config(assignment, "override key is empty"));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a section")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text with optional `key=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String], origin: &Path) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(origin, e))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| toml_error(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, overrides, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(k) = &cfg.system.kraus_file {
            if k.is_relative() {
                cfg.system.kraus_file = Some(base.join(k));
            }
        }
        Ok(cfg)
    }

    /// Field-level checks that need no file access.
    /// The config as TOML, readable back by [`ExperimentConfig::from_toml_str`].
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format("<config>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::config("trajectories", "must be at least 1"));
        }
        if self.system.dimension == 0 {
            return Err(Error::config("system.dimension", "must be at least 1"));
        }
        if self.system.initial_state.len() != self.system.dimension {
            return Err(Error::config(
                "system.initial_state",
                format!(
                    "has {} amplitudes but system.dimension is {}",
                    self.system.initial_state.len(),
                    self.system.dimension
                ),
            ));
        }
        for (i, c) in self.checkpoints.iter().enumerate() {
            if !(c.is_finite() && *c >= 0.0) {
                return Err(Error::config(
                    "checkpoints",
                    format!("entry {i} ({c}) must be finite and nonnegative"),
                ));
            }
            if i > 0 && *c <= self.checkpoints[i - 1] {
                return Err(Error::config("checkpoints", "must be strictly increasing"));
            }
            if self.mode == Mode::Discrete && c.fract() != 0.0 {
                return Err(Error::config(
                    "checkpoints",
                    format!("entry {i} ({c}) must be a whole step count in discrete mode"),
                ));
            }
        }
        match self.mode {
            Mode::Discrete => {
                if !(self.chain.lambda > 0.0 && self.chain.lambda < 1.0) {
                    return Err(Error::config(
                        "chain.lambda",
                        format!("{} is outside (0, 1)", self.chain.lambda),
                    ));
                }
                self.chain
                    .chain_config()
                    .validate()
                    .map_err(|e| prefix(e, "chain"))?;
            }
            _ => self.sde.validate().map_err(|e| prefix(e, "sde"))?,
        }
        Ok(())
    }
}

fn prefix(err: Error, section: &str) -> Error {
    match err {
        Error::Config { field, message } => Error::Config {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

/// A validated configuration with its Kraus set and initial state loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub kraus: KrausSet,
    pub psi0: QuantumState,
    pub p0: SimplexPoint,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let kraus = match &config.system.kraus_file {
            Some(path) => KrausSet::load(path)?,
            None => KrausSet::computational_projectors(config.system.dimension)
                .map_err(|e| Error::config("system.dimension", e.to_string()))?,
        };
        if kraus.dim() != config.system.dimension {
            return Err(Error::config(
                "system.dimension",
                format!(
                    "is {} but the Kraus set acts on dimension {}",
                    config.system.dimension,
                    kraus.dim()
                ),
            ));
        }
        let psi0 = QuantumState::pure_normalized(config.system.initial_state.to_vector())
            .map_err(|e| Error::config("system.initial_state", e.to_string()))?;
        match config.mode {
            Mode::Discrete | Mode::ProjectiveQsd if !kraus.is_projective() => {
                return Err(Error::config(
                    "mode",
                    format!("{} needs a projective measurement", config.mode),
                ));
            }
            Mode::CommutingQsd if !(kraus.is_positive() && kraus.is_commuting()) => {
                return Err(Error::config(
                    "mode",
                    "commuting_qsd needs positive, commuting Kraus operators",
                ));
            }
            _ => {}
        }
        let p0 = kraus.born_probabilities(&psi0)?;
        Ok(Self {
            config,
            kraus,
            psi0,
            p0,
        })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::new(ExperimentConfig::load(path, overrides)?)
    }
}
