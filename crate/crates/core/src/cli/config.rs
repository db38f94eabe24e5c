use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowSpec;
use crate::geometry::{lattice_side, Domain, Patch};
use crate::lifespans::Thresholds;
use crate::regularity::DEFAULT_ISO_THRESH;
use crate::tracking::DEFAULT_P_CANDIDATES;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where velocities come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSource {
    DoubleWell,
    Dataset { path: PathBuf },
}

/// A fixed quasi-norm exponent or a candidate set to select from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PChoice {
    Fixed(f64),
    Candidates(Vec<f64>),
}

impl PChoice {
    pub fn candidates(&self) -> Vec<f64> {
        match self {
            PChoice::Fixed(_) => DEFAULT_P_CANDIDATES.to_vec(),
            PChoice::Candidates(c) => c.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dumps {
    /// Composed window matrices as triplet text.
    pub matrices: bool,
    /// Regularity masks for every lifespan step.
    pub masks: bool,
}

/// One experiment. Relative paths resolve against the working directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub field: FieldSource,
    /// Defaults to the double-well box or the dataset's own extent.
    #[serde(default)]
    pub domain: Option<Domain>,
    pub depth: u32,
    /// Window length in steps.
    pub n: usize,
    /// Test points per bin, a perfect square.
    pub q: usize,
    pub modes: usize,
    pub flow: FlowSpec,
    pub t_i: i64,
    pub t_f: i64,
    pub patch: Patch,
    pub p: PChoice,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_iso_thresh")]
    pub iso_thresh: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dumps: Dumps,
}

fn default_iso_thresh() -> f64 {
    DEFAULT_ISO_THRESH
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        config.validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Window start times `t_i ..= t_f − n`.
    pub fn window_starts(&self) -> std::ops::RangeInclusive<i64> {
        self.t_i..=self.t_f - self.n as i64
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n == 0 {
            return invalid("n must be at least 1".into());
        }
        if self.modes == 0 {
            return invalid("modes must be at least 1".into());
        }
        if self.t_i > self.t_f - self.n as i64 {
            return invalid(format!(
                "need t_i <= t_f - n, got t_i={} t_f={} n={}",
                self.t_i, self.t_f, self.n
            ));
        }
        lattice_side(self.q).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.flow.validated().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.patch.validated().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(d) = self.domain {
            d.validated().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.thresholds
            .validated()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let ps = match &self.p {
            PChoice::Fixed(p) => vec![*p],
            PChoice::Candidates(c) if c.is_empty() => return invalid("empty p candidate set".into()),
            PChoice::Candidates(c) => c.clone(),
        };
        if let Some(p) = ps.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return invalid(format!("p must be positive and finite, got {p}"));
        }
        if !(0.0..=1.0).contains(&self.iso_thresh) {
            return invalid(format!("iso_thresh must lie in [0, 1], got {}", self.iso_thresh));
        }
        Ok(self)
    }
}
