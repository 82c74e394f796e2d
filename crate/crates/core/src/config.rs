//! Run configuration: JSON file, `PCLPV_*` environment overrides, and the
//! shipped reference setup.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::orthopoly::ParameterDistribution;
use crate::plant::{missile_quasi_lpv, CostWeights, MissileConfig, UncertainLinearSystem};
use crate::synthesis::SynthOptions;

/// The reference configuration shipped with the crate.
pub const REFERENCE_JSON: &str = include_str!("../reference.json");

/// Prefix of environment variables that override configuration keys.
pub const ENV_PREFIX: &str = "PCLPV_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lti,
    Lpv,
    Pclpv,
    Sclpv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lti, Method::Lpv, Method::Pclpv, Method::Sclpv];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lti => "lti",
            Method::Lpv => "lpv",
            Method::Pclpv => "pclpv",
            Method::Sclpv => "sclpv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected lti, lpv, pclpv or sclpv)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Uncertainty {
    pub distribution: String,
    /// Scheduling range in degrees.
    pub range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cost {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub method: Method,
    /// Expansion degree `N` for pclpv and sclpv.
    pub order: usize,
    /// Sample count for lpv.
    pub samples: usize,
    pub quadrature_order: Option<usize>,
    pub epsilon_psd: f64,
    pub epsilon_stab: f64,
    pub wc_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulation {
    /// `[α (deg), q (deg/s)]`.
    pub x0: [f64; 2],
    pub t_final: f64,
    pub dt: f64,
    /// Additional initial conditions for robustness sweeps.
    #[serde(default)]
    pub x0_set: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: MissileConfig,
    pub uncertainty: Uncertainty,
    pub cost: Cost,
    pub synthesis: SynthesisSection,
    pub simulation: Simulation,
    /// Seed for every random draw.
    #[serde(default)]
    pub seed: u64,
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("cost.{name} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

/// Applies one `PCLPV_*` override to a parsed document. Keys match
/// case-insensitively: `PCLPV_SIMULATION_DT` sets `simulation.dt`,
/// `PCLPV_SEED` sets `seed`.
fn apply_override(doc: &mut Value, var: &str, raw: &str) -> Result<()> {
    let path = var[ENV_PREFIX.len()..].to_ascii_lowercase();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let root = doc.as_object_mut().ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
    if let Some(key) = root.keys().find(|k| k.to_ascii_lowercase() == path && !root[*k].is_object()).cloned() {
        root.insert(key, value);
        return Ok(());
    }
    if path == "seed" {
        root.insert(path, value);
        return Ok(());
    }
    for (section, body) in root.iter_mut() {
        let Some(rest) = path.strip_prefix(&format!("{}_", section.to_ascii_lowercase())) else { continue };
        let Some(body) = body.as_object_mut() else { continue };
        let key = body.keys().find(|k| k.to_ascii_lowercase() == rest).cloned().unwrap_or_else(|| rest.to_owned());
        body.insert(key, value);
        return Ok(());
    }
    Err(Error::Config(format!("environment override {var} does not name a configuration key")))
}

impl Config {
    pub fn reference() -> Self {
        Self::parse(REFERENCE_JSON, std::iter::empty::<(String, String)>()).expect("shipped reference config is valid")
    }

    /// Parses a document and applies `(name, value)` overrides whose names
    /// start with `PCLPV_`; other names are ignored.
    pub fn parse<I, K, V>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.as_ref().starts_with(ENV_PREFIX))
            .map(|(k, v)| (k.as_ref().to_owned(), v.as_ref().to_owned()))
            .collect();
        overrides.sort();
        for (k, v) in &overrides {
            apply_override(&mut doc, k, v)?;
        }
        let config: Config = serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::Config(inner.to_string())
            } else {
                Error::Config(format!("{path}: {inner}"))
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and applies overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.uncertainty.distribution != "uniform" {
            return Err(Error::Config(format!(
                "uncertainty.distribution `{}` is not supported for the missile scheduling parameter (use uniform)",
                self.uncertainty.distribution
            )));
        }
        self.distribution()?;
        self.weights()?;
        let s = &self.synthesis;
        if !(s.epsilon_psd > 0.0) || !(s.epsilon_stab >= 0.0) {
            return Err(Error::Config("synthesis.epsilon_psd must be positive and epsilon_stab non-negative".into()));
        }
        if s.quadrature_order == Some(0) {
            return Err(Error::Config("synthesis.quadrature_order must be positive".into()));
        }
        let sim = &self.simulation;
        if !(sim.dt > 0.0) || !(sim.t_final >= 0.0) || !sim.dt.is_finite() || !sim.t_final.is_finite() {
            return Err(Error::Config("simulation.dt must be positive and t_final non-negative".into()));
        }
        if sim.x0.iter().chain(sim.x0_set.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Config("initial conditions must be finite".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.uncertainty.range[0], self.uncertainty.range[1])
    }

    pub fn distribution(&self) -> Result<ParameterDistribution> {
        ParameterDistribution::uniform(self.uncertainty.range[0], self.uncertainty.range[1])
            .map_err(|e| Error::Config(format!("uncertainty.range: {e}")))
    }

    pub fn system(&self) -> Result<UncertainLinearSystem> {
        missile_quasi_lpv(&self.model, self.range())
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let w = CostWeights { q: rows_to_matrix("Q", &self.cost.q)?, r: rows_to_matrix("R", &self.cost.r)? };
        if w.q.shape() != (2, 2) || w.r.shape() != (1, 1) {
            return Err(Error::Config(format!("cost.Q must be 2x2 and cost.R 1x1, got {:?} and {:?}", w.q.shape(), w.r.shape())));
        }
        w.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(w)
    }

    pub fn options(&self) -> SynthOptions {
        SynthOptions {
            epsilon_psd: self.synthesis.epsilon_psd,
            epsilon_stab: self.synthesis.epsilon_stab,
            wc_points: self.synthesis.wc_points,
            quadrature_order: self.synthesis.quadrature_order,
            ..SynthOptions::default()
        }
    }

    /// `x0` followed by every entry of `x0_set`, without repeats.
    pub fn initial_conditions(&self) -> Vec<[f64; 2]> {
        let mut out = vec![self.simulation.x0];
        for x in &self.simulation.x0_set {
            if !out.contains(x) {
                out.push(*x);
            }
        }
        out
    }
}
