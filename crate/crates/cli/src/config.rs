//! TOML run configuration.
//!
//! ```toml
//! alpha = 0.01
//!
//! [model]
//! name = "bermudan_put"
//! strike = 40.0
//! start = 36.0
//! rate = 0.06     # annual
//! vol = 0.2       # annual
//! step = 0.02     # years per epoch
//! n_dec = 51
//!
//! [simulation]
//! n_path = 10000
//! n_path_eval = 100
//! n_subsim = 100
//! seed = 1
//! antithetic = true
//!
//! [basis]
//! btype = "power"
//! flags = [[1, 1]]
//! intercept = true
//! knots = [[30, 40, 50]]
//! custom = ["reciprocal"]
//!
//! [regression]
//! backend = "svd"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lsmdual::models::{BermudanPut, UNEXERCISED};
use lsmdual::{BasisSpec, BasisType, GbmParams, MdpModel, QrRegressor, Regressor, SvdRegressor};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Starting position reported by `bounds`.
    #[serde(default = "default_position")]
    pub position: usize,
}

fn default_alpha() -> f64 {
    0.01
}

fn default_position() -> usize {
    UNEXERCISED
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub strike: f64,
    pub start: f64,
    pub rate: f64,
    pub vol: f64,
    pub step: f64,
    pub n_dec: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_path: usize,
    #[serde(default = "default_eval_paths")]
    pub n_path_eval: usize,
    #[serde(default = "default_subsim")]
    pub n_subsim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

fn default_eval_paths() -> usize {
    100
}

fn default_subsim() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "default_btype")]
    pub btype: String,
    #[serde(default)]
    pub flags: Vec<Vec<f64>>,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub knots: Vec<Vec<f64>>,
    /// Built-in custom features appended after the knots, in order.
    #[serde(default)]
    pub custom: Vec<String>,
}

fn default_btype() -> String {
    "power".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    #[serde(default)]
    pub backend: Backend,
    /// Relative singular value cutoff for the SVD backend.
    pub rcond: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Svd,
    Qr,
}

/// Artifact paths, relative ones resolved against `--out-dir`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub fit: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub bounds_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Continuation fit to reuse in `bounds` instead of refitting.
    pub fit: Option<PathBuf>,
}

/// Built-in custom feature: `1 / z` for every state component.
fn reciprocal(states: &DMatrix<f64>) -> DMatrix<f64> {
    states.map(|z| 1.0 / z)
}

/// Built-in custom feature: `ln z` for every state component.
fn log(states: &DMatrix<f64>) -> DMatrix<f64> {
    states.map(f64::ln)
}

const DIM: usize = 1;

/// Built-in feature map, one output column per state component.
type Feature = fn(&DMatrix<f64>) -> DMatrix<f64>;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let m = &self.model;
        if m.name != "bermudan_put" {
            return bad(format!(
                "unknown model {:?} (available: \"bermudan_put\")",
                m.name
            ));
        }
        if !(m.start > 0.0 && m.start.is_finite()) {
            return bad(format!("model.start must be positive, got {}", m.start));
        }
        if !m.strike.is_finite() || !m.rate.is_finite() {
            return bad("model.strike and model.rate must be finite".into());
        }
        if !(m.vol >= 0.0 && m.vol.is_finite()) {
            return bad(format!("model.vol must be nonnegative, got {}", m.vol));
        }
        if !(m.step > 0.0 && m.step.is_finite()) {
            return bad(format!("model.step must be positive, got {}", m.step));
        }
        if m.n_dec < 2 {
            return bad(format!("model.n_dec must be at least 2, got {}", m.n_dec));
        }

        let s = &self.simulation;
        for (name, n) in [
            ("n_path", s.n_path),
            ("n_path_eval", s.n_path_eval),
            ("n_subsim", s.n_subsim),
        ] {
            if n == 0 {
                return bad(format!("simulation.{name} must be positive"));
            }
            if s.antithetic && !n.is_multiple_of(2) {
                return bad(format!(
                    "simulation.{name} must be even with antithetic sampling, got {n}"
                ));
            }
        }
        if s.n_path_eval < 2 {
            return bad("simulation.n_path_eval must be at least 2".into());
        }

        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.position >= 2 {
            return bad(format!("position must be 0 or 1, got {}", self.position));
        }
        if let Some(rcond) = self.regression.rcond {
            if !(rcond >= 0.0 && rcond.is_finite()) {
                return bad(format!("regression.rcond must be nonnegative, got {rcond}"));
            }
        }
        self.basis_spec()?
            .validate(DIM)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn basis_spec(&self) -> Result<BasisSpec, CliError> {
        let b = &self.basis;
        let btype: BasisType = b
            .btype
            .parse()
            .map_err(|e: lsmdual::LsmError| CliError::Config(e.to_string()))?;
        let mut spec = BasisSpec::new()
            .with_flags(&b.flags)
            .with_btype(btype)
            .with_intercept(b.intercept)
            .with_knots(&b.knots);
        let mut features: Vec<Feature> = Vec::new();
        for name in &b.custom {
            match name.as_str() {
                "reciprocal" => features.push(reciprocal),
                "log" => features.push(log),
                other => {
                    return Err(CliError::Config(format!(
                        "unknown custom feature {other:?} (available: \"reciprocal\", \"log\")"
                    )))
                }
            }
        }
        if !features.is_empty() {
            let n_custom = features.len() * DIM;
            let block = move |states: &DMatrix<f64>| {
                let dim = states.ncols();
                let blocks: Vec<DMatrix<f64>> = features.iter().map(|f| f(states)).collect();
                DMatrix::from_fn(states.nrows(), n_custom, |i, c| {
                    blocks[c / dim][(i, c % dim)]
                })
            };
            spec = spec.with_custom(Arc::new(block), n_custom);
        }
        Ok(spec)
    }

    pub fn put(&self) -> BermudanPut {
        BermudanPut {
            strike: self.model.strike,
            rate: self.model.rate * self.model.step,
            n_dec: self.model.n_dec,
        }
    }

    pub fn mdp(&self) -> Result<MdpModel, CliError> {
        Ok(self.put().into_model()?)
    }

    pub fn gbm(&self) -> GbmParams {
        let m = &self.model;
        GbmParams::from_annual(m.start, m.rate, m.vol, m.step, self.simulation.antithetic)
    }

    pub fn regressor(&self) -> Box<dyn Regressor> {
        match self.regression.backend {
            Backend::Svd => Box::new(SvdRegressor {
                rcond: self.regression.rcond,
            }),
            Backend::Qr => Box::new(QrRegressor::default()),
        }
    }
}
