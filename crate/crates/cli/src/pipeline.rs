//! Subcommand pipelines. Every random draw derives from the run seed, so a
//! report depends only on the config and the seed.
//!
//! * training panel: the run seed itself (so `simulate` writes the panel
//!   that `value` fits on)
//! * evaluation panel and nested draws: seeds mixed from the run seed

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use lsmdual::artifact::{load_fit, save_bounds_csv, save_fit, save_panel};
use lsmdual::{
    additive_duals, bounds, confidence_interval, gbm_paths, nested_gbm, path_policy, run_lsm,
    BoundResult, BoundSummary, ContinuationFit, LsmResult, MartIncrements, PathPanel,
};

use crate::config::RunConfig;
use crate::CliError;

const EVAL_SALT: u64 = 1;
const NESTED_SALT: u64 = 2;

/// SplitMix64 finalizer over `seed` and a salt.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Context {
    /// Uses the config seed unless `seed` overrides it.
    pub fn new(config: RunConfig, seed: Option<u64>, out_dir: impl Into<PathBuf>) -> Self {
        let seed = seed.unwrap_or(config.simulation.seed);
        Self {
            config,
            seed,
            out_dir: out_dir.into(),
        }
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.out_dir.join(path)
        }
    }

    fn output(&self, path: &Path) -> Result<PathBuf, CliError> {
        let path = self.resolve(path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(path)
    }
}

/// `-0.0` and `0.0` print the same.
fn fixed(x: f64) -> String {
    format!("{:.6}", x + 0.0)
}

fn training_panel(ctx: &Context) -> Result<PathPanel, CliError> {
    let c = &ctx.config;
    Ok(gbm_paths(
        &c.gbm(),
        c.model.n_dec,
        c.simulation.n_path,
        ctx.seed,
    )?)
}

fn train(ctx: &Context) -> Result<(PathPanel, LsmResult), CliError> {
    let c = &ctx.config;
    let panel = training_panel(ctx)?;
    let result = run_lsm(&panel, &c.mdp()?, &c.basis_spec()?, c.regressor().as_ref())?;
    Ok((panel, result))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub value_estimate: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl fmt::Display for ValueReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, (v, se)) in self.value_estimate.iter().zip(&self.std_error).enumerate() {
            writeln!(f, "position {p}: value {} se {}", fixed(*v), fixed(*se))?;
        }
        Ok(())
    }
}

/// Fits the continuation values and reports the time-0 estimates.
pub fn cmd_value(ctx: &Context) -> Result<ValueReport, CliError> {
    let (panel, result) = train(ctx)?;
    let out = &ctx.config.output;
    if let Some(path) = &out.panel {
        save_panel(&panel, &ctx.output(path)?)?;
    }
    if let Some(path) = &out.fit {
        save_fit(&result.fit, &ctx.output(path)?)?;
    }
    Ok(ValueReport {
        value_estimate: result.value_estimate,
        std_error: result.std_error,
    })
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub position: usize,
    pub alpha: f64,
    pub summary: BoundSummary,
    pub interval: (f64, f64),
    pub bounds: BoundResult,
    pub increments: MartIncrements,
}

impl fmt::Display for BoundsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.summary;
        writeln!(f, "lower {} se {}", fixed(s.mean_lower), fixed(s.se_lower))?;
        writeln!(f, "upper {} se {}", fixed(s.mean_upper), fixed(s.se_upper))?;
        writeln!(f, "{} {}", fixed(self.interval.0), fixed(self.interval.1))
    }
}

fn fit_for_bounds(ctx: &Context) -> Result<ContinuationFit, CliError> {
    let c = &ctx.config;
    match &c.input.fit {
        Some(path) => {
            let path = ctx.resolve(path);
            let fit = load_fit(&path).map_err(|e| match e {
                lsmdual::LsmError::Io(io) => {
                    CliError::Config(format!("cannot read fit {}: {io}", path.display()))
                }
                other => other.into(),
            })?;
            fit.check_against(&c.mdp()?, &c.basis_spec()?)?;
            Ok(fit)
        }
        None => Ok(train(ctx)?.1.fit),
    }
}

/// Lower and upper bounds on a fresh evaluation panel, with the
/// confidence interval at `alpha` for the configured starting position.
pub fn cmd_bounds(ctx: &Context) -> Result<BoundsReport, CliError> {
    let c = &ctx.config;
    let fit = fit_for_bounds(ctx)?;
    let model = c.mdp()?;
    let spec = c.basis_spec()?;
    let gbm = c.gbm();

    let eval = gbm_paths(
        &gbm,
        c.model.n_dec,
        c.simulation.n_path_eval,
        derive_seed(ctx.seed, EVAL_SALT),
    )?;
    let nested = nested_gbm(
        &eval,
        &gbm,
        c.simulation.n_subsim,
        derive_seed(ctx.seed, NESTED_SALT),
    )?;
    let policy = path_policy(&eval, &fit, &model, &spec)?;
    let increments = additive_duals(&eval, &nested, &fit, &model, &spec)?;
    let result = bounds(&eval, &model, &increments, &policy)?;
    let interval = confidence_interval(&result, c.alpha, c.position)?;

    if let Some(path) = &c.output.bounds_csv {
        save_bounds_csv(&result, &ctx.output(path)?)?;
    }
    Ok(BoundsReport {
        position: c.position,
        alpha: c.alpha,
        summary: result.summary[c.position],
        interval,
        bounds: result,
        increments,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub path: PathBuf,
    pub n_path: usize,
    pub dim: usize,
    pub n_dec: usize,
}

impl fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "wrote {} paths x {} components x {} epochs to {}",
            self.n_path,
            self.dim,
            self.n_dec,
            self.path.display()
        )
    }
}

/// Writes the training panel to `output.panel` (default `panel.bin`).
pub fn cmd_simulate(ctx: &Context) -> Result<SimulateReport, CliError> {
    let panel = training_panel(ctx)?;
    let target = ctx
        .config
        .output
        .panel
        .clone()
        .unwrap_or_else(|| PathBuf::from("panel.bin"));
    let path = ctx.output(&target)?;
    save_panel(&panel, &path)?;
    Ok(SimulateReport {
        path,
        n_path: panel.n_path(),
        dim: panel.dim(),
        n_dec: panel.n_dec(),
    })
}
