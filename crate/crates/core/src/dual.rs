//! Pathwise duality bounds.
//!
//! Martingale increments come from nested one-step simulation of the fitted
//! value function. The lower bound follows the prescribed policy along each
//! path; the upper bound lets the controller see the whole path and
//! optimizes it by backward recursion. Both add the same increments, so the
//! upper realization dominates the lower one on every path.
//!
//! With a stochastic position kernel the lower bound integrates over the
//! position chain rather than sampling it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::BasisSpec;
use crate::error::{check_dim, LsmError, Result};
use crate::lsm::{
    best_action, fitted_actions_batch, fitted_values_batch, mean_and_se, ContinuationFit,
    PolicyTable,
};
use crate::model::MdpModel;
use crate::simulate::{PathPanel, SubsimPanel};

/// Fitted decision rule on every path, epoch and position of `paths`.
pub fn path_policy(
    paths: &PathPanel,
    fit: &ContinuationFit,
    model: &MdpModel,
    spec: &BasisSpec,
) -> Result<PolicyTable> {
    check_dim("panel epochs", model.n_dec(), paths.n_dec())?;
    check_dim("panel dimension", model.dim(), paths.dim())?;
    let epochs = (0..model.horizon())
        .into_par_iter()
        .map(|t| fitted_actions_batch(fit, model, spec, t, &paths.states_at(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyTable::from_epochs(
        paths.n_path(),
        model.n_pos(),
        &epochs,
    ))
}

/// Martingale increments `delta[i][t][p']`: nested mean of the fitted
/// time-`t+1` value minus its value at the realized successor.
#[derive(Debug, Clone, PartialEq)]
pub struct MartIncrements {
    n_path: usize,
    n_steps: usize,
    n_pos: usize,
    delta: Vec<f64>,
}

impl MartIncrements {
    pub fn new(n_path: usize, n_steps: usize, n_pos: usize, delta: Vec<f64>) -> Result<Self> {
        check_dim(
            "increment tensor size",
            n_path * n_steps * n_pos,
            delta.len(),
        )?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(LsmError::NonFinite("martingale increments"));
        }
        Ok(Self {
            n_path,
            n_steps,
            n_pos,
            delta,
        })
    }

    pub fn zeros(n_path: usize, n_steps: usize, n_pos: usize) -> Self {
        Self {
            n_path,
            n_steps,
            n_pos,
            delta: vec![0.0; n_path * n_steps * n_pos],
        }
    }

    pub fn n_path(&self) -> usize {
        self.n_path
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize, p: usize) -> f64 {
        self.delta[(i * self.n_steps + t) * self.n_pos + p]
    }

    /// Increments of path `i` at epoch `t` for every successor position.
    #[inline]
    pub fn successors(&self, i: usize, t: usize) -> &[f64] {
        &self.delta[(i * self.n_steps + t) * self.n_pos..][..self.n_pos]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.delta
    }
}

/// Mean of `xs` taken as offsets from the first entry, so identical samples
/// average to themselves exactly.
fn shifted_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut iter = xs;
    let Some(first) = iter.next() else {
        return f64::NAN;
    };
    let mut count = 1usize;
    let mut offset = 0.0;
    for x in iter {
        offset += x - first;
        count += 1;
    }
    first + offset / count as f64
}

pub fn additive_duals(
    paths: &PathPanel,
    subsim: &SubsimPanel,
    fit: &ContinuationFit,
    model: &MdpModel,
    spec: &BasisSpec,
) -> Result<MartIncrements> {
    check_dim("panel epochs", model.n_dec(), paths.n_dec())?;
    check_dim("panel dimension", model.dim(), paths.dim())?;
    check_dim("nested paths", paths.n_path(), subsim.n_path())?;
    check_dim("nested dimension", paths.dim(), subsim.dim())?;
    check_dim("nested epochs", model.horizon(), subsim.n_steps())?;

    let n = paths.n_path();
    let n_pos = model.n_pos();
    let n_steps = model.horizon();
    let n_sub = subsim.n_subsim();

    let per_epoch = (0..n_steps)
        .into_par_iter()
        .map(|t| {
            let realized = fitted_values_batch(fit, model, spec, t + 1, &paths.states_at(t + 1))?;
            let nested = fitted_values_batch(fit, model, spec, t + 1, &subsim.successors_at(t))?;
            let mut out = vec![0.0; n * n_pos];
            for i in 0..n {
                for p in 0..n_pos {
                    let mean = shifted_mean((0..n_sub).map(|s| nested[(i * n_sub + s, p)]));
                    out[i * n_pos + p] = mean - realized[(i, p)];
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut delta = vec![0.0; n * n_steps * n_pos];
    for (t, slab) in per_epoch.iter().enumerate() {
        for i in 0..n {
            delta[(i * n_steps + t) * n_pos..][..n_pos]
                .copy_from_slice(&slab[i * n_pos..][..n_pos]);
        }
    }
    MartIncrements::new(n, n_steps, n_pos, delta)
}

/// Sample statistics of the bound realizations at one starting position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSummary {
    pub mean_lower: f64,
    pub se_lower: f64,
    pub mean_upper: f64,
    pub se_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    /// `[n_path x n_pos]`, indexed by starting position.
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub summary: Vec<BoundSummary>,
}

impl BoundResult {
    pub fn n_path(&self) -> usize {
        self.lower.nrows()
    }
}

/// Lower and upper bound realizations for every path and starting position.
pub fn bounds(
    paths: &PathPanel,
    model: &MdpModel,
    mart: &MartIncrements,
    policy: &PolicyTable,
) -> Result<BoundResult> {
    check_dim("panel epochs", model.n_dec(), paths.n_dec())?;
    check_dim("panel dimension", model.dim(), paths.dim())?;
    let n = paths.n_path();
    let n_pos = model.n_pos();
    let n_steps = model.horizon();
    check_dim("increment paths", n, mart.n_path())?;
    check_dim("increment epochs", n_steps, mart.n_steps())?;
    check_dim("increment positions", n_pos, mart.n_pos())?;
    check_dim("policy paths", n, policy.n_path())?;
    check_dim("policy epochs", n_steps, policy.n_steps())?;
    check_dim("policy positions", n_pos, policy.n_pos())?;
    let n_action = model.n_action();
    for i in 0..n {
        for t in 0..n_steps {
            for p in 0..n_pos {
                let a = policy.action(i, t, p);
                if a >= n_action {
                    return Err(LsmError::IndexOutOfRange {
                        what: "policy action",
                        index: a,
                        bound: n_action,
                    });
                }
            }
        }
    }

    let rewards = (0..n_steps)
        .into_par_iter()
        .map(|t| model.rewards(&paths.states_at(t), t))
        .collect::<Result<Vec<_>>>()?;
    let scrap = model.scrap(&paths.states_at(n_steps))?;
    let kernel = model.kernel();

    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut lower: Vec<f64> = (0..n_pos).map(|p| scrap[(i, p)]).collect();
            let mut upper = lower.clone();
            let mut w_lower = vec![0.0; n_pos];
            let mut w_upper = vec![0.0; n_pos];
            for t in (0..n_steps).rev() {
                let delta = mart.successors(i, t);
                for q in 0..n_pos {
                    w_lower[q] = delta[q] + lower[q];
                    w_upper[q] = delta[q] + upper[q];
                }
                for p in 0..n_pos {
                    let r = rewards[t].actions(i, p);
                    let a = policy.action(i, t, p);
                    lower[p] = r[a] + kernel.mix(p, a, &w_lower);
                    upper[p] = best_action(kernel, p, r, &w_upper).1;
                }
            }
            (lower, upper)
        })
        .collect();

    let lower = DMatrix::from_fn(n, n_pos, |i, p| per_path[i].0[p]);
    let upper = DMatrix::from_fn(n, n_pos, |i, p| per_path[i].1[p]);
    let summary = (0..n_pos)
        .map(|p| {
            let (mean_lower, se_lower) = mean_and_se(&lower.as_slice()[p * n..(p + 1) * n]);
            let (mean_upper, se_upper) = mean_and_se(&upper.as_slice()[p * n..(p + 1) * n]);
            BoundSummary {
                mean_lower,
                se_lower,
                mean_upper,
                se_upper,
            }
        })
        .collect();
    Ok(BoundResult {
        lower,
        upper,
        summary,
    })
}

/// Two-sided standard normal quantile `z_{1 - alpha/2}`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LsmError::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(std.inverse_cdf(1.0 - alpha / 2.0))
}

/// `(mean_lower - q * se_lower, mean_upper + q * se_upper)` at starting
/// position `p`.
pub fn confidence_interval(result: &BoundResult, alpha: f64, p: usize) -> Result<(f64, f64)> {
    let q = normal_quantile(alpha)?;
    if result.n_path() < 2 {
        return Err(LsmError::InvalidArgument(
            "a confidence interval needs at least two paths".into(),
        ));
    }
    let s = result.summary.get(p).ok_or(LsmError::IndexOutOfRange {
        what: "position",
        index: p,
        bound: result.summary.len(),
    })?;
    Ok((s.mean_lower - q * s.se_lower, s.mean_upper + q * s.se_upper))
}
