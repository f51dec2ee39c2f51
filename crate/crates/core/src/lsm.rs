//! Least squares Monte Carlo backward induction.
//!
//! Realized path values are regressed on the basis at every epoch, the fitted
//! continuation picks an action per path and position, and the realized
//! values are rolled back along the path with that action. One regression per
//! `(t, position)` is enough because the continuous state is uncontrolled:
//! actions enter only through the kernel mix.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{basis_dimension, design_data, BasisSpec};
use crate::error::{check_dim, LsmError, Result};
use crate::model::{MdpModel, RewardTable, TransitionKernel};
use crate::regression::{apply_regressor_many, Regressor};
use crate::simulate::PathPanel;

/// Continuation coefficients laid out `[t][p][k]` for `t < T`. Row `[t][p]`
/// gives the regression of the time-`t+1` value at position `p` on the
/// basis evaluated at `Z_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationFit {
    n_dec: usize,
    n_pos: usize,
    m: usize,
    coeffs: Vec<f64>,
}

impl ContinuationFit {
    pub fn new(n_dec: usize, n_pos: usize, m: usize, coeffs: Vec<f64>) -> Result<Self> {
        if n_dec < 2 || n_pos == 0 || m == 0 {
            return Err(LsmError::InvalidArgument(format!(
                "continuation fit needs n_dec >= 2, n_pos >= 1, m >= 1 (got {n_dec}, {n_pos}, {m})"
            )));
        }
        check_dim(
            "continuation fit size",
            (n_dec - 1) * n_pos * m,
            coeffs.len(),
        )?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LsmError::NonFinite("continuation coefficients"));
        }
        Ok(Self {
            n_dec,
            n_pos,
            m,
            coeffs,
        })
    }

    pub fn zeros(n_dec: usize, n_pos: usize, m: usize) -> Result<Self> {
        Self::new(
            n_dec,
            n_pos,
            m,
            vec![0.0; n_dec.saturating_sub(1) * n_pos * m],
        )
    }

    pub fn n_dec(&self) -> usize {
        self.n_dec
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_basis(&self) -> usize {
        self.m
    }

    pub fn coefficients(&self, t: usize, p: usize) -> &[f64] {
        &self.coeffs[(t * self.n_pos + p) * self.m..][..self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// Checks that the fit was produced for this model and basis.
    pub fn check_against(&self, model: &MdpModel, spec: &BasisSpec) -> Result<()> {
        check_dim("fit epochs", model.n_dec(), self.n_dec)?;
        check_dim("fit positions", model.n_pos(), self.n_pos)?;
        check_dim("fit basis columns", basis_dimension(spec), self.m)
    }

    /// Continuation estimates `[i][p]` for the design rows of epoch `t`.
    pub(crate) fn continuation(&self, t: usize, x: &DMatrix<f64>) -> Vec<f64> {
        let block = &self.coeffs[t * self.n_pos * self.m..][..self.n_pos * self.m];
        continuation_rows(block, self.n_pos, x)
    }
}

/// `x * beta` for a coefficient block laid out `[p][k]`, returned `[i][p]`.
fn continuation_rows(block: &[f64], n_pos: usize, x: &DMatrix<f64>) -> Vec<f64> {
    let m = x.ncols();
    let mut out = vec![0.0; x.nrows() * n_pos];
    for p in 0..n_pos {
        for (c, &b) in block[p * m..][..m].iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (i, &xv) in x.column(c).iter().enumerate() {
                out[i * n_pos + p] += xv * b;
            }
        }
    }
    out
}

/// Fitted actions `[i][t][p]` over `t < T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    n_path: usize,
    n_steps: usize,
    n_pos: usize,
    actions: Vec<usize>,
}

impl PolicyTable {
    pub fn new(n_path: usize, n_steps: usize, n_pos: usize, actions: Vec<usize>) -> Result<Self> {
        check_dim("policy table size", n_path * n_steps * n_pos, actions.len())?;
        Ok(Self {
            n_path,
            n_steps,
            n_pos,
            actions,
        })
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
    pub fn action(&self, i: usize, t: usize, p: usize) -> usize {
        self.actions[(i * self.n_steps + t) * self.n_pos + p]
    }

    pub(crate) fn from_epochs(n_path: usize, n_pos: usize, epochs: &[Vec<usize>]) -> Self {
        let n_steps = epochs.len();
        let mut actions = vec![0; n_path * n_steps * n_pos];
        for (t, acts) in epochs.iter().enumerate() {
            for i in 0..n_path {
                for p in 0..n_pos {
                    actions[(i * n_steps + t) * n_pos + p] = acts[i * n_pos + p];
                }
            }
        }
        Self {
            n_path,
            n_steps,
            n_pos,
            actions,
        }
    }
}

/// Argmax over actions of reward plus mixed continuation; ties go to the
/// lowest action index.
#[inline]
pub(crate) fn best_action(
    kernel: &TransitionKernel,
    p: usize,
    rewards: &[f64],
    cont: &[f64],
) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (a, r) in rewards.iter().enumerate() {
        let v = r + kernel.mix(p, a, cont);
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct LsmResult {
    pub fit: ContinuationFit,
    /// Realized time-0 values `[n_path x n_pos]`.
    pub path_values: DMatrix<f64>,
    pub value_estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Fitted actions on the regression panel.
    pub policy: PolicyTable,
    value_trace: Vec<f64>,
    n_path: usize,
    n_pos: usize,
}

impl LsmResult {
    /// Fitted action at `t = 0`.
    pub fn policy_at_0(&self, i: usize, p: usize) -> usize {
        self.policy.action(i, 0, p)
    }

    /// Realized value of path `i` at epoch `t` and position `p`.
    pub fn realized_value(&self, t: usize, i: usize, p: usize) -> f64 {
        self.value_trace[(t * self.n_path + i) * self.n_pos + p]
    }
}

/// Sample mean and standard error `sd / sqrt(n)`.
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Runs the backward induction on `paths`.
pub fn run_lsm(
    paths: &PathPanel,
    model: &MdpModel,
    spec: &BasisSpec,
    regressor: &dyn Regressor,
) -> Result<LsmResult> {
    check_dim("panel epochs", model.n_dec(), paths.n_dec())?;
    check_dim("panel dimension", model.dim(), paths.dim())?;
    spec.validate(model.dim())?;

    let n = paths.n_path();
    let n_pos = model.n_pos();
    let horizon = model.horizon();
    let m = basis_dimension(spec);
    let slab = n * n_pos;
    let kernel = model.kernel();

    let mut values = vec![0.0; model.n_dec() * slab];
    let scrap = model.scrap(&paths.states_at(horizon))?;
    for i in 0..n {
        for p in 0..n_pos {
            values[horizon * slab + i * n_pos + p] = scrap[(i, p)];
        }
    }

    let mut coeffs = vec![0.0; horizon * n_pos * m];
    let mut epochs: Vec<Vec<usize>> = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let states = paths.states_at(t);
        let x = design_data(&states, spec)?;
        let (head, tail) = values.split_at_mut((t + 1) * slab);
        let next = &tail[..slab];
        let current = &mut head[t * slab..];

        let ys = DMatrix::from_fn(n, n_pos, |i, p| next[i * n_pos + p]);
        let fitted = apply_regressor_many(regressor, &x, &ys, t)?;
        for (p, c) in fitted.iter().enumerate() {
            coeffs[(t * n_pos + p) * m..][..m].copy_from_slice(c.values());
        }
        let cont = continuation_rows(&coeffs[t * n_pos * m..][..n_pos * m], n_pos, &x);
        let rewards = model.rewards(&states, t)?;

        let mut acts = vec![0usize; slab];
        current
            .par_chunks_mut(n_pos)
            .zip(acts.par_chunks_mut(n_pos))
            .enumerate()
            .for_each(|(i, (v_out, a_out))| {
                let cont_i = &cont[i * n_pos..][..n_pos];
                let next_i = &next[i * n_pos..][..n_pos];
                for p in 0..n_pos {
                    let r = rewards.actions(i, p);
                    let (a, _) = best_action(kernel, p, r, cont_i);
                    a_out[p] = a;
                    v_out[p] = r[a] + kernel.mix(p, a, next_i);
                }
            });
        epochs[t] = acts;
    }

    let path_values = DMatrix::from_fn(n, n_pos, |i, p| values[i * n_pos + p]);
    let (value_estimate, std_error) = (0..n_pos)
        .map(|p| mean_and_se(&path_values.as_slice()[p * n..(p + 1) * n]))
        .unzip();

    Ok(LsmResult {
        fit: ContinuationFit::new(model.n_dec(), n_pos, m, coeffs)?,
        path_values,
        value_estimate,
        std_error,
        policy: PolicyTable::from_epochs(n, n_pos, &epochs),
        value_trace: values,
        n_path: n,
        n_pos,
    })
}

fn check_states(model: &MdpModel, states: &DMatrix<f64>) -> Result<()> {
    check_dim("state dimension", model.dim(), states.ncols())
}

/// Fitted value function at epoch `t <= T` for a batch of states,
/// `[n x n_pos]`. At the horizon this is the scrap value.
pub fn fitted_values_batch(
    fit: &ContinuationFit,
    model: &MdpModel,
    spec: &BasisSpec,
    t: usize,
    states: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    fit.check_against(model, spec)?;
    check_states(model, states)?;
    let horizon = model.horizon();
    if t > horizon {
        return Err(LsmError::IndexOutOfRange {
            what: "epoch",
            index: t,
            bound: horizon + 1,
        });
    }
    if t == horizon {
        return model.scrap(states);
    }
    let n_pos = model.n_pos();
    let x = design_data(states, spec)?;
    let cont = fit.continuation(t, &x);
    let rewards = model.rewards(states, t)?;
    Ok(DMatrix::from_fn(states.nrows(), n_pos, |i, p| {
        best_action(
            model.kernel(),
            p,
            rewards.actions(i, p),
            &cont[i * n_pos..][..n_pos],
        )
        .1
    }))
}

/// Fitted actions at epoch `t < T` for a batch of states, `[i][p]`.
pub fn fitted_actions_batch(
    fit: &ContinuationFit,
    model: &MdpModel,
    spec: &BasisSpec,
    t: usize,
    states: &DMatrix<f64>,
) -> Result<Vec<usize>> {
    fit.check_against(model, spec)?;
    check_states(model, states)?;
    if t >= model.horizon() {
        return Err(LsmError::IndexOutOfRange {
            what: "decision epoch",
            index: t,
            bound: model.horizon(),
        });
    }
    let n_pos = model.n_pos();
    let x = design_data(states, spec)?;
    let cont = fit.continuation(t, &x);
    let rewards: RewardTable = model.rewards(states, t)?;
    let mut out = vec![0; states.nrows() * n_pos];
    for i in 0..states.nrows() {
        for p in 0..n_pos {
            out[i * n_pos + p] = best_action(
                model.kernel(),
                p,
                rewards.actions(i, p),
                &cont[i * n_pos..][..n_pos],
            )
            .0;
        }
    }
    Ok(out)
}

fn single_state(model: &MdpModel, p: usize, z: &[f64]) -> Result<DMatrix<f64>> {
    if p >= model.n_pos() {
        return Err(LsmError::IndexOutOfRange {
            what: "position",
            index: p,
            bound: model.n_pos(),
        });
    }
    Ok(DMatrix::from_row_slice(1, z.len(), z))
}

/// `max_a { r_t(p, z, a) + sum_{p'} alpha * c_t(p', z) }`, or the scrap at the
/// horizon.
pub fn fitted_value(
    fit: &ContinuationFit,
    model: &MdpModel,
    spec: &BasisSpec,
    t: usize,
    p: usize,
    z: &[f64],
) -> Result<f64> {
    let states = single_state(model, p, z)?;
    Ok(fitted_values_batch(fit, model, spec, t, &states)?[(0, p)])
}

/// The fitted decision rule at `(t, p, z)`.
pub fn fitted_policy_at(
    fit: &ContinuationFit,
    model: &MdpModel,
    spec: &BasisSpec,
    t: usize,
    p: usize,
    z: &[f64],
) -> Result<usize> {
    let states = single_state(model, p, z)?;
    Ok(fitted_actions_batch(fit, model, spec, t, &states)?[p])
}
