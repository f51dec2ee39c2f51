//! Finite-horizon MDP with a controlled discrete position and an uncontrolled
//! continuous state.
//!
//! Positions and actions are 0-based indices. Time runs over decision epochs
//! `0..n_dec`; epoch `n_dec - 1` is the horizon `T` where only the scrap
//! function pays out. Any discounting lives inside the reward and scrap
//! values.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, LsmError, Result};

/// Tolerance on the row sums of a stochastic transition tensor.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Transition law of the position component.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKernel {
    /// `alpha[p][a][p2]`, flattened row-major over `[n_pos][n_action][n_pos]`.
    Stochastic {
        n_pos: usize,
        n_action: usize,
        alpha: Vec<f64>,
    },
    /// `control[p][a]` is the position reached with probability one,
    /// flattened row-major over `[n_pos][n_action]`.
    Deterministic {
        n_pos: usize,
        n_action: usize,
        control: Vec<usize>,
    },
}

impl TransitionKernel {
    pub fn stochastic(alpha: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_pos = alpha.len();
        let n_action = alpha.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_pos * n_action * n_pos);
        for row in &alpha {
            check_dim("stochastic kernel actions", n_action, row.len())?;
            for dist in row {
                check_dim("stochastic kernel successors", n_pos, dist.len())?;
                flat.extend_from_slice(dist);
            }
        }
        Ok(Self::Stochastic {
            n_pos,
            n_action,
            alpha: flat,
        })
    }

    pub fn deterministic(control: Vec<Vec<usize>>) -> Result<Self> {
        let n_pos = control.len();
        let n_action = control.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_pos * n_action);
        for row in &control {
            check_dim("control map actions", n_action, row.len())?;
            flat.extend_from_slice(row);
        }
        Ok(Self::Deterministic {
            n_pos,
            n_action,
            control: flat,
        })
    }

    pub fn n_pos(&self) -> usize {
        match self {
            Self::Stochastic { n_pos, .. } | Self::Deterministic { n_pos, .. } => *n_pos,
        }
    }

    pub fn n_action(&self) -> usize {
        match self {
            Self::Stochastic { n_action, .. } | Self::Deterministic { n_action, .. } => *n_action,
        }
    }

    /// One-hot stochastic tensor equivalent to a deterministic control map.
    pub fn to_stochastic(&self) -> Self {
        match self {
            Self::Stochastic { .. } => self.clone(),
            Self::Deterministic {
                n_pos,
                n_action,
                control,
            } => {
                let mut alpha = vec![0.0; n_pos * n_action * n_pos];
                for (pa, &target) in control.iter().enumerate() {
                    alpha[pa * n_pos + target] = 1.0;
                }
                Self::Stochastic {
                    n_pos: *n_pos,
                    n_action: *n_action,
                    alpha,
                }
            }
        }
    }

    /// Checks probabilities, row sums and control targets.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Stochastic {
                n_pos,
                n_action,
                alpha,
            } => {
                check_dim(
                    "stochastic kernel size",
                    n_pos * n_action * n_pos,
                    alpha.len(),
                )?;
                for p in 0..*n_pos {
                    for a in 0..*n_action {
                        let row = &alpha[(p * n_action + a) * n_pos..][..*n_pos];
                        if row
                            .iter()
                            .any(|&x| !x.is_finite() || !(0.0..=1.0).contains(&x))
                        {
                            return Err(LsmError::InvalidModel(format!(
                                "transition probability outside [0, 1] at position {p}, action {a}"
                            )));
                        }
                        let sum: f64 = row.iter().sum();
                        if (sum - 1.0).abs() > ROW_SUM_TOL {
                            return Err(LsmError::RowSum {
                                position: p,
                                action: a,
                                sum,
                            });
                        }
                    }
                }
            }
            Self::Deterministic {
                n_pos,
                n_action,
                control,
            } => {
                check_dim("control map size", n_pos * n_action, control.len())?;
                for (pa, &target) in control.iter().enumerate() {
                    if target >= *n_pos {
                        return Err(LsmError::InvalidControl {
                            position: pa / n_action,
                            action: pa % n_action,
                            target,
                            n_pos: *n_pos,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_pa(&self, p: usize, a: usize) -> Result<()> {
        if p >= self.n_pos() {
            return Err(LsmError::IndexOutOfRange {
                what: "position",
                index: p,
                bound: self.n_pos(),
            });
        }
        if a >= self.n_action() {
            return Err(LsmError::IndexOutOfRange {
                what: "action",
                index: a,
                bound: self.n_action(),
            });
        }
        Ok(())
    }

    pub fn transition_prob(&self, p: usize, a: usize, p2: usize) -> Result<f64> {
        self.check_pa(p, a)?;
        if p2 >= self.n_pos() {
            return Err(LsmError::IndexOutOfRange {
                what: "successor position",
                index: p2,
                bound: self.n_pos(),
            });
        }
        Ok(match self {
            Self::Stochastic {
                n_pos,
                n_action,
                alpha,
            } => alpha[(p * n_action + a) * n_pos + p2],
            Self::Deterministic {
                n_action, control, ..
            } => {
                if control[p * n_action + a] == p2 {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// `sum_{p2} alpha[p][a][p2] * values[p2]`; a deterministic kernel
    /// returns the successor's entry without any arithmetic.
    pub fn successor_mix(&self, p: usize, a: usize, values: &[f64]) -> Result<f64> {
        self.check_pa(p, a)?;
        check_dim("successor values", self.n_pos(), values.len())?;
        Ok(self.mix(p, a, values))
    }

    #[inline]
    pub(crate) fn mix(&self, p: usize, a: usize, values: &[f64]) -> f64 {
        match self {
            Self::Stochastic {
                n_pos,
                n_action,
                alpha,
            } => {
                let row = &alpha[(p * n_action + a) * n_pos..][..*n_pos];
                row.iter().zip(values).map(|(w, v)| w * v).sum()
            }
            Self::Deterministic {
                n_action, control, ..
            } => values[control[p * n_action + a]],
        }
    }
}

/// Rewards `r_t(p, z, a)` for a batch of states, laid out `[n][n_pos][n_action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    n: usize,
    n_pos: usize,
    n_action: usize,
    data: Vec<f64>,
}

impl RewardTable {
    pub fn zeros(n: usize, n_pos: usize, n_action: usize) -> Self {
        Self {
            n,
            n_pos,
            n_action,
            data: vec![0.0; n * n_pos * n_action],
        }
    }

    pub fn from_vec(n: usize, n_pos: usize, n_action: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("reward table size", n * n_pos * n_action, data.len())?;
        Ok(Self {
            n,
            n_pos,
            n_action,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.n_pos, self.n_action)
    }

    #[inline]
    pub fn get(&self, i: usize, p: usize, a: usize) -> f64 {
        self.data[(i * self.n_pos + p) * self.n_action + a]
    }

    #[inline]
    pub fn set(&mut self, i: usize, p: usize, a: usize, value: f64) {
        self.data[(i * self.n_pos + p) * self.n_action + a] = value;
    }

    /// Rewards of every action at state `i`, position `p`.
    #[inline]
    pub fn actions(&self, i: usize, p: usize) -> &[f64] {
        &self.data[(i * self.n_pos + p) * self.n_action..][..self.n_action]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Batch reward `r_t`: states `[n x dim]` and epoch `t` to a reward table.
///
/// Implementations must be pure; they are called concurrently.
pub trait Reward: Send + Sync {
    fn reward(&self, states: &DMatrix<f64>, t: usize) -> RewardTable;
}

/// Batch scrap `r_T`: states `[n x dim]` to a `[n x n_pos]` matrix.
pub trait Scrap: Send + Sync {
    fn scrap(&self, states: &DMatrix<f64>) -> DMatrix<f64>;
}

impl<F> Reward for F
where
    F: Fn(&DMatrix<f64>, usize) -> RewardTable + Send + Sync,
{
    fn reward(&self, states: &DMatrix<f64>, t: usize) -> RewardTable {
        self(states, t)
    }
}

impl<F> Scrap for F
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn scrap(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        self(states)
    }
}

#[derive(Clone)]
pub struct MdpModel {
    n_pos: usize,
    n_action: usize,
    n_dec: usize,
    dim: usize,
    kernel: TransitionKernel,
    reward: Arc<dyn Reward>,
    scrap: Arc<dyn Scrap>,
}

impl fmt::Debug for MdpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MdpModel")
            .field("n_pos", &self.n_pos)
            .field("n_action", &self.n_action)
            .field("n_dec", &self.n_dec)
            .field("dim", &self.dim)
            .field("kernel", &self.kernel)
            .finish_non_exhaustive()
    }
}

impl MdpModel {
    /// Builds and validates a model. Position and action counts are read
    /// off the kernel.
    pub fn new(
        kernel: TransitionKernel,
        n_dec: usize,
        dim: usize,
        reward: Arc<dyn Reward>,
        scrap: Arc<dyn Scrap>,
    ) -> Result<Self> {
        let model = Self {
            n_pos: kernel.n_pos(),
            n_action: kernel.n_action(),
            n_dec,
            dim,
            kernel,
            reward,
            scrap,
        };
        validate_model(&model)?;
        Ok(model)
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_action(&self) -> usize {
        self.n_action
    }

    /// Number of decision epochs, `T + 1`.
    pub fn n_dec(&self) -> usize {
        self.n_dec
    }

    /// Horizon index `T`.
    pub fn horizon(&self) -> usize {
        self.n_dec - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn transition_prob(&self, p: usize, a: usize, p2: usize) -> Result<f64> {
        self.kernel.transition_prob(p, a, p2)
    }

    pub fn successor_mix(&self, p: usize, a: usize, values: &[f64]) -> Result<f64> {
        self.kernel.successor_mix(p, a, values)
    }

    /// Evaluates the reward at epoch `t < T` and checks its shape and
    /// finiteness.
    pub fn rewards(&self, states: &DMatrix<f64>, t: usize) -> Result<RewardTable> {
        if t >= self.horizon() {
            return Err(LsmError::IndexOutOfRange {
                what: "reward epoch",
                index: t,
                bound: self.horizon(),
            });
        }
        check_dim("state dimension", self.dim, states.ncols())?;
        let table = self.reward.reward(states, t);
        let (n, n_pos, n_action) = table.shape();
        check_dim("reward rows", states.nrows(), n)?;
        check_dim("reward positions", self.n_pos, n_pos)?;
        check_dim("reward actions", self.n_action, n_action)?;
        if table.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(LsmError::NonFinite("reward"));
        }
        Ok(table)
    }

    pub fn scrap(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("state dimension", self.dim, states.ncols())?;
        let values = self.scrap.scrap(states);
        check_dim("scrap rows", states.nrows(), values.nrows())?;
        check_dim("scrap positions", self.n_pos, values.ncols())?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(LsmError::NonFinite("scrap"));
        }
        Ok(values)
    }
}

/// Returns the first violated model invariant, if any.
pub fn validate_model(model: &MdpModel) -> Result<()> {
    if model.n_pos == 0 {
        return Err(LsmError::InvalidModel("n_pos must be at least 1".into()));
    }
    if model.n_action == 0 {
        return Err(LsmError::InvalidModel("n_action must be at least 1".into()));
    }
    if model.n_dec < 2 {
        return Err(LsmError::InvalidModel("n_dec must be at least 2".into()));
    }
    if model.dim == 0 {
        return Err(LsmError::InvalidModel("dim must be at least 1".into()));
    }
    check_dim("kernel positions", model.n_pos, model.kernel.n_pos())?;
    check_dim("kernel actions", model.n_action, model.kernel.n_action())?;
    model.kernel.validate()
}
