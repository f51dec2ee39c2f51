//! Built-in models.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{MdpModel, RewardTable, TransitionKernel};

/// Position index of an exercised option.
pub const EXERCISED: usize = 0;
/// Position index of a live option.
pub const UNEXERCISED: usize = 1;
/// Action index for holding on.
pub const DONT_EXERCISE: usize = 0;
/// Action index for exercising.
pub const EXERCISE: usize = 1;

/// Bermudan put with exercise dates at every epoch.
///
/// `rate` is the per-step interest rate (annual rate times the step), and
/// the payoff at epoch `t` is discounted by `exp(-rate * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BermudanPut {
    pub strike: f64,
    pub rate: f64,
    pub n_dec: usize,
}

impl BermudanPut {
    pub fn payoff(&self, z: f64, t: usize) -> f64 {
        (-self.rate * t as f64).exp() * (self.strike - z).max(0.0)
    }

    /// `control[EXERCISED] = [EXERCISED, EXERCISED]`,
    /// `control[UNEXERCISED] = [UNEXERCISED, EXERCISED]`.
    pub fn kernel() -> TransitionKernel {
        TransitionKernel::deterministic(vec![
            vec![EXERCISED, EXERCISED],
            vec![UNEXERCISED, EXERCISED],
        ])
        .expect("static control map is rectangular")
    }

    pub fn into_model(self) -> Result<MdpModel> {
        let reward = move |states: &DMatrix<f64>, t: usize| {
            let mut table = RewardTable::zeros(states.nrows(), 2, 2);
            for (i, &z) in states.column(0).iter().enumerate() {
                table.set(i, UNEXERCISED, EXERCISE, self.payoff(z, t));
            }
            table
        };
        let horizon = self.n_dec.saturating_sub(1);
        let scrap = move |states: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(states.nrows(), 2);
            for (i, &z) in states.column(0).iter().enumerate() {
                out[(i, UNEXERCISED)] = self.payoff(z, horizon);
            }
            out
        };
        MdpModel::new(
            Self::kernel(),
            self.n_dec,
            1,
            Arc::new(reward),
            Arc::new(scrap),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewards_only_for_live_exercise() {
        let model = BermudanPut {
            strike: 40.0,
            rate: 0.0,
            n_dec: 3,
        }
        .into_model()
        .unwrap();
        let states = DMatrix::from_column_slice(2, 1, &[36.0, 44.0]);
        let r = model.rewards(&states, 1).unwrap();
        assert_eq!(r.get(0, UNEXERCISED, EXERCISE), 4.0);
        assert_eq!(r.get(1, UNEXERCISED, EXERCISE), 0.0);
        assert_eq!(r.get(0, EXERCISED, EXERCISE), 0.0);
        assert_eq!(r.get(0, UNEXERCISED, DONT_EXERCISE), 0.0);
        let s = model.scrap(&states).unwrap();
        assert_eq!(s[(0, UNEXERCISED)], 4.0);
        assert_eq!(s[(0, EXERCISED)], 0.0);
    }

    #[test]
    fn payoff_is_discounted() {
        let put = BermudanPut {
            strike: 40.0,
            rate: 0.0012,
            n_dec: 51,
        };
        assert!((put.payoff(36.0, 50) - 4.0 * (-0.06f64).exp()).abs() < 1e-15);
    }
}
