//! Least squares Monte Carlo for finite-horizon Markov decision processes
//! whose state pairs a controlled discrete position with an uncontrolled
//! continuous component, plus pathwise dual bounds from nested simulation.
//!
//! The usual pipeline:
//!
//! 1. build an [`MdpModel`] (or use [`models::BermudanPut`]),
//! 2. simulate a [`PathPanel`] with [`gbm_paths`],
//! 3. run [`run_lsm`] with a [`BasisSpec`] and a [`Regressor`],
//! 4. on a fresh panel, compute [`path_policy`], [`additive_duals`] and
//!    [`bounds`], then [`confidence_interval`].

pub mod artifact;
pub mod basis;
pub mod dual;
pub mod error;
pub mod lsm;
pub mod model;
pub mod models;
pub mod regression;
pub mod simulate;

pub use basis::{
    basis_dimension, build_design_matrix, evaluate_basis_row, BasisSpec, BasisType, DesignMatrix,
};
pub use dual::{
    additive_duals, bounds, confidence_interval, path_policy, BoundResult, BoundSummary,
    MartIncrements,
};
pub use error::{LsmError, Result};
pub use lsm::{fitted_policy_at, fitted_value, run_lsm, ContinuationFit, LsmResult, PolicyTable};
pub use model::{validate_model, MdpModel, RewardTable, TransitionKernel};
pub use regression::{
    apply_regressor, fit_qr, fit_svd, Coefficients, QrRegressor, Regressor, SvdRegressor,
};
pub use simulate::{gbm_paths, nested_gbm, rng_stream, GbmParams, PathPanel, SubsimPanel};
