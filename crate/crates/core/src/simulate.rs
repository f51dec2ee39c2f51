//! Seedable geometric Brownian motion panels and nested one-step
//! sub-simulations.
//!
//! Every outer path (an antithetic pair shares one) and every nested
//! `(path, epoch)` cell draws from its own ChaCha stream keyed by index, so
//! panels are bit-identical whatever the rayon pool size.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_dim, LsmError, Result};

/// Nested streams live above this id so they never collide with path streams.
pub const NESTED_STREAM_BASE: u64 = 1 << 62;

/// Reproducible stream of standard normal variates.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

pub fn rng_stream(seed: u64, stream_id: u64) -> NormalStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    NormalStream { rng }
}

/// Simulated continuous states, `data[i][j][k]` = component `j` of `Z_k` on
/// path `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPanel {
    n_path: usize,
    dim: usize,
    n_dec: usize,
    data: Vec<f64>,
}

impl PathPanel {
    pub fn new(n_path: usize, dim: usize, n_dec: usize, data: Vec<f64>) -> Result<Self> {
        if n_path == 0 || dim == 0 || n_dec == 0 {
            return Err(LsmError::InvalidSimulation(
                "panel dimensions must be positive".into(),
            ));
        }
        check_dim("panel size", n_path * dim * n_dec, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LsmError::NonFinite("path panel"));
        }
        Ok(Self {
            n_path,
            dim,
            n_dec,
            data,
        })
    }

    /// Builds a panel from `f(i, j, k)`.
    pub fn from_fn(
        n_path: usize,
        dim: usize,
        n_dec: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n_path * dim * n_dec);
        for i in 0..n_path {
            for j in 0..dim {
                for k in 0..n_dec {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(n_path, dim, n_dec, data)
    }

    pub fn n_path(&self) -> usize {
        self.n_path
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_dec(&self) -> usize {
        self.n_dec
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.n_dec + k]
    }

    /// Path `i`, component `j` over all epochs.
    pub fn series(&self, i: usize, j: usize) -> &[f64] {
        &self.data[(i * self.dim + j) * self.n_dec..][..self.n_dec]
    }

    /// Cross-section at epoch `k` as an `[n_path x dim]` matrix.
    pub fn states_at(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_path, self.dim, |i, j| self.get(i, j, k))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Nested one-step draws, `data[s][j][k][l]` = component `j` of
/// `f_{l+1}(W^{(s)}, Z_l(omega_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsimPanel {
    n_subsim: usize,
    dim: usize,
    n_path: usize,
    n_steps: usize,
    data: Vec<f64>,
}

impl SubsimPanel {
    pub fn new(
        n_subsim: usize,
        dim: usize,
        n_path: usize,
        n_steps: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if n_subsim == 0 || dim == 0 || n_path == 0 || n_steps == 0 {
            return Err(LsmError::InvalidSimulation(
                "nested panel dimensions must be positive".into(),
            ));
        }
        check_dim(
            "nested panel size",
            n_subsim * dim * n_path * n_steps,
            data.len(),
        )?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LsmError::NonFinite("nested panel"));
        }
        Ok(Self {
            n_subsim,
            dim,
            n_path,
            n_steps,
            data,
        })
    }

    /// Builds a panel from `f(s, j, k, l)`.
    pub fn from_fn(
        n_subsim: usize,
        dim: usize,
        n_path: usize,
        n_steps: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n_subsim * dim * n_path * n_steps);
        for s in 0..n_subsim {
            for j in 0..dim {
                for k in 0..n_path {
                    for l in 0..n_steps {
                        data.push(f(s, j, k, l));
                    }
                }
            }
        }
        Self::new(n_subsim, dim, n_path, n_steps, data)
    }

    pub fn n_subsim(&self) -> usize {
        self.n_subsim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_path(&self) -> usize {
        self.n_path
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn get(&self, s: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((s * self.dim + j) * self.n_path + k) * self.n_steps + l]
    }

    /// All nested successors of epoch `l`, as a `[(n_path * n_subsim) x dim]`
    /// matrix with row `k * n_subsim + s`.
    pub fn successors_at(&self, l: usize) -> DMatrix<f64> {
        let n_sub = self.n_subsim;
        DMatrix::from_fn(self.n_path * n_sub, self.dim, |row, j| {
            self.get(row % n_sub, j, row / n_sub, l)
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Geometric Brownian motion with per-step drift and volatility, i.e. the
/// annual figures already scaled by the step and its square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub start: f64,
    pub drift: f64,
    pub vol: f64,
    pub antithetic: bool,
}

impl GbmParams {
    /// Scales annual rate and volatility to one step of length `step`.
    pub fn from_annual(start: f64, rate: f64, vol: f64, step: f64, antithetic: bool) -> Self {
        Self {
            start,
            drift: rate * step,
            vol: vol * step.sqrt(),
            antithetic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.start.is_finite()) {
            return Err(LsmError::InvalidSimulation(format!(
                "start must be positive, got {}",
                self.start
            )));
        }
        if !(self.vol >= 0.0 && self.vol.is_finite()) || !self.drift.is_finite() {
            return Err(LsmError::InvalidSimulation(
                "drift must be finite and vol nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// One step from `z` driven by the normal draw `w`.
    #[inline]
    pub fn step(&self, z: f64, w: f64) -> f64 {
        ((self.drift - 0.5 * self.vol * self.vol) + self.vol * w).exp() * z
    }
}

/// Simulates `n_path` one-dimensional GBM paths over `n_dec` epochs.
pub fn gbm_paths(params: &GbmParams, n_dec: usize, n_path: usize, seed: u64) -> Result<PathPanel> {
    params.validate()?;
    if n_path == 0 || n_dec == 0 {
        return Err(LsmError::InvalidSimulation(
            "n_path and n_dec must be positive".into(),
        ));
    }
    if params.antithetic && !n_path.is_multiple_of(2) {
        return Err(LsmError::InvalidSimulation(format!(
            "antithetic sampling needs an even number of paths, got {n_path}"
        )));
    }

    let mut data = vec![0.0; n_path * n_dec];
    let group = if params.antithetic { 2 } else { 1 };
    data.par_chunks_mut(group * n_dec)
        .enumerate()
        .for_each(|(g, chunk)| {
            let mut stream = rng_stream(seed, g as u64);
            let (first, rest) = chunk.split_at_mut(n_dec);
            first[0] = params.start;
            if let Some(mirror) = rest.first_mut() {
                *mirror = params.start;
            }
            for k in 1..n_dec {
                let w = stream.next_normal();
                first[k] = params.step(first[k - 1], w);
                if !rest.is_empty() {
                    rest[k] = params.step(rest[k - 1], -w);
                }
            }
        });
    PathPanel::new(n_path, 1, n_dec, data)
}

/// Draws `n_subsim` independent one-step successors of every state
/// `Z_l(omega_k)`, `l < n_dec - 1`. Components evolve as independent GBMs
/// with the same parameters; `start` is unused.
pub fn nested_gbm(
    paths: &PathPanel,
    params: &GbmParams,
    n_subsim: usize,
    seed: u64,
) -> Result<SubsimPanel> {
    if n_subsim == 0 {
        return Err(LsmError::InvalidSimulation(
            "n_subsim must be at least 1".into(),
        ));
    }
    if !(params.vol >= 0.0 && params.vol.is_finite()) || !params.drift.is_finite() {
        return Err(LsmError::InvalidSimulation(
            "drift must be finite and vol nonnegative".into(),
        ));
    }
    if params.antithetic && !n_subsim.is_multiple_of(2) {
        return Err(LsmError::InvalidSimulation(format!(
            "antithetic sampling needs an even n_subsim, got {n_subsim}"
        )));
    }
    if paths.n_dec() < 2 {
        return Err(LsmError::InvalidSimulation(
            "nested simulation needs at least two epochs".into(),
        ));
    }
    let dim = paths.dim();
    let n_path = paths.n_path();
    let n_steps = paths.n_dec() - 1;

    // cell (k, l) -> [s][j] successors
    let cells: Vec<Vec<f64>> = (0..n_path * n_steps)
        .into_par_iter()
        .map(|cell| {
            let (k, l) = (cell / n_steps, cell % n_steps);
            let mut stream = rng_stream(seed, NESTED_STREAM_BASE + cell as u64);
            let mut out = vec![0.0; n_subsim * dim];
            let mut s = 0;
            while s < n_subsim {
                for j in 0..dim {
                    let z = paths.get(k, j, l);
                    let w = stream.next_normal();
                    out[s * dim + j] = params.step(z, w);
                    if params.antithetic {
                        out[(s + 1) * dim + j] = params.step(z, -w);
                    }
                }
                s += if params.antithetic { 2 } else { 1 };
            }
            out
        })
        .collect();

    let mut data = vec![0.0; n_subsim * dim * n_path * n_steps];
    for (cell, values) in cells.iter().enumerate() {
        let (k, l) = (cell / n_steps, cell % n_steps);
        for s in 0..n_subsim {
            for j in 0..dim {
                data[((s * dim + j) * n_path + k) * n_steps + l] = values[s * dim + j];
            }
        }
    }
    SubsimPanel::new(n_subsim, dim, n_path, n_steps, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(drift: f64, vol: f64, antithetic: bool) -> GbmParams {
        GbmParams {
            start: 36.0,
            drift,
            vol,
            antithetic,
        }
    }

    #[test]
    fn deterministic_growth_without_vol() {
        let delta = 0.0012;
        let panel = gbm_paths(&params(delta, 0.0, false), 51, 3, 1).unwrap();
        for i in 0..3 {
            for k in 0..51 {
                let expect = 36.0 * (delta * k as f64).exp();
                assert!((panel.get(i, 0, k) - expect).abs() <= 1e-12 * expect);
            }
        }
        let flat = gbm_paths(&params(0.0, 0.0, true), 4, 6, 1).unwrap();
        assert!(flat.as_slice().iter().all(|&x| x == 36.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(gbm_paths(&params(0.0, 0.1, true), 5, 3, 0).is_err());
        let mut p = params(0.0, 0.1, false);
        p.start = 0.0;
        assert!(gbm_paths(&p, 5, 3, 0).is_err());
        p.start = 1.0;
        p.vol = -0.1;
        assert!(gbm_paths(&p, 5, 3, 0).is_err());
    }

    #[test]
    fn antithetic_pairs_mirror() {
        let p = params(0.001, 0.03, true);
        let panel = gbm_paths(&p, 20, 8, 9).unwrap();
        for m in 0..4 {
            for k in 0..20 {
                let prod = panel.get(2 * m, 0, k) * panel.get(2 * m + 1, 0, k);
                let expect = 36.0 * 36.0 * ((2.0 * p.drift - p.vol * p.vol) * k as f64).exp();
                assert!((prod - expect).abs() <= 1e-10 * expect);
            }
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<f64> = rng_stream(7, 3).take(100).collect();
        let b: Vec<f64> = rng_stream(7, 3).take(100).collect();
        assert_eq!(a, b);
        let c: Vec<f64> = rng_stream(7, 4).take(100).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn stream_independence() {
        let n = 10_000;
        let a: Vec<f64> = rng_stream(11, 0).take(n).collect();
        let b: Vec<f64> = rng_stream(11, 1).take(n).collect();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let rho = cov / (va * vb).sqrt();
        assert!(rho.abs() < 0.05, "rho = {rho}");
    }

    #[test]
    fn normal_moments() {
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for w in rng_stream(2024, 17).take(n) {
            sum += w;
            sum2 += w * w;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean = {mean}");
        assert!((var - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn nested_without_vol_is_one_deterministic_step() {
        let p = params(0.002, 0.0, false);
        let panel = gbm_paths(&params(0.002, 0.05, false), 6, 5, 3).unwrap();
        for n_subsim in [1, 4] {
            let sub = nested_gbm(&panel, &p, n_subsim, 8).unwrap();
            for s in 0..n_subsim {
                for k in 0..5 {
                    for l in 0..5 {
                        let expect = 0.002f64.exp() * panel.get(k, 0, l);
                        assert!((sub.get(s, 0, k, l) - expect).abs() <= 1e-13 * expect);
                        assert_eq!(sub.get(s, 0, k, l), p.step(panel.get(k, 0, l), 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn nested_mean_matches_one_step_expectation() {
        let p = params(0.0012, 0.2 * 0.02f64.sqrt(), false);
        let panel = gbm_paths(&p, 3, 2, 5).unwrap();
        let n_subsim = 20_000;
        let sub = nested_gbm(&panel, &p, n_subsim, 6).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                let draws: Vec<f64> = (0..n_subsim).map(|s| sub.get(s, 0, k, l)).collect();
                let mean = draws.iter().sum::<f64>() / n_subsim as f64;
                let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                    / (n_subsim - 1) as f64)
                    .sqrt();
                let expect = p.drift.exp() * panel.get(k, 0, l);
                assert!((mean - expect).abs() < 3.0 * sd / (n_subsim as f64).sqrt());
            }
        }
    }

    #[test]
    fn nested_rejects_bad_counts() {
        let panel = gbm_paths(&params(0.0, 0.1, false), 4, 2, 1).unwrap();
        assert!(nested_gbm(&panel, &params(0.0, 0.1, false), 0, 1).is_err());
        assert!(nested_gbm(&panel, &params(0.0, 0.1, true), 3, 1).is_err());
    }

    #[test]
    fn successor_rows_are_path_major() {
        let panel = PathPanel::from_fn(2, 1, 3, |i, _, k| (10 * i + k + 1) as f64).unwrap();
        let sub = SubsimPanel::from_fn(3, 1, 2, 2, |s, _, k, l| {
            panel.get(k, 0, l) + s as f64 / 10.0
        })
        .unwrap();
        let m = sub.successors_at(1);
        assert_eq!(m.nrows(), 6);
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(4, 0)], 12.1);
    }
}
