//! Shared fixtures: a reflecting random walk on a small lattice whose path
//! panel enumerates every trajectory once, and an exhaustive Bellman oracle
//! that never touches the library's regression code.

#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use lsmdual::{MdpModel, PathPanel, RewardTable, TransitionKernel};
use nalgebra::DMatrix;

pub const LATTICE: usize = 5;
pub const N_DEC: usize = 4;
pub const Z0: usize = 2;

/// Up/down move with probability 1/2, reflected at the lattice edges.
pub fn step(z: usize, up: bool) -> usize {
    if up {
        (z + 1).min(LATTICE - 1)
    } else {
        z.saturating_sub(1)
    }
}

/// Every trajectory of the walk from `Z0`, one per row, each with weight
/// `2^-(N_DEC - 1)`.
pub fn enumerated_panel() -> PathPanel {
    let steps = N_DEC - 1;
    let n_path = 1 << steps;
    PathPanel::from_fn(n_path, 1, N_DEC, |i, _, k| {
        let mut z = Z0;
        for s in 0..k {
            z = step(z, (i >> s) & 1 == 1);
        }
        z as f64
    })
    .unwrap()
}

fn payoff(z: f64, t: usize) -> f64 {
    (3.0 - z).max(0.0) * 0.9f64.powi(t as i32)
}

fn running(z: f64, t: usize) -> f64 {
    0.1 * z - 0.05 * t as f64
}

/// Two positions (0 stopped, 1 live), two actions (0 continue, 1 stop). A
/// live holder earns a running reward while continuing and the payoff when
/// stopping.
pub fn reward_table(states: &DMatrix<f64>, t: usize) -> RewardTable {
    let mut r = RewardTable::zeros(states.nrows(), 2, 2);
    for (i, &z) in states.column(0).iter().enumerate() {
        r.set(i, 1, 0, running(z, t));
        r.set(i, 1, 1, payoff(z, t));
    }
    r
}

pub fn scrap_table(states: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(states.nrows(), 2);
    for (i, &z) in states.column(0).iter().enumerate() {
        s[(i, 1)] = payoff(z, N_DEC - 1) + 0.25;
    }
    s
}

pub fn stopping_kernel() -> TransitionKernel {
    TransitionKernel::deterministic(vec![vec![0, 0], vec![1, 0]]).unwrap()
}

/// Same game but stopping only succeeds with probability 0.7.
pub fn leaky_kernel() -> TransitionKernel {
    TransitionKernel::stochastic(vec![
        vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        vec![vec![0.0, 1.0], vec![0.7, 0.3]],
    ])
    .unwrap()
}

pub fn lattice_model(kernel: TransitionKernel) -> MdpModel {
    MdpModel::new(
        kernel,
        N_DEC,
        1,
        Arc::new(reward_table),
        Arc::new(scrap_table),
    )
    .unwrap()
}

/// Exact value table `v[t][p][z]` by exhaustive Bellman recursion.
pub fn bellman(kernel: &TransitionKernel) -> Vec<Vec<Vec<f64>>> {
    let probs = |p: usize, a: usize| -> Vec<f64> {
        (0..2)
            .map(|q| kernel.transition_prob(p, a, q).unwrap())
            .collect()
    };
    let mut v = vec![vec![vec![0.0; LATTICE]; 2]; N_DEC];
    for z in 0..LATTICE {
        let s = scrap_table(&DMatrix::from_element(1, 1, z as f64));
        for p in 0..2 {
            v[N_DEC - 1][p][z] = s[(0, p)];
        }
    }
    for t in (0..N_DEC - 1).rev() {
        for z in 0..LATTICE {
            let r = reward_table(&DMatrix::from_element(1, 1, z as f64), t);
            for p in 0..2 {
                let mut best = f64::NEG_INFINITY;
                for a in 0..2 {
                    let alpha = probs(p, a);
                    let mut total = r.get(0, p, a);
                    for (q, w) in alpha.iter().enumerate() {
                        let expect =
                            0.5 * (v[t + 1][q][step(z, true)] + v[t + 1][q][step(z, false)]);
                        total += w * expect;
                    }
                    best = best.max(total);
                }
                v[t][p][z] = best;
            }
        }
    }
    v
}

/// One indicator column per lattice point.
pub fn indicator_features(states: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(states.nrows(), LATTICE, |i, c| {
        if (states[(i, 0)] - c as f64).abs() < 0.5 {
            1.0
        } else {
            0.0
        }
    })
}
