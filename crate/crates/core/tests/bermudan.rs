//! The Bermudan put on simulated GBM panels: statistical checks of the
//! simulator, the LSM estimate and the dual bounds.

use std::sync::Arc;

use lsmdual::models::{BermudanPut, EXERCISE, UNEXERCISED};
use lsmdual::{
    additive_duals, bounds, confidence_interval, gbm_paths, nested_gbm, path_policy, run_lsm,
    BasisSpec, GbmParams, MdpModel, PathPanel, QrRegressor, SvdRegressor,
};
use nalgebra::DMatrix;

const STEP: f64 = 0.02;
const N_DEC: usize = 51;
const STRIKE: f64 = 40.0;

fn params(vol: f64) -> GbmParams {
    GbmParams::from_annual(36.0, 0.06, vol, STEP, true)
}

fn put() -> MdpModel {
    BermudanPut {
        strike: STRIKE,
        rate: 0.06 * STEP,
        n_dec: N_DEC,
    }
    .into_model()
    .unwrap()
}

fn reciprocal(states: &DMatrix<f64>) -> DMatrix<f64> {
    states.map(|z| 1.0 / z)
}

/// `z, z^2, 1, (z-30)+, (z-40)+, (z-50)+, 1/z`
fn put_basis() -> BasisSpec {
    BasisSpec::new()
        .with_flags(&[[1.0, 1.0]])
        .with_intercept(true)
        .with_knots(&[[30.0, 40.0, 50.0]])
        .with_custom(Arc::new(reciprocal), 1)
}

fn mean_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn terminal_mean_matches_closed_form() {
    let p = GbmParams::from_annual(36.0, 0.06, 0.2, STEP, false);
    let panel = gbm_paths(&p, N_DEC, 10_000, 2024).unwrap();
    let (mean, se) = mean_se((0..panel.n_path()).map(|i| panel.get(i, 0, N_DEC - 1)));
    let want = 36.0 * 0.06f64.exp();
    assert!(
        (mean - want).abs() <= 3.0 * se,
        "{mean} vs {want} (se {se})"
    );
}

#[test]
fn lsm_estimate_in_band_and_backends_agree() {
    let panel = gbm_paths(&params(0.2), N_DEC, 10_000, 7).unwrap();
    let model = put();
    let svd = run_lsm(&panel, &model, &put_basis(), &SvdRegressor::default()).unwrap();
    let qr = run_lsm(&panel, &model, &put_basis(), &QrRegressor::default()).unwrap();
    let v = svd.value_estimate[UNEXERCISED];
    assert!((4.43..=4.53).contains(&v), "{v}");
    assert!((v - qr.value_estimate[UNEXERCISED]).abs() < 1e-6);
    assert_eq!(svd.value_estimate[0], 0.0);
}

/// Deep in the money the fitted continuation sits within regression noise of
/// the payoff, so the rule is not monotone path by path; in aggregate,
/// in-the-money paths exercise at least as often as out-of-the-money ones.
fn exercise_favours_low_prices(panel: &PathPanel, model: &MdpModel, spec: &BasisSpec) {
    let res = run_lsm(panel, model, spec, &SvdRegressor::default()).unwrap();
    let policy = path_policy(panel, &res.fit, model, spec).unwrap();
    for t in 1..N_DEC - 1 {
        let (mut itm, mut otm) = ((0usize, 0usize), (0usize, 0usize));
        for i in 0..panel.n_path() {
            let bucket = if panel.get(i, 0, t) < STRIKE {
                &mut itm
            } else {
                &mut otm
            };
            bucket.0 += usize::from(policy.action(i, t, UNEXERCISED) == EXERCISE);
            bucket.1 += 1;
        }
        let freq = |(k, n): (usize, usize)| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        assert!(freq(itm) >= freq(otm), "t={t}: {itm:?} vs {otm:?}");
    }
}

#[test]
fn exercise_boundary_favours_low_prices() {
    let panel = gbm_paths(&params(0.2), N_DEC, 4_000, 11).unwrap();
    exercise_favours_low_prices(&panel, &put(), &put_basis());
}

#[test]
fn zero_volatility_gives_zero_increments_and_tight_bounds() {
    let p = params(0.0);
    let panel = gbm_paths(&p, N_DEC, 10, 3).unwrap();
    let model = put();
    let spec = put_basis();
    let res = run_lsm(&panel, &model, &spec, &SvdRegressor::default()).unwrap();
    let sub = nested_gbm(&panel, &p, 4, 5).unwrap();
    let mart = additive_duals(&panel, &sub, &res.fit, &model, &spec).unwrap();
    assert!(mart.as_slice().iter().all(|&d| d == 0.0));

    // deterministic prices grow at the discount rate: exercising now is best
    let policy = path_policy(&panel, &res.fit, &model, &spec).unwrap();
    let b = bounds(&panel, &model, &mart, &policy).unwrap();
    let (lo, hi) = confidence_interval(&b, 0.01, UNEXERCISED).unwrap();
    assert_eq!(lo, 4.0);
    assert_eq!(hi, 4.0);
}

#[test]
fn increments_have_zero_mean() {
    let p = params(0.2);
    let fit_panel = gbm_paths(&p, N_DEC, 10_000, 123).unwrap();
    let model = put();
    let spec = put_basis();
    let fit = run_lsm(&fit_panel, &model, &spec, &SvdRegressor::default())
        .unwrap()
        .fit;

    let eval = gbm_paths(&p, N_DEC, 400, 124).unwrap();
    let sub = nested_gbm(&eval, &p, 50, 125).unwrap();
    let mart = additive_duals(&eval, &sub, &fit, &model, &spec).unwrap();
    for t in 0..N_DEC - 1 {
        for q in 0..2 {
            let (mean, se) = mean_se((0..eval.n_path()).map(|i| mart.get(i, t, q)));
            assert!(
                mean.abs() <= 3.0 * se + 1e-12,
                "t={t} q={q}: {mean} (se {se})"
            );
        }
    }
}

#[test]
fn bounds_bracket_the_estimate_and_dominate_pathwise() {
    let p = params(0.2);
    let model = put();
    let spec = put_basis();
    let fit_panel = gbm_paths(&p, N_DEC, 10_000, 31).unwrap();
    let res = run_lsm(&fit_panel, &model, &spec, &SvdRegressor::default()).unwrap();

    let eval = gbm_paths(&p, N_DEC, 100, 32).unwrap();
    let sub = nested_gbm(&eval, &p, 100, 33).unwrap();
    let mart = additive_duals(&eval, &sub, &res.fit, &model, &spec).unwrap();
    let policy = path_policy(&eval, &res.fit, &model, &spec).unwrap();
    let b = bounds(&eval, &model, &mart, &policy).unwrap();
    for i in 0..b.n_path() {
        for q in 0..2 {
            assert!(b.upper[(i, q)] >= b.lower[(i, q)]);
        }
    }
    let s = b.summary[UNEXERCISED];
    assert!(s.mean_lower <= s.mean_upper);
    let (lo, hi) = confidence_interval(&b, 0.01, UNEXERCISED).unwrap();
    let (lo_wide, hi_wide) = confidence_interval(&b, 0.5, UNEXERCISED).unwrap();
    assert!(lo < lo_wide && hi_wide < hi);
    assert!(lo <= 4.478 && 4.478 <= hi, "({lo}, {hi})");
}

#[test]
fn stopping_at_the_horizon_is_dominated() {
    // the fitted policy beats the feasible "never exercise early" policy
    let p = params(0.2);
    let model = put();
    let panel = gbm_paths(&p, N_DEC, 10_000, 41).unwrap();
    let res = run_lsm(&panel, &model, &put_basis(), &SvdRegressor::default()).unwrap();
    let put = BermudanPut {
        strike: STRIKE,
        rate: 0.06 * STEP,
        n_dec: N_DEC,
    };
    let (european, _) =
        mean_se((0..panel.n_path()).map(|i| put.payoff(panel.get(i, 0, N_DEC - 1), N_DEC - 1)));
    assert!(res.value_estimate[UNEXERCISED] > european);
}

#[test]
fn estimate_inside_interval_over_seeds() {
    let p = params(0.2);
    let model = put();
    let spec = put_basis();
    let mut inside = 0;
    for seed in 0..20u64 {
        let panel = gbm_paths(&p, N_DEC, 10_000, 1000 + seed).unwrap();
        let res = run_lsm(&panel, &model, &spec, &SvdRegressor::default()).unwrap();
        let eval = gbm_paths(&p, N_DEC, 100, 2000 + seed).unwrap();
        let sub = nested_gbm(&eval, &p, 100, 3000 + seed).unwrap();
        let mart = additive_duals(&eval, &sub, &res.fit, &model, &spec).unwrap();
        let policy = path_policy(&eval, &res.fit, &model, &spec).unwrap();
        let b = bounds(&eval, &model, &mart, &policy).unwrap();
        let s = b.summary[UNEXERCISED];
        assert!(s.mean_lower <= s.mean_upper);
        let (lo, hi) = confidence_interval(&b, 0.01, UNEXERCISED).unwrap();
        let v = res.value_estimate[UNEXERCISED];
        inside += usize::from(lo < v && v < hi);
    }
    assert!(inside >= 18, "{inside}/20");
}
