//! Least-squares backends for the continuation regressions.
//!
//! [`SvdRegressor`] returns the minimum-norm solution with singular values
//! below `rcond * sigma_max` truncated. The SVD is a Householder reduction to
//! an `m x m` triangle followed by one-sided Jacobi rotations. [`QrRegressor`] is a Householder QR
//! that walks the columns in order and sets aside any column whose residual
//! norm falls below `tol` times its original norm; set-aside columns get a
//! zero coefficient. Any other backend can be plugged in through
//! [`Regressor`], including plain closures.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, LsmError, Result};

/// Relative tolerance used by [`fit_qr`] to declare a column dependent.
pub const QR_DEFAULT_TOL: f64 = 1e-7;

/// Default SVD truncation, `max(n, m) * eps`.
pub fn default_rcond(n: usize, m: usize) -> f64 {
    n.max(m) as f64 * f64::EPSILON
}

/// Regression weights; always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients(Vec<f64>);

impl Coefficients {
    /// Maps every non-finite entry to zero.
    pub fn sanitized(raw: Vec<f64>) -> Self {
        Self(
            raw.into_iter()
                .map(|c| if c.is_finite() { c } else { 0.0 })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A least-squares backend: `X [n x m]`, target `y [n]`, epoch `t` to `m`
/// raw coefficients. Undefined coefficients may be reported as NaN; callers
/// map them to zero.
pub trait Regressor: Send + Sync {
    fn regress(&self, x: &DMatrix<f64>, y: &DVector<f64>, t: usize) -> Result<Vec<f64>>;

    /// Regresses every column of `ys` on the same design. Backends that can
    /// reuse a factorization should override this.
    fn regress_many(&self, x: &DMatrix<f64>, ys: &DMatrix<f64>, t: usize) -> Result<Vec<Vec<f64>>> {
        ys.column_iter()
            .map(|y| self.regress(x, &y.into_owned(), t))
            .collect()
    }
}

impl<F> Regressor for F
where
    F: Fn(&DMatrix<f64>, &DVector<f64>, usize) -> Vec<f64> + Send + Sync,
{
    fn regress(&self, x: &DMatrix<f64>, y: &DVector<f64>, t: usize) -> Result<Vec<f64>> {
        Ok(self(x, y, t))
    }
}

/// Runs a backend and enforces its contract: length `m`, NaN mapped to 0.
pub fn apply_regressor(
    contract: &dyn Regressor,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    t: usize,
) -> Result<Coefficients> {
    check_dim("regression target length", x.nrows(), y.len())?;
    let raw = contract.regress(x, y, t)?;
    check_dim("regressor output length", x.ncols(), raw.len())?;
    Ok(Coefficients::sanitized(raw))
}

/// Multi-target form of [`apply_regressor`].
pub fn apply_regressor_many(
    contract: &dyn Regressor,
    x: &DMatrix<f64>,
    ys: &DMatrix<f64>,
    t: usize,
) -> Result<Vec<Coefficients>> {
    check_dim("regression target length", x.nrows(), ys.nrows())?;
    let raw = contract.regress_many(x, ys, t)?;
    check_dim("regressor output count", ys.ncols(), raw.len())?;
    raw.into_iter()
        .map(|c| {
            check_dim("regressor output length", x.ncols(), c.len())?;
            Ok(Coefficients::sanitized(c))
        })
        .collect()
}

fn check_inputs(x: &DMatrix<f64>, ys: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(LsmError::Regression("empty design matrix".into()));
    }
    check_dim("regression target length", x.nrows(), ys.nrows())?;
    if x.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(LsmError::NonFinite("regression input"));
    }
    Ok(())
}

/// Reduces a tall system to `R [m x m]` and the top of `Q^T ys` with
/// unpivoted Householder reflections. Wide systems are returned as is.
fn reduce(x: &DMatrix<f64>, ys: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = x.shape();
    if n <= m {
        return (x.clone(), ys.clone());
    }
    let k = ys.ncols();
    let mut a = x.clone();
    let mut b = ys.clone();
    let mut v = vec![0.0; n];
    for j in 0..m {
        let len = n - j;
        let norm = a.column(j).rows(j, len).norm();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[(j, j)] >= 0.0 { -norm } else { norm };
        for (r, vr) in v[..len].iter_mut().enumerate() {
            *vr = a[(j + r, j)];
        }
        v[0] -= alpha;
        let vnorm2: f64 = v[..len].iter().map(|e| e * e).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let reflect = |col: &mut [f64]| {
            let dot: f64 = col.iter().zip(&v[..len]).map(|(c, e)| c * e).sum();
            let scale = 2.0 * dot / vnorm2;
            col.iter_mut()
                .zip(&v[..len])
                .for_each(|(c, e)| *c -= scale * e);
        };
        let a_data = a.as_mut_slice();
        for c in (j + 1)..m {
            reflect(&mut a_data[c * n + j..(c + 1) * n]);
        }
        let b_data = b.as_mut_slice();
        for c in 0..k {
            reflect(&mut b_data[c * n + j..(c + 1) * n]);
        }
        a[(j, j)] = alpha;
    }
    let r = DMatrix::from_fn(m, m, |i, j| if i <= j { a[(i, j)] } else { 0.0 });
    (r, b.rows(0, m).into_owned())
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi: rotates the columns of `a` until they are mutually
/// orthogonal, so `a_in * v = a_out` with `a_out` columns `sigma_j * u_j`.
fn jacobi_svd(mut a: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (rows, m) = a.shape();
    let mut v = DMatrix::<f64>::identity(m, m);
    // columns below this squared norm sit under any truncation cutoff
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let (ap, aq) = (a[(r, p)], a[(r, q)]);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (ap, aq) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = c * ap - s * aq;
                    a[(r, q)] = s * ap + c * aq;
                }
                for r in 0..m {
                    let (vp, vq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vp - s * vq;
                    v[(r, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            return Ok((a, v));
        }
    }
    Err(LsmError::Regression("Jacobi SVD did not converge".into()))
}

/// Singular values of `x`, largest first.
pub fn singular_values(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (r, _) = reduce(x, &DMatrix::zeros(x.nrows(), 0));
    let (a, _) = jacobi_svd(r)?;
    let mut sigma: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    sigma.sort_by(|u, w| w.total_cmp(u));
    Ok(sigma)
}

fn svd_solve(x: &DMatrix<f64>, ys: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    check_inputs(x, ys)?;
    if rcond.is_nan() || rcond < 0.0 {
        return Err(LsmError::InvalidArgument(format!(
            "rcond must be nonnegative, got {rcond}"
        )));
    }
    let (r, top) = reduce(x, ys);
    let (a, v) = jacobi_svd(r)?;
    let m = x.ncols();
    let sigma: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let cutoff = rcond * sigma.iter().copied().fold(0.0, f64::max);

    // beta = sum_j v_j (a_j . b) / sigma_j^2 over the retained directions
    let mut beta = DMatrix::zeros(m, ys.ncols());
    for (j, &s) in sigma.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        for c in 0..ys.ncols() {
            let proj = a.column(j).dot(&top.column(c)) / (s * s);
            for row in 0..m {
                beta[(row, c)] += v[(row, j)] * proj;
            }
        }
    }
    Ok(beta)
}

/// Minimum-norm least squares by SVD.
pub fn fit_svd(x: &DMatrix<f64>, y: &DVector<f64>, rcond: f64) -> Result<Coefficients> {
    let ys = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let beta = svd_solve(x, &ys, rcond)?;
    Ok(Coefficients::sanitized(
        beta.column(0).iter().copied().collect(),
    ))
}

fn qr_solve(x: &DMatrix<f64>, ys: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    check_inputs(x, ys)?;
    let (n, m) = x.shape();
    let k = ys.ncols();
    let mut a = x.clone();
    let mut b = ys.clone();

    let mut accepted: Vec<usize> = Vec::with_capacity(m.min(n));
    let mut v = vec![0.0; n];
    for j in 0..m {
        let rank = accepted.len();
        if rank == n {
            break;
        }
        let orig = x.column(j).norm();
        let reference = if orig == 0.0 { 1.0 } else { orig };
        let norm = a.column(j).rows(rank, n - rank).norm();
        if norm < tol * reference || norm == 0.0 {
            continue;
        }

        // Householder reflector mapping a[rank.., j] onto alpha * e1.
        let x0 = a[(rank, j)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let len = n - rank;
        for (r, vr) in v[..len].iter_mut().enumerate() {
            *vr = a[(rank + r, j)];
        }
        v[0] -= alpha;
        let vnorm2: f64 = v[..len].iter().map(|e| e * e).sum();

        let reflect = |col: &mut [f64]| {
            let dot: f64 = col.iter().zip(&v[..len]).map(|(c, e)| c * e).sum();
            let scale = 2.0 * dot / vnorm2;
            col.iter_mut()
                .zip(&v[..len])
                .for_each(|(c, e)| *c -= scale * e);
        };
        // column-major storage: column c occupies [c * n, (c + 1) * n)
        let a_data = a.as_mut_slice();
        for c in (j + 1)..m {
            reflect(&mut a_data[c * n + rank..(c + 1) * n]);
        }
        let b_data = b.as_mut_slice();
        for c in 0..k {
            reflect(&mut b_data[c * n + rank..(c + 1) * n]);
        }
        a[(rank, j)] = alpha;
        for r in (rank + 1)..n {
            a[(r, j)] = 0.0;
        }
        accepted.push(j);
    }

    let rank = accepted.len();
    let mut beta = DMatrix::zeros(m, k);
    for c in 0..k {
        let mut sol = vec![0.0; rank];
        for row in (0..rank).rev() {
            let mut acc = b[(row, c)];
            for (col, s) in sol.iter().enumerate().skip(row + 1) {
                acc -= a[(row, accepted[col])] * s;
            }
            sol[row] = acc / a[(row, accepted[row])];
        }
        for (idx, &col) in accepted.iter().enumerate() {
            beta[(col, c)] = sol[idx];
        }
    }
    Ok(beta)
}

/// Least squares by Householder QR with dependent columns zeroed.
pub fn fit_qr(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Coefficients> {
    fit_qr_tol(x, y, QR_DEFAULT_TOL)
}

pub fn fit_qr_tol(x: &DMatrix<f64>, y: &DVector<f64>, tol: f64) -> Result<Coefficients> {
    let ys = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let beta = qr_solve(x, &ys, tol)?;
    Ok(Coefficients::sanitized(
        beta.column(0).iter().copied().collect(),
    ))
}

fn columns(beta: DMatrix<f64>) -> Vec<Vec<f64>> {
    beta.column_iter()
        .map(|c| c.iter().copied().collect())
        .collect()
}

/// SVD backend. `rcond = None` uses [`default_rcond`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SvdRegressor {
    pub rcond: Option<f64>,
}

impl Regressor for SvdRegressor {
    fn regress(&self, x: &DMatrix<f64>, y: &DVector<f64>, _t: usize) -> Result<Vec<f64>> {
        let ys = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        self.regress_many(x, &ys, _t).map(|mut v| v.remove(0))
    }

    fn regress_many(
        &self,
        x: &DMatrix<f64>,
        ys: &DMatrix<f64>,
        _t: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let rcond = self
            .rcond
            .unwrap_or_else(|| default_rcond(x.nrows(), x.ncols()));
        svd_solve(x, ys, rcond).map(columns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QrRegressor {
    pub tol: f64,
}

impl Default for QrRegressor {
    fn default() -> Self {
        Self {
            tol: QR_DEFAULT_TOL,
        }
    }
}

impl Regressor for QrRegressor {
    fn regress(&self, x: &DMatrix<f64>, y: &DVector<f64>, t: usize) -> Result<Vec<f64>> {
        let ys = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        self.regress_many(x, &ys, t).map(|mut v| v.remove(0))
    }

    fn regress_many(
        &self,
        x: &DMatrix<f64>,
        ys: &DMatrix<f64>,
        _t: usize,
    ) -> Result<Vec<Vec<f64>>> {
        qr_solve(x, ys, self.tol).map(columns)
    }
}
