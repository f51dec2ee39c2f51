//! Regression basis specification and design matrices.
//!
//! Columns always come out in the same order: the power/Laguerre block
//! (component by component, increasing degree), the intercept, the
//! linear-spline knots (component by component), then custom features.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{LsmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisType {
    #[default]
    Power,
    /// Unweighted Laguerre polynomials `L_j`.
    Laguerre,
}

impl FromStr for BasisType {
    type Err = LsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(Self::Power),
            "laguerre" => Ok(Self::Laguerre),
            other => Err(LsmError::InvalidBasis(format!(
                "unknown basis type {other:?}"
            ))),
        }
    }
}

/// User feature block appended to the right of the design matrix:
/// `[n x dim]` states to `[n x n_custom]` features. Must be pure.
pub trait CustomFeatures: Send + Sync {
    fn features(&self, states: &DMatrix<f64>) -> DMatrix<f64>;
}

impl<F> CustomFeatures for F
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn features(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        self(states)
    }
}

#[derive(Clone, Default)]
pub struct BasisSpec {
    /// `flags[i][j - 1]` includes degree `j` of component `i`.
    pub flags: Vec<Vec<bool>>,
    pub btype: BasisType,
    pub intercept: bool,
    /// `knots[i]` lists the knots placed on component `i`.
    pub knots: Vec<Vec<f64>>,
    custom: Option<(Arc<dyn CustomFeatures>, usize)>,
}

impl fmt::Debug for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisSpec")
            .field("flags", &self.flags)
            .field("btype", &self.btype)
            .field("intercept", &self.intercept)
            .field("knots", &self.knots)
            .field("n_custom", &self.n_custom())
            .finish()
    }
}

impl BasisSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Flag matrix from numeric entries; any nonzero entry includes the term.
    pub fn with_flags<R: AsRef<[f64]>>(mut self, rows: &[R]) -> Self {
        self.flags = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| x != 0.0).collect())
            .collect();
        self
    }

    pub fn with_btype(mut self, btype: BasisType) -> Self {
        self.btype = btype;
        self
    }

    pub fn with_intercept(mut self, intercept: bool) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn with_knots<R: AsRef<[f64]>>(mut self, rows: &[R]) -> Self {
        self.knots = rows.iter().map(|r| r.as_ref().to_vec()).collect();
        self
    }

    pub fn with_custom(mut self, features: Arc<dyn CustomFeatures>, n_custom: usize) -> Self {
        self.custom = Some((features, n_custom));
        self
    }

    pub fn n_custom(&self) -> usize {
        self.custom.as_ref().map_or(0, |(_, n)| *n)
    }

    /// Checks the spec against a state dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.flags.len() > dim {
            return Err(LsmError::InvalidBasis(format!(
                "flag matrix has {} rows but the state has {dim} components",
                self.flags.len()
            )));
        }
        if self.knots.len() > dim {
            return Err(LsmError::InvalidBasis(format!(
                "knot matrix has {} rows but the state has {dim} components",
                self.knots.len()
            )));
        }
        if self.knots.iter().flatten().any(|b| !b.is_finite()) {
            return Err(LsmError::InvalidBasis("knots must be finite".into()));
        }
        if matches!(self.custom, Some((_, 0))) {
            return Err(LsmError::InvalidBasis(
                "custom features supplied with n_custom = 0".into(),
            ));
        }
        if basis_dimension(self) == 0 {
            return Err(LsmError::InvalidBasis("the basis has no columns".into()));
        }
        Ok(())
    }

    pub fn column_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(basis_dimension(self));
        for (i, row) in self.flags.iter().enumerate() {
            for (j, _) in row.iter().enumerate().filter(|(_, &on)| on) {
                labels.push(match self.btype {
                    BasisType::Power => format!("z{}^{}", i + 1, j + 1),
                    BasisType::Laguerre => format!("L{}(z{})", j + 1, i + 1),
                });
            }
        }
        if self.intercept {
            labels.push("1".to_string());
        }
        for (i, row) in self.knots.iter().enumerate() {
            for b in row {
                labels.push(format!("(z{}-{})+", i + 1, b));
            }
        }
        labels.extend((0..self.n_custom()).map(|c| format!("custom{}", c + 1)));
        labels
    }

    /// Columns in the built-in (non-custom) blocks for a single state.
    fn fill_builtin(&self, z: &[f64], out: &mut Vec<f64>) {
        for (i, row) in self.flags.iter().enumerate() {
            let x = z[i];
            let mut laguerre = LaguerreIter::new(x);
            for (j, &on) in row.iter().enumerate() {
                let degree = j + 1;
                let value = match self.btype {
                    BasisType::Power => x.powi(degree as i32),
                    BasisType::Laguerre => laguerre.advance_to(degree),
                };
                if on {
                    out.push(value);
                }
            }
        }
        if self.intercept {
            out.push(1.0);
        }
        for (i, row) in self.knots.iter().enumerate() {
            out.extend(row.iter().map(|b| (z[i] - b).max(0.0)));
        }
    }
}

/// Walks `L_0(x), L_1(x), ...` with
/// `(k + 1) L_{k+1} = (2k + 1 - x) L_k - k L_{k-1}`.
struct LaguerreIter {
    x: f64,
    degree: usize,
    prev: f64,
    cur: f64,
}

impl LaguerreIter {
    fn new(x: f64) -> Self {
        Self {
            x,
            degree: 0,
            prev: 0.0,
            cur: 1.0,
        }
    }

    fn advance_to(&mut self, degree: usize) -> f64 {
        while self.degree < degree {
            let k = self.degree as f64;
            let next = ((2.0 * k + 1.0 - self.x) * self.cur - k * self.prev) / (k + 1.0);
            self.prev = self.cur;
            self.cur = next;
            self.degree += 1;
        }
        self.cur
    }
}

/// Standard Laguerre polynomial `L_n(x)`.
pub fn laguerre(n: usize, x: f64) -> f64 {
    LaguerreIter::new(x).advance_to(n)
}

/// Number of design-matrix columns.
pub fn basis_dimension(spec: &BasisSpec) -> usize {
    let flags: usize = spec
        .flags
        .iter()
        .map(|r| r.iter().filter(|&&on| on).count())
        .sum();
    let knots: usize = spec.knots.iter().map(Vec::len).sum();
    flags + usize::from(spec.intercept) + knots + spec.n_custom()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub data: DMatrix<f64>,
    pub column_labels: Vec<String>,
}

fn custom_block(spec: &BasisSpec, states: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let Some((features, n_custom)) = &spec.custom else {
        return Ok(None);
    };
    let block = features.features(states);
    if block.nrows() != states.nrows() || block.ncols() != *n_custom {
        return Err(LsmError::InvalidBasis(format!(
            "custom features returned a {}x{} block, expected {}x{}",
            block.nrows(),
            block.ncols(),
            states.nrows(),
            n_custom
        )));
    }
    Ok(Some(block))
}

/// Design matrix for `[n x dim]` states. Rows are states, columns follow the
/// fixed block order.
pub fn build_design_matrix(states: &DMatrix<f64>, spec: &BasisSpec) -> Result<DesignMatrix> {
    Ok(DesignMatrix {
        data: design_data(states, spec)?,
        column_labels: spec.column_labels(),
    })
}

/// Like [`build_design_matrix`] without the labels.
pub fn design_data(states: &DMatrix<f64>, spec: &BasisSpec) -> Result<DMatrix<f64>> {
    spec.validate(states.ncols())?;
    if states.iter().any(|x| !x.is_finite()) {
        return Err(LsmError::NonFinite("basis input states"));
    }
    let m = basis_dimension(spec);
    let n = states.nrows();
    let custom = custom_block(spec, states)?;
    let n_builtin = m - spec.n_custom();

    let mut data = DMatrix::zeros(n, m);
    let mut z = vec![0.0; states.ncols()];
    let mut row = Vec::with_capacity(n_builtin);
    for i in 0..n {
        z.iter_mut()
            .zip(states.row(i).iter())
            .for_each(|(d, s)| *d = *s);
        row.clear();
        spec.fill_builtin(&z, &mut row);
        for (c, v) in row.iter().enumerate() {
            data[(i, c)] = *v;
        }
    }
    if let Some(block) = custom {
        data.columns_mut(n_builtin, spec.n_custom())
            .copy_from(&block);
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(LsmError::NonFinite("design matrix"));
    }
    Ok(data)
}

/// Basis evaluated at a single state; identical to one design-matrix row.
pub fn evaluate_basis_row(z: &[f64], spec: &BasisSpec) -> Result<DVector<f64>> {
    let states = DMatrix::from_row_slice(1, z.len(), z);
    let data = design_data(&states, spec)?;
    Ok(data.row(0).transpose())
}
