//! Linear operators used by the inner and outer solvers.
//!
//! Every operator exposes a forward action `v -> M v` and its adjoint
//! `w -> M^T w`. Dense materialization is always available through
//! [`LinearOperator::to_dense`]; the default builds it column by column from
//! the forward action, concrete operators override it when they can fill
//! entries directly.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// A real matrix given by its action.
pub trait LinearOperator: Send + Sync + fmt::Debug {
    fn rows(&self) -> usize;

    fn cols(&self) -> usize;

    /// Forward action. `v` must have length `cols()`.
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;

    /// Adjoint action. `w` must have length `rows()`.
    fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64>;

    /// Dense `rows() x cols()` matrix.
    fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), self.cols());
        let mut e = DVector::zeros(self.cols());
        for j in 0..self.cols() {
            e[j] = 1.0;
            out.set_column(j, &self.apply(&e));
            e[j] = 0.0;
        }
        out
    }
}

/// Shared, immutable operator handle.
pub type Operator = Arc<dyn LinearOperator>;

/// Plain dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.cols(), "dense apply: length mismatch");
        &self.matrix * v
    }

    fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        assert_eq!(w.len(), self.rows(), "dense apply_transpose: length mismatch");
        self.matrix.tr_mul(w)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// Symmetric Toeplitz matrix defined by its first row; entry `(i, j)` is
/// `first_row[|i - j|]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricToeplitz {
    first_row: Vec<f64>,
}

impl SymmetricToeplitz {
    pub fn new(first_row: Vec<f64>) -> Result<Self> {
        if first_row.is_empty() {
            return Err(invalid("toeplitz first row must be non-empty"));
        }
        Ok(Self { first_row })
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.first_row[i.abs_diff(j)]
    }
}

impl LinearOperator for SymmetricToeplitz {
    fn rows(&self) -> usize {
        self.first_row.len()
    }

    fn cols(&self) -> usize {
        self.first_row.len()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.cols();
        assert_eq!(v.len(), n, "toeplitz apply: length mismatch");
        DVector::from_fn(n, |i, _| (0..n).map(|j| self.entry(i, j) * v[j]).sum())
    }

    fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        self.apply(w)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.cols();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }
}

/// The `(n-1) x n` forward difference: `(Dx)_i = x_{i+1} - x_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstDifference {
    n: usize,
}

impl LinearOperator for FirstDifference {
    fn rows(&self) -> usize {
        self.n - 1
    }

    fn cols(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.n, "difference apply: length mismatch");
        DVector::from_fn(self.n - 1, |i, _| v[i + 1] - v[i])
    }

    fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        assert_eq!(w.len(), self.n - 1, "difference apply_transpose: length mismatch");
        let mut out = DVector::zeros(self.n);
        for (i, &wi) in w.iter().enumerate() {
            out[i] -= wi;
            out[i + 1] += wi;
        }
        out
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n - 1, self.n);
        for i in 0..self.n - 1 {
            d[(i, i)] = -1.0;
            d[(i, i + 1)] = 1.0;
        }
        d
    }
}

/// `diag(weights) * inner`.
#[derive(Debug, Clone)]
pub struct RowScaled {
    weights: DVector<f64>,
    inner: Operator,
}

impl RowScaled {
    pub fn new(weights: DVector<f64>, inner: Operator) -> Result<Self> {
        if weights.len() != inner.rows() {
            return Err(invalid(format!(
                "row weights have length {} but operator has {} rows",
                weights.len(),
                inner.rows()
            )));
        }
        Ok(Self { weights, inner })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

impl LinearOperator for RowScaled {
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.inner.apply(v).component_mul(&self.weights)
    }

    fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        self.inner.apply_transpose(&w.component_mul(&self.weights))
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = self.inner.to_dense();
        for (i, &wi) in self.weights.iter().enumerate() {
            m.row_mut(i).scale_mut(wi);
        }
        m
    }
}

/// The regularized operator `[A; lambda L]`.
#[derive(Debug, Clone)]
pub struct StackedOperator {
    top: Operator,
    bottom: Operator,
    lambda: f64,
}

impl StackedOperator {
    pub fn top(&self) -> &Operator {
        &self.top
    }

    pub fn bottom(&self) -> &Operator {
        &self.bottom
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Rows of the top block (`m`).
    pub fn top_rows(&self) -> usize {
        self.top.rows()
    }

    /// `[b; 0]`, the stacked data vector for top-block data `b`.
    pub fn pad_data(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.top.rows(), "data length must match top block rows");
        let mut d = DVector::zeros(self.rows());
        d.rows_mut(0, b.len()).copy_from(b);
        d
    }
}

impl LinearOperator for StackedOperator {
    fn rows(&self) -> usize {
        self.top.rows() + self.bottom.rows()
    }

    fn cols(&self) -> usize {
        self.top.cols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.top.rows();
        let mut out = DVector::zeros(self.rows());
        out.rows_mut(0, m).copy_from(&self.top.apply(v));
        out.rows_mut(m, self.bottom.rows())
            .copy_from(&(self.bottom.apply(v) * self.lambda));
        out
    }

    fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        assert_eq!(w.len(), self.rows(), "stacked apply_transpose: length mismatch");
        let m = self.top.rows();
        let w_top = w.rows(0, m).into_owned();
        let w_bottom = w.rows(m, self.bottom.rows()).into_owned();
        self.top.apply_transpose(&w_top) + self.bottom.apply_transpose(&w_bottom) * self.lambda
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let m = self.top.rows();
        let q = self.bottom.rows();
        let mut out = DMatrix::zeros(m + q, self.cols());
        out.rows_mut(0, m).copy_from(&self.top.to_dense());
        out.rows_mut(m, q).copy_from(&(self.bottom.to_dense() * self.lambda));
        out
    }
}

/// Build `[top; lambda * bottom]`.
pub fn stack(top: Operator, bottom: Operator, lambda: f64) -> Result<StackedOperator> {
    if top.cols() != bottom.cols() {
        return Err(invalid(format!(
            "stack: top has {} columns, bottom has {}",
            top.cols(),
            bottom.cols()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("stack: lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(StackedOperator { top, bottom, lambda })
}

fn check_blur_args(sigma: f64, n: usize) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive and finite, got {sigma}")));
    }
    if n < 2 {
        return Err(invalid(format!("signal length must be at least 2, got {n}")));
    }
    Ok(())
}

/// Unnormalized kernel samples `exp(-k^2 / (2 sigma^2))`, `k = 0..n`.
fn gaussian_samples(sigma: f64, n: usize) -> Vec<f64> {
    let two_s2 = 2.0 * sigma * sigma;
    (0..n).map(|k| (-((k * k) as f64) / two_s2).exp()).collect()
}

/// Symmetric Toeplitz blur with a normalized Gaussian first row,
/// `t_k = c exp(-k^2/(2 sigma^2))` with `c` making the row sum to one.
pub fn gaussian_toeplitz(sigma: f64, n: usize) -> Result<SymmetricToeplitz> {
    check_blur_args(sigma, n)?;
    let g = gaussian_samples(sigma, n);
    let c = 1.0 / g.iter().sum::<f64>();
    SymmetricToeplitz::new(g.into_iter().map(|gk| c * gk).collect())
}

/// Analytic `d/d sigma` of [`gaussian_toeplitz`], including the dependence of
/// the normalizer on `sigma`.
pub fn gaussian_toeplitz_derivative(sigma: f64, n: usize) -> Result<SymmetricToeplitz> {
    check_blur_args(sigma, n)?;
    let g = gaussian_samples(sigma, n);
    let s3 = sigma * sigma * sigma;
    // dg_k/dsigma = g_k k^2 / sigma^3
    let dg: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(k, &gk)| gk * (k * k) as f64 / s3)
        .collect();
    let sum: f64 = g.iter().sum();
    let dsum: f64 = dg.iter().sum();
    let row = g
        .iter()
        .zip(&dg)
        .map(|(&gk, &dgk)| (dgk * sum - gk * dsum) / (sum * sum))
        .collect();
    SymmetricToeplitz::new(row)
}

/// Forward difference operator on `n` points.
pub fn first_difference(n: usize) -> Result<FirstDifference> {
    if n < 2 {
        return Err(invalid(format!("first difference needs n >= 2, got {n}")));
    }
    Ok(FirstDifference { n })
}

/// Central-difference step used for models without analytic derivatives.
pub fn finite_difference_step(y: f64) -> f64 {
    f64::max(1e-6, 1e-7 * y.abs())
}
