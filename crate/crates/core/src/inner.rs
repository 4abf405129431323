//! Inner solvers for `min_x || M x - d ||` with `M = [A; lambda L]`.
//!
//! [`lsqr_solve`] is plain Golub-Kahan LSQR (no preconditioning, no
//! reorthogonalization) stopped by the relative-gradient test
//! `||M^T r|| / (||r|| ||M||) < eps`, evaluated on the true residual
//! `r = d - M x` at every iterate. Satisfying it certifies that the iterate
//! solves a nearby least-squares problem with `||E|| < eps ||M||`.
//!
//! [`DirectFactorization`] factors the normal equations `M^T M` with a dense
//! Cholesky decomposition and provides the pseudoinverse and projector
//! applications used by the Jacobian formulas.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linops::{LinearOperator, StackedOperator};

/// How `||M||_2` in the stopping criterion is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormEstimate {
    /// Running Frobenius norm of the bidiagonal matrix built so far.
    #[default]
    Bidiagonal,
    /// Largest singular value of the materialized operator.
    ExplicitSvd,
    /// A value supplied by the caller (e.g. a precomputed spectral norm).
    Known(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqrOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub norm_estimate: NormEstimate,
}

impl LsqrOptions {
    pub fn new(tolerance: f64) -> Self {
        Self { tolerance, ..Self::default() }
    }

    pub fn with_norm_estimate(mut self, mode: NormEstimate) -> Self {
        self.norm_estimate = mode;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(invalid(format!("LSQR tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("LSQR max_iterations must be at least 1"));
        }
        if let NormEstimate::Known(v) = self.norm_estimate {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("known operator norm must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for LsqrOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
            norm_estimate: NormEstimate::Bidiagonal,
        }
    }
}

/// Result of an inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub x_bar: DVector<f64>,
    /// `d - M x_bar`.
    pub residual: DVector<f64>,
    pub iterations: usize,
    /// Criterion value at the returned iterate.
    pub achieved_criterion: f64,
    /// The `||M||` used in the criterion.
    pub operator_norm_estimate: f64,
    pub converged: bool,
    /// Criterion value after every iteration (index 0 is the start point).
    pub criterion_history: Vec<f64>,
}

fn check_finite(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBreakdown(format!("non-finite value in {what}")))
    }
}

/// Largest singular value of a dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// `||r|| <= 8 u (||M|| ||x|| + ||d||)`: the residual of `M x ~ d` is
/// rounding noise, so the system is numerically compatible.
pub fn residual_is_negligible(r_norm: f64, op_norm: f64, x_norm: f64, d_norm: f64) -> bool {
    r_norm <= 8.0 * f64::EPSILON * (op_norm * x_norm + d_norm)
}

/// Least-squares solve of `op x ~ d` by LSQR with the relative-gradient
/// stopping rule.
///
/// A zero right-hand side returns `x = 0` immediately. A residual that
/// vanishes to rounding level (see [`residual_is_negligible`]) is treated as
/// an exact (compatible) solve and reported with criterion 0.
/// Hitting `max_iterations` is not an error: the iterate with the smallest
/// criterion is returned with `converged = false`.
pub fn lsqr_solve(op: &dyn LinearOperator, d: &DVector<f64>, opts: &LsqrOptions) -> Result<InnerSolution> {
    opts.validate()?;
    if d.len() != op.rows() {
        return Err(invalid(format!(
            "right-hand side has length {} but operator has {} rows",
            d.len(),
            op.rows()
        )));
    }
    check_finite(d, "right-hand side")?;

    let n = op.cols();
    let dnorm = d.norm();
    let fixed_norm = match opts.norm_estimate {
        NormEstimate::Bidiagonal => None,
        NormEstimate::ExplicitSvd => Some(spectral_norm(&op.to_dense())),
        NormEstimate::Known(v) => Some(v),
    };

    if dnorm == 0.0 {
        return Ok(InnerSolution {
            x_bar: DVector::zeros(n),
            residual: DVector::zeros(op.rows()),
            iterations: 0,
            achieved_criterion: 0.0,
            operator_norm_estimate: fixed_norm.unwrap_or(0.0),
            converged: true,
            criterion_history: vec![0.0],
        });
    }

    // Golub-Kahan start: beta u = d, alpha v = M^T u.
    let mut beta = dnorm;
    let mut u = d / beta;
    let mut v = op.apply_transpose(&u);
    let mut alpha = v.norm();
    check_finite(&v, "M^T d")?;

    let mut x = DVector::zeros(n);
    let mut anorm_sq = 0.0_f64;
    let mut op_norm = fixed_norm.unwrap_or(0.0);

    // At x = 0 the residual is d and M^T r = alpha * beta * v.
    let initial_criterion = if let Some(norm) = fixed_norm {
        alpha / norm
    } else if alpha == 0.0 {
        0.0
    } else {
        // the bidiagonal estimate is alpha itself at this point
        1.0
    };
    let mut history = vec![initial_criterion];
    if alpha == 0.0 {
        // d is orthogonal to range(M); x = 0 is the least-squares solution.
        return Ok(InnerSolution {
            x_bar: x,
            residual: d.clone(),
            iterations: 0,
            achieved_criterion: 0.0,
            operator_norm_estimate: op_norm,
            converged: true,
            criterion_history: history,
        });
    }
    v /= alpha;

    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;

    let mut best: Option<(f64, DVector<f64>, DVector<f64>, usize)> = None;

    for iter in 1..=opts.max_iterations {
        // Continue the bidiagonalization.
        let mut u_next = op.apply(&v) - &u * alpha;
        beta = u_next.norm();
        if beta > 0.0 {
            u_next /= beta;
        }
        u = u_next;
        anorm_sq += alpha * alpha + beta * beta;

        let mut v_next = op.apply_transpose(&u) - &v * beta;
        let alpha_next = v_next.norm();
        if alpha_next > 0.0 {
            v_next /= alpha_next;
        }

        // Plane rotation eliminating the subdiagonal beta.
        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha_next;
        rhobar = -c * alpha_next;
        let phi = c * phibar;
        phibar *= s;

        x += &w * (phi / rho);
        w = &v_next - &w * (theta / rho);
        v = v_next;
        alpha = alpha_next;

        check_finite(&x, "LSQR iterate")?;

        if fixed_norm.is_none() {
            op_norm = anorm_sq.sqrt();
        }

        // Criterion on the true residual.
        let residual = d - op.apply(&x);
        let rnorm = residual.norm();
        let xnorm = x.norm();
        let exact = residual_is_negligible(rnorm, op_norm, xnorm, dnorm);
        let criterion = if exact {
            0.0
        } else {
            op.apply_transpose(&residual).norm() / (rnorm * op_norm)
        };
        if !criterion.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "LSQR stopping criterion is not finite at iteration {iter}"
            )));
        }
        history.push(criterion);

        if exact || criterion < opts.tolerance {
            return Ok(InnerSolution {
                x_bar: x,
                residual,
                iterations: iter,
                achieved_criterion: criterion,
                operator_norm_estimate: op_norm,
                converged: true,
                criterion_history: history,
            });
        }

        if best.as_ref().is_none_or(|(c, ..)| criterion < *c) {
            best = Some((criterion, x.clone(), residual, iter));
        }

        // Krylov space exhausted; further iterations cannot move x.
        if alpha == 0.0 || beta == 0.0 {
            break;
        }
    }

    let (criterion, x_bar, residual, _) = best.expect("at least one LSQR iteration ran");
    let iterations = history.len() - 1;
    Ok(InnerSolution {
        x_bar,
        residual,
        iterations,
        achieved_criterion: criterion,
        operator_norm_estimate: op_norm,
        converged: false,
        criterion_history: history,
    })
}

/// Dense Cholesky factorization of `M^T M` for a stacked operator `M`.
#[derive(Debug, Clone)]
pub struct DirectFactorization {
    matrix: DMatrix<f64>,
    /// Lower-triangular `G` with `M^T M = G G^T`.
    lower: DMatrix<f64>,
    top_rows: usize,
}

impl DirectFactorization {
    pub fn new(op: &StackedOperator) -> Result<Self> {
        Self::from_dense(op.to_dense(), op.top_rows())
    }

    /// Factor a materialized stacked matrix whose first `top_rows` rows form
    /// the data block.
    pub fn from_dense(matrix: DMatrix<f64>, top_rows: usize) -> Result<Self> {
        if top_rows > matrix.nrows() {
            return Err(invalid("top block cannot have more rows than the matrix"));
        }
        let normal = matrix.tr_mul(&matrix);
        let lower = cholesky_lower(normal)?;
        Ok(Self { matrix, lower, top_rows })
    }

    /// The materialized stacked matrix `M`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Solve `(M^T M) x = rhs`.
    pub fn solve_normal(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.cols(), "normal-equation rhs length mismatch");
        let n = self.cols();
        let g = &self.lower;
        let mut z = rhs.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= g[(i, k)] * z[k];
            }
            z[i] = s / g[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= g[(k, i)] * z[k];
            }
            z[i] = s / g[(i, i)];
        }
        z
    }

    /// Exact inner solution for top-block data `b`: `(M^T M)^{-1} A^T b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.top_rows, "data length must match top block rows");
        let rhs = self.matrix.rows(0, self.top_rows).tr_mul(b);
        self.solve_normal(&rhs)
    }

    /// `M^+ z = (M^T M)^{-1} M^T z`.
    pub fn apply_pinv(&self, z: &DVector<f64>) -> DVector<f64> {
        assert_eq!(z.len(), self.rows(), "pinv input length mismatch");
        self.solve_normal(&self.matrix.tr_mul(z))
    }

    /// `(M^+)^T w = M (M^T M)^{-1} w`.
    pub fn apply_pinv_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.matrix * self.solve_normal(w)
    }

    /// `(I - M M^+) z`.
    pub fn apply_projector_perp(&self, z: &DVector<f64>) -> DVector<f64> {
        z - &self.matrix * self.apply_pinv(z)
    }
}

fn cholesky_lower(mut a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= a[(j, k)] * a[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::SingularSystem { index: j, pivot });
        }
        let diag = pivot.sqrt();
        a[(j, j)] = diag;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / diag;
        }
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(a)
}

/// Exact inner solution `x(y)` of `min || [A; lambda L] x - [b; 0] ||`.
pub fn direct_solve(op: &StackedOperator, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != op.top_rows() {
        return Err(invalid(format!(
            "data has length {} but top block has {} rows",
            b.len(),
            op.top_rows()
        )));
    }
    Ok(DirectFactorization::new(op)?.solve(b))
}

/// Singular values of a dense matrix.
///
/// Exactly symmetric matrices go through the symmetric eigensolver
/// (`sigma_i = |lambda_i|`), which resolves tiny singular values that the
/// bidiagonal SVD flushes to zero.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_square() && m.nrows() > 0 && m == &m.transpose() {
        m.clone().symmetric_eigenvalues().map(f64::abs)
    } else {
        m.singular_values()
    }
}

/// `sigma_max / sigma_min` of a dense matrix with full column rank.
pub fn condition_number_dense(m: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(m);
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 1e-300) {
        return Err(Error::RankDeficient(smin));
    }
    Ok(smax / smin)
}

/// 2-norm condition number of the materialized stacked operator.
pub fn condition_number(op: &StackedOperator) -> Result<f64> {
    condition_number_dense(&op.to_dense())
}
