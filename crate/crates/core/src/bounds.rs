//! A-posteriori error bounds for inexact inner solves.
//!
//! With `kappa = kappa_2(M)` and a solve stopped once
//! `||M^T r|| / (||r|| ||M||) < eps`, the following hold whenever
//! `eps * kappa < 1`:
//!
//! ```text
//! ||x - x_bar||        < 2 kappa^2 / (1 - eps kappa) * ||b|| / ||M|| * eps
//! ||r - r_bar||        < 2 kappa   / (1 - eps kappa) * ||b|| * eps
//! ||J_bar - J||_2      < 4 sqrt(r (m + q)) max_j ||dA/dy_j||
//!                          * kappa^2 / (1 - eps kappa) * ||b|| / ||M|| * eps
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};

fn check_hypothesis(kappa: f64, epsilon: f64) -> Result<()> {
    if !(kappa > 0.0 && epsilon > 0.0) {
        return Err(invalid(format!(
            "bounds need positive kappa and epsilon (kappa = {kappa}, epsilon = {epsilon})"
        )));
    }
    let product = epsilon * kappa;
    if !(product < 1.0) {
        return Err(Error::BoundInvalid(product));
    }
    Ok(())
}

/// Bound on `||x - x_bar||_2`.
pub fn solution_bound(kappa: f64, b_norm: f64, op_norm: f64, epsilon: f64) -> Result<f64> {
    check_hypothesis(kappa, epsilon)?;
    if !(op_norm > 0.0) {
        return Err(invalid("operator norm must be positive"));
    }
    Ok(2.0 * kappa * kappa / (1.0 - epsilon * kappa) * b_norm / op_norm * epsilon)
}

/// Bound on the stacked residual difference `||r - r_bar||_2`.
pub fn residual_bound(kappa: f64, b_norm: f64, epsilon: f64) -> Result<f64> {
    check_hypothesis(kappa, epsilon)?;
    Ok(2.0 * kappa / (1.0 - epsilon * kappa) * b_norm * epsilon)
}

/// Bound on `||J_bar - J||_2` for `r` parameters and `m + q` stacked rows.
#[allow(clippy::too_many_arguments)]
pub fn jacobian_bound(
    r: usize,
    m: usize,
    q: usize,
    max_deriv_norm: f64,
    kappa: f64,
    b_norm: f64,
    op_norm: f64,
    epsilon: f64,
) -> Result<f64> {
    check_hypothesis(kappa, epsilon)?;
    if !(op_norm > 0.0) {
        return Err(invalid("operator norm must be positive"));
    }
    let dim = ((r * (m + q)) as f64).sqrt();
    Ok(4.0 * dim * max_deriv_norm * kappa * kappa / (1.0 - epsilon * kappa) * b_norm / op_norm * epsilon)
}

/// A rank-one backward perturbation `E` for which `x_bar` is an exact
/// least-squares solution of `min ||(M + E) x - d||`, with
/// `r = d - M x_bar`.
///
/// Two such perturbations exist: `E_1 = -r r^T M / ||r||^2`, of norm
/// `||M^T r|| / ||r||`, which makes `r` orthogonal to the range of `M + E_1`,
/// and `E_2 = r x_bar^T / ||x_bar||^2`, of norm `||r|| / ||x_bar||`, which
/// makes the perturbed residual zero. The one of smaller norm is returned;
/// `E_2` only wins when the system is (numerically) compatible, where the
/// direction of `r` is rounding noise. Returns zero when `r = 0`.
pub fn backward_perturbation(m: &DMatrix<f64>, x_bar: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let r = d - m * x_bar;
    let rr = r.norm_squared();
    if rr == 0.0 {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    let mt_r = m.tr_mul(&r);
    let xx = x_bar.norm_squared();
    if xx > 0.0 && rr.sqrt() / xx.sqrt() < mt_r.norm() / rr.sqrt() {
        return &r * x_bar.transpose() / xx;
    }
    -(&r * mt_r.transpose()) / rr
}

/// Initial LSQR tolerance `safety / kappa0`, so that `eps0 * kappa0 = safety`.
pub fn initial_tolerance(kappa0: f64, safety: f64) -> Result<f64> {
    if !(kappa0 >= 1.0) {
        return Err(invalid(format!("condition number must be >= 1, got {kappa0}")));
    }
    if !(safety > 0.0 && safety < 1.0) {
        return Err(invalid(format!("safety factor must lie in (0, 1), got {safety}")));
    }
    Ok(safety / kappa0)
}

pub const DEFAULT_SAFETY: f64 = 0.1;

/// All three bounds for one inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub kappa: f64,
    pub b_norm: f64,
    pub op_norm: f64,
    /// `None` when `epsilon * kappa >= 1`.
    pub solution_bound: Option<f64>,
    pub residual_bound: Option<f64>,
    pub jacobian_bound: Option<f64>,
    pub valid: bool,
}

/// Inputs describing one inner solve, for [`BoundReport::evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub kappa: f64,
    pub b_norm: f64,
    pub op_norm: f64,
    pub params: usize,
    pub data_rows: usize,
    pub reg_rows: usize,
    pub max_deriv_norm: f64,
}

impl BoundReport {
    pub fn evaluate(inp: &BoundInputs) -> Self {
        let valid = inp.epsilon * inp.kappa < 1.0;
        let (sol, res, jac) = if valid {
            (
                solution_bound(inp.kappa, inp.b_norm, inp.op_norm, inp.epsilon).ok(),
                residual_bound(inp.kappa, inp.b_norm, inp.epsilon).ok(),
                jacobian_bound(
                    inp.params,
                    inp.data_rows,
                    inp.reg_rows,
                    inp.max_deriv_norm,
                    inp.kappa,
                    inp.b_norm,
                    inp.op_norm,
                    inp.epsilon,
                )
                .ok(),
            )
        } else {
            (None, None, None)
        };
        Self {
            epsilon: inp.epsilon,
            kappa: inp.kappa,
            b_norm: inp.b_norm,
            op_norm: inp.op_norm,
            solution_bound: sol,
            residual_bound: res,
            jacobian_bound: jac,
            valid: valid && sol.is_some() && res.is_some() && jac.is_some(),
        }
    }
}
