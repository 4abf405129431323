//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use ivarpro::linops::{DenseOperator, Operator};
use ivarpro::varpro::{SeparableModel, SeparableProblem};
use ivarpro::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// `A(y) = A_0 + sum_j y_j A_j`.
#[derive(Debug, Clone)]
pub struct AffineModel {
    pub base: DMatrix<f64>,
    pub parts: Vec<DMatrix<f64>>,
}

impl AffineModel {
    pub fn matrix(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.base.clone();
        for (j, p) in self.parts.iter().enumerate() {
            a += p * y[j];
        }
        a
    }
}

impl SeparableModel for AffineModel {
    fn data_len(&self) -> usize {
        self.base.nrows()
    }
    fn signal_len(&self) -> usize {
        self.base.ncols()
    }
    fn num_params(&self) -> usize {
        self.parts.len()
    }
    fn operator(&self, y: &DVector<f64>) -> Result<Operator> {
        Ok(Arc::new(DenseOperator::new(self.matrix(y))))
    }
    fn derivative(&self, _y: &DVector<f64>, j: usize) -> Result<Operator> {
        Ok(Arc::new(DenseOperator::new(self.parts[j].clone())))
    }
}

/// Nonlinear two-parameter toy: `A_ij = exp(-y_0 c_ij) cos(y_1 d_ij) + e_ij`.
#[derive(Debug, Clone)]
pub struct ExpCosModel {
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

impl ExpCosModel {
    pub fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Self {
        Self {
            c: DMatrix::from_fn(rows, cols, |_, _| rng.random_range(0.1..2.0)),
            d: DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.5..1.5)),
            e: gaussian_matrix(rng, rows, cols),
        }
    }
}

impl SeparableModel for ExpCosModel {
    fn data_len(&self) -> usize {
        self.c.nrows()
    }
    fn signal_len(&self) -> usize {
        self.c.ncols()
    }
    fn num_params(&self) -> usize {
        2
    }
    fn operator(&self, y: &DVector<f64>) -> Result<Operator> {
        let a = DMatrix::from_fn(self.c.nrows(), self.c.ncols(), |i, j| {
            (-y[0] * self.c[(i, j)]).exp() * (y[1] * self.d[(i, j)]).cos() + self.e[(i, j)]
        });
        Ok(Arc::new(DenseOperator::new(a)))
    }
    fn derivative(&self, y: &DVector<f64>, k: usize) -> Result<Operator> {
        let a = DMatrix::from_fn(self.c.nrows(), self.c.ncols(), |i, j| {
            let (c, d) = (self.c[(i, j)], self.d[(i, j)]);
            if k == 0 {
                -c * (-y[0] * c).exp() * (y[1] * d).cos()
            } else {
                -d * (-y[0] * c).exp() * (y[1] * d).sin()
            }
        });
        Ok(Arc::new(DenseOperator::new(a)))
    }
    fn is_feasible(&self, y: &DVector<f64>) -> bool {
        y.len() == 2
    }
}

/// Single-parameter rational toy: `A_ij = B_ij / (1 + y s_ij^2)`.
#[derive(Debug, Clone)]
pub struct RationalModel {
    pub b: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

impl SeparableModel for RationalModel {
    fn data_len(&self) -> usize {
        self.b.nrows()
    }
    fn signal_len(&self) -> usize {
        self.b.ncols()
    }
    fn num_params(&self) -> usize {
        1
    }
    fn operator(&self, y: &DVector<f64>) -> Result<Operator> {
        let a = self.b.zip_map(&self.s, |b, s| b / (1.0 + y[0] * s * s));
        Ok(Arc::new(DenseOperator::new(a)))
    }
    fn derivative(&self, y: &DVector<f64>, _j: usize) -> Result<Operator> {
        let a = self.b.zip_map(&self.s, |b, s| -b * s * s / (1.0 + y[0] * s * s).powi(2));
        Ok(Arc::new(DenseOperator::new(a)))
    }
    fn is_feasible(&self, y: &DVector<f64>) -> bool {
        y[0] > -0.5
    }
}

/// Regularized problem with a dense random regularizer of `q` rows.
pub fn dense_problem(model: Arc<dyn SeparableModel>, rng: &mut ChaCha8Rng, q: usize, lambda: f64) -> SeparableProblem {
    let b = gaussian_vector(rng, model.data_len());
    let l = gaussian_matrix(rng, q, model.signal_len());
    SeparableProblem::new(model, b, Arc::new(DenseOperator::new(l)), lambda).unwrap()
}

/// Thin-SVD based oracle for a full-column-rank matrix.
pub struct SvdOracle {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl SvdOracle {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let svd = m.clone().svd(true, true);
        Self { u: svd.u.unwrap(), sigma: svd.singular_values, v_t: svd.v_t.unwrap() }
    }

    pub fn kappa(&self) -> f64 {
        self.sigma.max() / self.sigma.min()
    }

    pub fn norm(&self) -> f64 {
        self.sigma.max()
    }

    /// `M^+ z`.
    pub fn pinv(&self, z: &DVector<f64>) -> DVector<f64> {
        let c = self.u.tr_mul(z).component_div(&self.sigma);
        self.v_t.tr_mul(&c)
    }

    /// `(M^+)^T w`.
    pub fn pinv_t(&self, w: &DVector<f64>) -> DVector<f64> {
        let c = (&self.v_t * w).component_div(&self.sigma);
        &self.u * c
    }

    /// `(I - U U^T) z`.
    pub fn perp(&self, z: &DVector<f64>) -> DVector<f64> {
        z - &self.u * self.u.tr_mul(z)
    }
}

/// Jacobian of the reduced residual assembled from an SVD of the stacked
/// matrix, independent of the crate's factorization.
pub fn oracle_jacobian(problem: &SeparableProblem, y: &DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let model = problem.model();
    let m = model.data_len();
    let stacked = problem.stacked(y).unwrap();
    let oracle = SvdOracle::new(&ivarpro::linops::LinearOperator::to_dense(&stacked));
    let a = model.operator(y).unwrap().to_dense();
    let res = problem.data() - &a * x;
    let rows = problem.stacked_rows();
    let mut jac = DMatrix::zeros(rows, model.num_params());
    for j in 0..model.num_params() {
        let da = model.derivative(y, j).unwrap().to_dense();
        let mut lifted = DVector::zeros(rows);
        lifted.rows_mut(0, m).copy_from(&(&da * x));
        let col = oracle.perp(&lifted) + oracle.pinv_t(&da.tr_mul(&res));
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference Jacobian of `y -> f(y)` with exact inner solves.
pub fn fd_jacobian(problem: &SeparableProblem, y: &DVector<f64>, h_rel: f64) -> DMatrix<f64> {
    let r = y.len();
    let mut jac = DMatrix::zeros(problem.stacked_rows(), r);
    for j in 0..r {
        let h = h_rel * y[j].abs().max(1.0);
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[j] += h;
        ym[j] -= h;
        let fp = problem.residual_at(&yp).unwrap();
        let fm = problem.residual_at(&ym).unwrap();
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

pub fn spectral(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// One random stacked least-squares system with an affine parameter
/// dependence, used by the certificate and bound-dominance suites.
pub struct RandomSystem {
    pub problem: SeparableProblem,
    pub model: AffineModel,
    pub y: DVector<f64>,
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub epsilon: f64,
    pub stacked: DMatrix<f64>,
    pub d: DVector<f64>,
    pub oracle: SvdOracle,
}

/// Draws `m in [5, 40]`, `n in [2, 20]`, `q in 0..n`, `eps in [1e-10, 1e-2]`
/// with `eps * kappa < 1/2`. Columns are rescaled to spread the condition
/// numbers over several decades.
pub fn random_system(rng: &mut ChaCha8Rng) -> RandomSystem {
    loop {
        let m = rng.random_range(5..=40);
        let n = rng.random_range(2..=20);
        let q = rng.random_range(0..n);
        if m + q < n {
            continue;
        }
        let r = rng.random_range(1..=2);
        let scale = DVector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-1.5..1.5)));
        let mut base = gaussian_matrix(rng, m, n);
        for (j, s) in scale.iter().enumerate() {
            base.column_mut(j).scale_mut(*s);
        }
        let parts = (0..r).map(|_| gaussian_matrix(rng, m, n) * 0.1).collect();
        let model = AffineModel { base, parts };
        let lambda = if q == 0 { 0.0 } else { rng.random_range(0.05..2.0) };
        let y = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let b = gaussian_vector(rng, m);
        let l = gaussian_matrix(rng, q, n);
        let problem =
            SeparableProblem::new(Arc::new(model.clone()), b, Arc::new(DenseOperator::new(l)), lambda).unwrap();
        let op = problem.stacked(&y).unwrap();
        let stacked = ivarpro::linops::LinearOperator::to_dense(&op);
        let d = op.pad_data(problem.data());
        let oracle = SvdOracle::new(&stacked);
        let kappa = oracle.kappa();
        let hi = (1e-2f64).min(0.5 / kappa);
        if !(kappa.is_finite() && hi > 1e-10) {
            continue;
        }
        let epsilon = 10f64.powf(rng.random_range(-10.0..hi.log10()));
        return RandomSystem { problem, model, y, m, n, q, epsilon, stacked, d, oracle };
    }
}
