//! Variable projection for `min_{x,y} 1/2 ||A(y) x - b||^2 + lambda^2/2 ||L x||^2`.
//!
//! The linear unknown `x` is eliminated through the inner solution
//! `x(y) = argmin_x || [A(y); lambda L] x - [b; 0] ||`, leaving the reduced
//! residual `f(y) = [A(y); lambda L] x(y) - [b; 0]`. Column `j` of its
//! Jacobian is
//!
//! ```text
//! J_j = P_perp [dA/dy_j; 0] x  +  (M^+)^T (dA/dy_j)^T (b - A x)
//! ```
//!
//! where `M = [A(y); lambda L]` and `P_perp = I - M M^+`. The exact method
//! ([`genvarpro`]) uses the exact `x(y)`; the inexact method
//! ([`inexact_genvarpro`]) substitutes an LSQR approximation `x_bar` in both
//! the residual and the Jacobian, with the LSQR tolerance driven by a
//! [`ToleranceSchedule`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inner::{self, lsqr_solve, DirectFactorization, LsqrOptions, NormEstimate};
use crate::linops::{finite_difference_step, stack, DenseOperator, LinearOperator, Operator, StackedOperator};

/// A matrix family `y -> A(y)` (`m x n`, `r` parameters) with partial
/// derivatives.
pub trait SeparableModel: Send + Sync + fmt::Debug {
    /// `m`
    fn data_len(&self) -> usize;
    /// `n`
    fn signal_len(&self) -> usize;
    /// `r`
    fn num_params(&self) -> usize;

    fn operator(&self, y: &DVector<f64>) -> Result<Operator>;

    /// `dA/dy_j` at `y`.
    fn derivative(&self, y: &DVector<f64>, j: usize) -> Result<Operator>;

    fn is_feasible(&self, _y: &DVector<f64>) -> bool {
        true
    }
}

/// `A(y) = A` for every `y`; all derivatives vanish.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    a: Operator,
    params: usize,
}

impl ConstantModel {
    pub fn new(a: Operator, params: usize) -> Self {
        Self { a, params }
    }
}

impl SeparableModel for ConstantModel {
    fn data_len(&self) -> usize {
        self.a.rows()
    }

    fn signal_len(&self) -> usize {
        self.a.cols()
    }

    fn num_params(&self) -> usize {
        self.params
    }

    fn operator(&self, _y: &DVector<f64>) -> Result<Operator> {
        Ok(self.a.clone())
    }

    fn derivative(&self, _y: &DVector<f64>, _j: usize) -> Result<Operator> {
        Ok(Arc::new(DenseOperator::new(DMatrix::zeros(self.a.rows(), self.a.cols()))))
    }
}

/// Wraps a model and replaces its derivatives by central differences with
/// step `max(1e-6, 1e-7 |y_j|)`.
#[derive(Debug, Clone)]
pub struct FiniteDifferenceModel<M> {
    inner: M,
}

impl<M: SeparableModel> FiniteDifferenceModel<M> {
    pub fn new(inner: M) -> Self {
        Self { inner }
    }
}

impl<M: SeparableModel> SeparableModel for FiniteDifferenceModel<M> {
    fn data_len(&self) -> usize {
        self.inner.data_len()
    }

    fn signal_len(&self) -> usize {
        self.inner.signal_len()
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn operator(&self, y: &DVector<f64>) -> Result<Operator> {
        self.inner.operator(y)
    }

    fn derivative(&self, y: &DVector<f64>, j: usize) -> Result<Operator> {
        let h = finite_difference_step(y[j]);
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[j] += h;
        ym[j] -= h;
        let ap = self.inner.operator(&yp)?.to_dense();
        let am = self.inner.operator(&ym)?.to_dense();
        Ok(Arc::new(DenseOperator::new((ap - am) / (2.0 * h))))
    }

    fn is_feasible(&self, y: &DVector<f64>) -> bool {
        self.inner.is_feasible(y)
    }
}

/// Data, regularizer and model of one regularized separable problem.
#[derive(Debug, Clone)]
pub struct SeparableProblem {
    model: Arc<dyn SeparableModel>,
    b: DVector<f64>,
    regularizer: Operator,
    lambda: f64,
}

impl SeparableProblem {
    pub fn new(model: Arc<dyn SeparableModel>, b: DVector<f64>, regularizer: Operator, lambda: f64) -> Result<Self> {
        if b.len() != model.data_len() {
            return Err(invalid(format!(
                "data has length {} but the model produces {} rows",
                b.len(),
                model.data_len()
            )));
        }
        if regularizer.cols() != model.signal_len() {
            return Err(invalid(format!(
                "regularizer has {} columns but the signal has length {}",
                regularizer.cols(),
                model.signal_len()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { model, b, regularizer, lambda })
    }

    pub fn model(&self) -> &Arc<dyn SeparableModel> {
        &self.model
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn regularizer(&self) -> &Operator {
        &self.regularizer
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `m + q`
    pub fn stacked_rows(&self) -> usize {
        self.model.data_len() + self.regularizer.rows()
    }

    fn check_params(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.model.num_params() {
            return Err(invalid(format!(
                "parameter vector has length {} but the model has {} parameters",
                y.len(),
                self.model.num_params()
            )));
        }
        Ok(())
    }

    /// `[A(y); lambda L]`.
    pub fn stacked(&self, y: &DVector<f64>) -> Result<StackedOperator> {
        self.check_params(y)?;
        stack(self.model.operator(y)?, self.regularizer.clone(), self.lambda)
    }

    pub fn factorize(&self, y: &DVector<f64>) -> Result<DirectFactorization> {
        DirectFactorization::new(&self.stacked(y)?)
    }

    /// `[A(y) x - b; lambda L x]`.
    pub fn reduced_residual(&self, y: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        let op = self.stacked(y)?;
        if x.len() != op.cols() {
            return Err(invalid(format!("signal has length {} but expected {}", x.len(), op.cols())));
        }
        Ok(op.apply(x) - op.pad_data(&self.b))
    }

    /// Jacobian of the reduced residual assembled around the signal `x`.
    ///
    /// With the exact inner solution this is the true Jacobian; with an
    /// approximate `x_bar` it is the inexact Jacobian. Both go through this
    /// one code path.
    pub fn jacobian(&self, y: &DVector<f64>, fact: &DirectFactorization, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_params(y)?;
        let a = self.model.operator(y)?;
        let m = self.model.data_len();
        let rows = self.stacked_rows();
        if fact.rows() != rows || fact.cols() != x.len() || x.len() != self.model.signal_len() {
            return Err(invalid("factorization, signal and model dimensions disagree"));
        }
        let data_residual = &self.b - a.apply(x);
        let mut jac = DMatrix::zeros(rows, self.model.num_params());
        for j in 0..self.model.num_params() {
            let da = self.model.derivative(y, j)?;
            let mut lifted = DVector::zeros(rows);
            lifted.rows_mut(0, m).copy_from(&da.apply(x));
            let col = fact.apply_projector_perp(&lifted) + fact.apply_pinv_transpose(&da.apply_transpose(&data_residual));
            jac.set_column(j, &col);
        }
        Ok(jac)
    }

    /// Exact Jacobian; `x` must be the exact inner solution at `y`.
    pub fn exact_jacobian(&self, y: &DVector<f64>, fact: &DirectFactorization, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.jacobian(y, fact, x)
    }

    /// Inexact Jacobian around an approximate inner solution `x_bar`.
    pub fn approx_jacobian(&self, y: &DVector<f64>, fact: &DirectFactorization, x_bar: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.jacobian(y, fact, x_bar)
    }

    /// Exact inner solution `x(y)`.
    pub fn inner_solution(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.factorize(y)?.solve(&self.b))
    }

    /// Reduced residual `f(y)` at the exact inner solution.
    pub fn residual_at(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.inner_solution(y)?;
        self.reduced_residual(y, &x)
    }

    /// Reduced objective `1/2 ||f(y)||^2`.
    pub fn objective(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * self.residual_at(y)?.norm_squared())
    }

    /// Largest spectral norm among `dA/dy_j`.
    pub fn max_derivative_norm(&self, y: &DVector<f64>) -> Result<f64> {
        let mut best = 0.0_f64;
        for j in 0..self.model.num_params() {
            best = best.max(inner::spectral_norm(&self.model.derivative(y, j)?.to_dense()));
        }
        Ok(best)
    }
}

/// `J^T f`.
pub fn gradient(jac: &DMatrix<f64>, f: &DVector<f64>) -> Result<DVector<f64>> {
    if jac.nrows() != f.len() {
        return Err(invalid(format!("Jacobian has {} rows, residual has length {}", jac.nrows(), f.len())));
    }
    Ok(jac.tr_mul(f))
}

/// Gauss-Newton step `argmin_s || J s + g ||` via Householder QR.
pub fn gauss_newton_step(jac: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    if jac.nrows() != g.len() {
        return Err(invalid(format!("Jacobian has {} rows, residual has length {}", jac.nrows(), g.len())));
    }
    let r = jac.ncols();
    if r == 0 || jac.nrows() < r {
        return Err(Error::SingularStep);
    }
    if g.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(r));
    }
    let scale = jac.abs().max();
    let qr = jac.clone().qr();
    let rmat = qr.r();
    if scale == 0.0 || (0..r).any(|i| !(rmat[(i, i)].abs() > 1e-13 * scale)) {
        return Err(Error::SingularStep);
    }
    let qtg = qr.q().tr_mul(g);
    let t = rmat.solve_upper_triangular(&(-qtg)).ok_or(Error::SingularStep)?;
    Ok(t)
}

/// Rule producing the inner tolerance at outer iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// `eps_k = eps_0` (label `b`).
    Constant,
    /// `eps_k = eps_0 / k`, with `eps_0` at `k = 0` (label `lb`).
    Linear,
    /// `eps_k = eps_{k-1} / 2` (label `ab`).
    Exponential,
    /// `eps_k = 1e-11` (label `s`).
    FixedSmall,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] = [Self::Constant, Self::Linear, Self::Exponential, Self::FixedSmall];

    /// Short label used in file names and tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::Constant => "b",
            Self::Linear => "lb",
            Self::Exponential => "ab",
            Self::FixedSmall => "s",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "b" | "constant" => Ok(Self::Constant),
            "lb" | "linear" => Ok(Self::Linear),
            "ab" | "exponential" => Ok(Self::Exponential),
            "s" | "fixed-small" | "small" => Ok(Self::FixedSmall),
            other => Err(Error::Config {
                field: "schedules".into(),
                message: format!("unknown schedule `{other}` (expected b, lb, ab or s)"),
            }),
        }
    }
}

pub const FIXED_SMALL_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSchedule {
    pub kind: ScheduleKind,
    pub epsilon0: f64,
    /// Lower clamp; defaults to machine epsilon.
    pub floor: f64,
}

impl ToleranceSchedule {
    pub fn new(kind: ScheduleKind, epsilon0: f64) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0.is_finite()) {
            return Err(invalid(format!("initial tolerance must be positive, got {epsilon0}")));
        }
        Ok(Self { kind, epsilon0, floor: f64::EPSILON })
    }

    pub fn tolerance(&self, k: usize) -> f64 {
        let raw = match self.kind {
            ScheduleKind::Constant => self.epsilon0,
            ScheduleKind::Linear if k == 0 => self.epsilon0,
            ScheduleKind::Linear => self.epsilon0 / k as f64,
            ScheduleKind::Exponential => self.epsilon0 * 0.5f64.powi(k.min(i32::MAX as usize) as i32),
            ScheduleKind::FixedSmall => FIXED_SMALL_TOLERANCE,
        };
        raw.max(self.floor)
    }
}

/// Outer-loop stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterOptions {
    pub max_outer_iterations: usize,
    /// Stop once `||step|| <= step_tolerance`.
    pub step_tolerance: f64,
    /// Stop once `||grad f|| <= gradient_tolerance`.
    pub gradient_tolerance: f64,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self { max_outer_iterations: 50, step_tolerance: 1e-10, gradient_tolerance: 0.0 }
    }
}

/// Options of the inexact outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InexactOptions {
    pub outer: OuterOptions,
    pub schedule: ToleranceSchedule,
    pub lsqr_max_iterations: usize,
    pub norm_estimate: NormEstimate,
    /// Also compute the exact inner solution, Jacobian and conditioning at
    /// every iterate.
    pub diagnostics: bool,
    /// Warn when `eps_0 * kappa(M(y0)) >= 1`.
    pub check_precondition: bool,
}

impl InexactOptions {
    pub fn new(schedule: ToleranceSchedule) -> Self {
        Self {
            outer: OuterOptions::default(),
            schedule,
            lsqr_max_iterations: 10_000,
            norm_estimate: NormEstimate::Bidiagonal,
            diagnostics: false,
            check_precondition: true,
        }
    }
}

/// Exact quantities at an inexact iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDiagnostics {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub kappa: f64,
    pub op_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerStats {
    pub tolerance: f64,
    pub iterations: usize,
    pub criterion: f64,
    pub operator_norm_estimate: f64,
    pub converged: bool,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub y: DVector<f64>,
    /// Exact `x(y)` or LSQR `x_bar`.
    pub x: DVector<f64>,
    /// `1/2 ||f||^2` (or `1/2 ||g||^2` for the inexact method).
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub step: DVector<f64>,
    pub inner: Option<InnerStats>,
    pub exact: Option<ExactDiagnostics>,
}

impl IterationRecord {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceStatus {
    StepTolerance,
    GradientTolerance,
    MaxIterations,
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Inexact(ScheduleKind),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Exact => "gp".to_string(),
            Method::Inexact(kind) => format!("lsqr-{}", kind.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub status: TraceStatus,
    pub warnings: Vec<String>,
}

impl SolverTrace {
    fn new(method: Method) -> Self {
        Self { method, records: Vec::new(), status: TraceStatus::MaxIterations, warnings: Vec::new() }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, TraceStatus::Failed(_))
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// First parameter of each iterate.
    pub fn y_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y[0]).collect()
    }

    /// Inner LSQR iterations summed over the first `outer` records.
    pub fn total_inner_iterations(&self, outer: usize) -> usize {
        self.records
            .iter()
            .take(outer)
            .filter_map(|r| r.inner.as_ref().map(|s| s.iterations))
            .sum()
    }
}

fn check_start(problem: &SeparableProblem, y0: &DVector<f64>) -> Result<()> {
    problem.check_params(y0)?;
    if !problem.model.is_feasible(y0) {
        return Err(invalid("initial parameters are infeasible"));
    }
    Ok(())
}

enum Advance {
    Continue,
    Stop(TraceStatus),
}

/// Shared tail of both outer loops: stopping tests, step computation.
fn finish_iteration(
    opts: &OuterOptions,
    k: usize,
    jac: &DMatrix<f64>,
    residual: &DVector<f64>,
    gradient: &DVector<f64>,
) -> Result<(DVector<f64>, Option<TraceStatus>)> {
    if gradient.norm() <= opts.gradient_tolerance {
        return Ok((DVector::zeros(jac.ncols()), Some(TraceStatus::GradientTolerance)));
    }
    let step = gauss_newton_step(jac, residual)?;
    let status = if step.norm() <= opts.step_tolerance {
        Some(TraceStatus::StepTolerance)
    } else if k >= opts.max_outer_iterations {
        Some(TraceStatus::MaxIterations)
    } else {
        None
    };
    Ok((step, status))
}

fn exact_iteration(problem: &SeparableProblem, y: &DVector<f64>) -> Result<ExactDiagnostics> {
    let stacked = problem.stacked(y)?;
    let fact = DirectFactorization::new(&stacked)?;
    let x = fact.solve(&problem.b);
    let residual = fact.matrix() * &x - stacked.pad_data(&problem.b);
    let jacobian = problem.exact_jacobian(y, &fact, &x)?;
    let gradient = gradient(&jacobian, &residual)?;
    Ok(ExactDiagnostics {
        objective: 0.5 * residual.norm_squared(),
        x,
        residual,
        gradient,
        jacobian,
        kappa: f64::NAN,
        op_norm: f64::NAN,
    })
}

fn fill_conditioning(diag: &mut ExactDiagnostics, fact: &DirectFactorization) -> Result<()> {
    let sv = inner::singular_values(fact.matrix());
    let smin = sv.min();
    if !(smin > 1e-300) {
        return Err(Error::RankDeficient(smin));
    }
    diag.op_norm = sv.max();
    diag.kappa = diag.op_norm / smin;
    Ok(())
}

/// Exact variable projection with Gauss-Newton steps of unit length.
///
/// The trace holds one record per visited iterate `y^(0), y^(1), ...`; each
/// record carries the step taken from it. Failures after the first iterate
/// end the run with [`TraceStatus::Failed`] and the partial trace.
pub fn genvarpro(problem: &SeparableProblem, y0: &DVector<f64>, opts: &OuterOptions) -> Result<SolverTrace> {
    check_start(problem, y0)?;
    let mut trace = SolverTrace::new(Method::Exact);
    let mut y = y0.clone();
    for k in 0..=opts.max_outer_iterations {
        match exact_step(problem, &y, k, opts) {
            Ok((record, advance)) => {
                let step = record.step.clone();
                trace.records.push(record);
                match advance {
                    Advance::Continue => y += step,
                    Advance::Stop(status) => {
                        trace.status = status;
                        return Ok(trace);
                    }
                }
            }
            Err(e) => {
                trace.status = TraceStatus::Failed(format!("iteration {k}: {e}"));
                return Ok(trace);
            }
        }
    }
    Ok(trace)
}

fn exact_step(
    problem: &SeparableProblem,
    y: &DVector<f64>,
    k: usize,
    opts: &OuterOptions,
) -> Result<(IterationRecord, Advance)> {
    if !problem.model.is_feasible(y) {
        return Err(invalid(format!("iterate y = {:?} left the feasible region", y.as_slice())));
    }
    let diag = exact_iteration(problem, y)?;
    let (step, stop) = finish_iteration(opts, k, &diag.jacobian, &diag.residual, &diag.gradient)?;
    let record = IterationRecord {
        k,
        y: y.clone(),
        x: diag.x,
        objective: diag.objective,
        gradient: diag.gradient,
        jacobian: diag.jacobian,
        step,
        inner: None,
        exact: None,
    };
    Ok((record, stop.map_or(Advance::Continue, Advance::Stop)))
}

/// Inexact variable projection: LSQR inner solves at tolerance
/// `schedule.tolerance(k)`, inexact residual and Jacobian, unit
/// Gauss-Newton steps.
///
/// An LSQR solve that exhausts its iteration budget is not fatal: the best
/// iterate is used and a warning is added to the trace.
pub fn inexact_genvarpro(problem: &SeparableProblem, y0: &DVector<f64>, opts: &InexactOptions) -> Result<SolverTrace> {
    check_start(problem, y0)?;
    let mut trace = SolverTrace::new(Method::Inexact(opts.schedule.kind));

    if opts.check_precondition {
        let kappa0 = inner::condition_number(&problem.stacked(y0)?)?;
        let eps0 = opts.schedule.tolerance(0);
        if eps0 * kappa0 >= 1.0 {
            let msg = format!(
                "initial tolerance {eps0:e} times condition number {kappa0:e} is {:.3} >= 1; error bounds do not apply",
                eps0 * kappa0
            );
            log::warn!("{msg}");
            trace.warnings.push(msg);
        }
    }

    let mut y = y0.clone();
    for k in 0..=opts.outer.max_outer_iterations {
        match inexact_step(problem, &y, k, opts, &mut trace.warnings) {
            Ok((record, advance)) => {
                let step = record.step.clone();
                trace.records.push(record);
                match advance {
                    Advance::Continue => y += step,
                    Advance::Stop(status) => {
                        trace.status = status;
                        return Ok(trace);
                    }
                }
            }
            Err(e) => {
                trace.status = TraceStatus::Failed(format!("iteration {k}: {e}"));
                return Ok(trace);
            }
        }
    }
    Ok(trace)
}

fn inexact_step(
    problem: &SeparableProblem,
    y: &DVector<f64>,
    k: usize,
    opts: &InexactOptions,
    warnings: &mut Vec<String>,
) -> Result<(IterationRecord, Advance)> {
    if !problem.model.is_feasible(y) {
        return Err(invalid(format!("iterate y = {:?} left the feasible region", y.as_slice())));
    }
    let stacked = problem.stacked(y)?;
    let fact = DirectFactorization::new(&stacked)?;
    let dense = DenseOperator::new(fact.matrix().clone());
    let d = stacked.pad_data(&problem.b);

    let tolerance = opts.schedule.tolerance(k);
    let lsqr_opts = LsqrOptions::new(tolerance)
        .with_max_iterations(opts.lsqr_max_iterations)
        .with_norm_estimate(opts.norm_estimate);
    let sol = lsqr_solve(&dense, &d, &lsqr_opts)?;
    if !sol.converged {
        let msg = format!(
            "iteration {k}: LSQR stopped after {} iterations at criterion {:e} > tolerance {:e}",
            sol.iterations, sol.achieved_criterion, tolerance
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    // g = M x_bar - [b; 0] = -r_bar
    let g = -&sol.residual;
    let jacobian = problem.approx_jacobian(y, &fact, &sol.x_bar)?;
    let grad = gradient(&jacobian, &g)?;

    let exact = if opts.diagnostics {
        let x = fact.solve(&problem.b);
        let residual = fact.matrix() * &x - &d;
        let jac = problem.exact_jacobian(y, &fact, &x)?;
        let exact_grad = gradient(&jac, &residual)?;
        let mut diag = ExactDiagnostics {
            objective: 0.5 * residual.norm_squared(),
            x,
            residual,
            gradient: exact_grad,
            jacobian: jac,
            kappa: f64::NAN,
            op_norm: f64::NAN,
        };
        fill_conditioning(&mut diag, &fact)?;
        Some(diag)
    } else {
        None
    };

    let (step, stop) = finish_iteration(&opts.outer, k, &jacobian, &g, &grad)?;
    let record = IterationRecord {
        k,
        y: y.clone(),
        objective: 0.5 * g.norm_squared(),
        x: sol.x_bar,
        gradient: grad,
        jacobian,
        step,
        inner: Some(InnerStats {
            tolerance,
            iterations: sol.iterations,
            criterion: sol.achieved_criterion,
            operator_norm_estimate: sol.operator_norm_estimate,
            converged: sol.converged,
        }),
        exact,
    };
    Ok((record, stop.map_or(Advance::Continue, Advance::Stop)))
}
