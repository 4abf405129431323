//! The four subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ivarpro::bench::{build_problem, ProblemInstance};
use ivarpro::bounds::{BoundInputs, BoundReport};
use ivarpro::inner::spectral_norm;
use ivarpro::linops::{gaussian_toeplitz, LinearOperator, Operator};
use ivarpro::varpro::{
    genvarpro, inexact_genvarpro, ConstantModel, InexactOptions, IterationRecord, Method, ScheduleKind, SeparableModel,
    SeparableProblem, SolverTrace, TraceStatus,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::output::{gnuplot_script, num, opt_num, y0_tag, Manifest, OutputDir, RunSummary};
use crate::CliError;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub schedules: Option<Vec<String>>,
}

/// Load the config (defaults when `path` is `None`) and apply overrides.
pub fn resolve(path: Option<&Path>, ov: &Overrides) -> Result<Config, CliError> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(out) = &ov.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = ov.seed {
        cfg.problem.seed = seed;
    }
    if let Some(kinds) = &ov.schedules {
        cfg.schedules.kinds = kinds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One solver run from one starting point.
#[derive(Debug, Clone)]
pub struct Run {
    pub y0: f64,
    pub epsilon0: Option<f64>,
    pub trace: SolverTrace,
}

impl Run {
    pub fn label(&self) -> String {
        self.trace.method.label()
    }

    fn summary(&self, file: Option<String>) -> RunSummary {
        let last = self.trace.last();
        RunSummary {
            y0: self.y0,
            method: self.label(),
            epsilon0: self.epsilon0,
            records: self.trace.records.len(),
            status: status_text(&self.trace.status),
            final_y: last.map(|r| r.y[0]),
            final_gradient_norm: last.map(|r| r.gradient_norm()),
            total_inner_iterations: self.trace.total_inner_iterations(usize::MAX),
            warnings: self.trace.warnings.clone(),
            file,
        }
    }
}

fn status_text(s: &TraceStatus) -> String {
    match s {
        TraceStatus::StepTolerance => "step-tolerance".into(),
        TraceStatus::GradientTolerance => "gradient-tolerance".into(),
        TraceStatus::MaxIterations => "max-iterations".into(),
        TraceStatus::Failed(msg) => format!("failed: {msg}"),
    }
}

/// Runs the exact method (when `kinds` contains `None`) and each schedule
/// from every configured starting point, in parallel. Results come back in
/// job order.
pub fn run_all(
    cfg: &Config,
    problem: &SeparableProblem,
    kinds: &[Option<ScheduleKind>],
    diagnostics: bool,
) -> Result<Vec<Run>, CliError> {
    let mut jobs = Vec::new();
    for &y0 in &cfg.problem.y0 {
        for &kind in kinds {
            let eps0 = match kind {
                Some(_) => Some(cfg.epsilon0(problem, y0)?),
                None => None,
            };
            jobs.push((y0, kind, eps0));
        }
    }
    let results: Vec<Result<Run, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(y0, kind, eps0)| {
                s.spawn(move || {
                    let start = DVector::from_element(1, y0);
                    let trace = match (kind, eps0) {
                        (Some(kind), Some(eps0)) => {
                            let mut opts = InexactOptions::new(cfg.schedule(kind, eps0)?);
                            opts.outer = cfg.outer();
                            opts.lsqr_max_iterations = cfg.solver.lsqr_max_iterations;
                            opts.norm_estimate = cfg.solver.norm_estimate;
                            opts.diagnostics = diagnostics;
                            inexact_genvarpro(problem, &start, &opts)
                        }
                        _ => genvarpro(problem, &start, &cfg.outer()),
                    }
                    .map_err(CliError::solver)?;
                    Ok(Run { y0, epsilon0: eps0, trace })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    results.into_iter().collect()
}

fn build(cfg: &Config) -> Result<ProblemInstance, CliError> {
    build_problem(&cfg.problem).map_err(CliError::solver)
}

fn failures(runs: &[Run]) -> Vec<String> {
    runs.iter()
        .filter_map(|r| match &r.trace.status {
            TraceStatus::Failed(msg) => Some(format!("{} from y0 = {}: {msg}", r.label(), r.y0)),
            _ => None,
        })
        .collect()
}

fn finish(mut out: OutputDir, manifest: Manifest, runs: &[Run]) -> Result<(), CliError> {
    out.write_manifest(manifest)?;
    let failed = failures(runs);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(failed.join("; ")))
    }
}

pub const TRACE_HEADER: [&str; 10] = [
    "k",
    "y",
    "objective",
    "grad_norm",
    "step_norm",
    "epsilon",
    "inner_iterations",
    "inner_criterion",
    "inner_converged",
    "rre",
];

pub fn trace_rows(run: &Run, inst: &ProblemInstance) -> Vec<Vec<String>> {
    run.trace
        .records
        .iter()
        .map(|rec| {
            let inner = rec.inner.as_ref();
            vec![
                rec.k.to_string(),
                num(rec.y[0]),
                num(rec.objective),
                num(rec.gradient_norm()),
                num(rec.step.norm()),
                opt_num(inner.map(|s| s.tolerance)),
                inner.map(|s| s.iterations.to_string()).unwrap_or_default(),
                opt_num(inner.map(|s| s.criterion)),
                inner.map(|s| s.converged.to_string()).unwrap_or_default(),
                num(inst.relative_error(&rec.x)),
            ]
        })
        .collect()
}

pub fn trace_file(y0: f64, method: &Method) -> String {
    format!("trace_y0_{}_{}.csv", y0_tag(y0), method.label())
}

pub fn gap_file(y0: f64, kind: ScheduleKind) -> String {
    format!("gap_y0_{}_{}.csv", y0_tag(y0), kind.label())
}

/// `|y_GP^(k) - y^(k)|` over the common iterations of two traces.
pub fn gaps(exact: &SolverTrace, inexact: &SolverTrace) -> Vec<(f64, f64, f64)> {
    exact.y_values().into_iter().zip(inexact.y_values()).map(|(a, b)| (a, b, (a - b).abs())).collect()
}

/// Exact method plus every schedule; traces and gap files.
pub fn compare(cfg: &Config) -> Result<(), CliError> {
    let kinds = cfg.kinds()?;
    let mut manifest = Manifest::new("compare", cfg);
    let t = Instant::now();
    let inst = build(cfg)?;
    manifest.timings.insert("build".into(), t.elapsed().as_secs_f64());
    let mut out = OutputDir::create(Path::new(&cfg.output.dir))?;

    let t = Instant::now();
    let mut jobs = vec![None];
    jobs.extend(kinds.iter().map(|&k| Some(k)));
    let runs = run_all(cfg, &inst.problem, &jobs, false)?;
    manifest.timings.insert("solve".into(), t.elapsed().as_secs_f64());

    let mut gap_plots = Vec::new();
    for run in &runs {
        let file = trace_file(run.y0, &run.trace.method);
        out.write_csv(&file, &TRACE_HEADER, &trace_rows(run, &inst))?;
        manifest.runs.push(run.summary(Some(file)));
    }
    for &y0 in &cfg.problem.y0 {
        let exact = &runs.iter().find(|r| r.y0 == y0 && r.trace.method == Method::Exact).expect("exact run").trace;
        for &kind in &kinds {
            let other = &runs
                .iter()
                .find(|r| r.y0 == y0 && r.trace.method == Method::Inexact(kind))
                .expect("inexact run")
                .trace;
            let rows: Vec<Vec<String>> = gaps(exact, other)
                .into_iter()
                .enumerate()
                .map(|(k, (a, b, g))| vec![k.to_string(), num(a), num(b), num(g)])
                .collect();
            let file = gap_file(y0, kind);
            out.write_csv(&file, &["k", "y_gp", "y_lsqr", "gap"], &rows)?;
            gap_plots.push((file, format!("y0={y0} {}", kind.label())));
        }
    }
    if cfg.output.gnuplot && !gap_plots.is_empty() {
        out.write_text("plot.gp", &gnuplot_script("|y_GP - y_LSQR|", "gap", &gap_plots, 4, true))?;
    }
    for run in &runs {
        println!(
            "{:>8} y0={:<4} records={:<3} y={:<22} |grad|={:.3e} inner={}",
            run.label(),
            run.y0,
            run.trace.records.len(),
            run.trace.last().map(|r| num(r.y[0])).unwrap_or_default(),
            run.trace.last().map(|r| r.gradient_norm()).unwrap_or(f64::NAN),
            run.trace.total_inner_iterations(usize::MAX),
        );
    }
    println!("wrote {} files to {}", out.files().len() + 1, out.path().display());
    finish(out, manifest, &runs)
}

pub const BOUNDS_HEADER: [&str; 14] = [
    "k",
    "epsilon",
    "kappa",
    "eps_kappa",
    "inner_converged",
    "err_x",
    "bound_x",
    "err_r",
    "bound_r",
    "err_j",
    "bound_j",
    "valid",
    "violation",
    "tolerated",
];

/// Measured inner-solve errors against the a-posteriori bounds.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub k: usize,
    pub epsilon: f64,
    pub converged: bool,
    pub measured: [f64; 3],
    pub report: BoundReport,
}

impl BoundRow {
    /// A bound exceeded while its hypotheses hold.
    pub fn violation(&self) -> bool {
        let bounds = [self.report.solution_bound, self.report.residual_bound, self.report.jacobian_bound];
        self.converged && self.report.valid && self.measured.iter().zip(bounds).any(|(m, b)| b.is_some_and(|b| *m > b))
    }

    /// Violations at tolerances near machine precision are expected: the
    /// computed residual can no longer certify the stopping rule.
    pub fn tolerated(&self) -> bool {
        self.epsilon <= 1e3 * f64::EPSILON
    }

    fn csv(&self) -> Vec<String> {
        let r = &self.report;
        vec![
            self.k.to_string(),
            num(self.epsilon),
            num(r.kappa),
            num(self.epsilon * r.kappa),
            self.converged.to_string(),
            num(self.measured[0]),
            opt_num(r.solution_bound),
            num(self.measured[1]),
            opt_num(r.residual_bound),
            num(self.measured[2]),
            opt_num(r.jacobian_bound),
            r.valid.to_string(),
            self.violation().to_string(),
            self.tolerated().to_string(),
        ]
    }
}

pub fn bound_rows(problem: &SeparableProblem, trace: &SolverTrace) -> Result<Vec<BoundRow>, CliError> {
    let m = problem.model().data_len();
    let q = problem.regularizer().rows();
    let b_norm = problem.data().norm();
    let mut rows = Vec::new();
    for rec in &trace.records {
        let (Some(inner), Some(exact)) = (rec.inner.as_ref(), rec.exact.as_ref()) else {
            continue;
        };
        let op = problem.stacked(&rec.y).map_err(CliError::solver)?.to_dense();
        let dx = &exact.x - &rec.x;
        let measured = [dx.norm(), (&op * &dx).norm(), spectral_norm(&(&rec.jacobian - &exact.jacobian))];
        let report = BoundReport::evaluate(&BoundInputs {
            epsilon: inner.tolerance,
            kappa: exact.kappa,
            b_norm,
            op_norm: exact.op_norm,
            params: rec.y.len(),
            data_rows: m,
            reg_rows: q,
            max_deriv_norm: problem.max_derivative_norm(&rec.y).map_err(CliError::solver)?,
        });
        rows.push(BoundRow { k: rec.k, epsilon: inner.tolerance, converged: inner.converged, measured, report });
    }
    Ok(rows)
}

/// Every schedule with diagnostics: measured errors next to their bounds.
pub fn bounds(cfg: &Config) -> Result<(), CliError> {
    let kinds = cfg.kinds()?;
    let mut manifest = Manifest::new("bounds", cfg);
    let t = Instant::now();
    let inst = build(cfg)?;
    let mut out = OutputDir::create(Path::new(&cfg.output.dir))?;
    let jobs: Vec<_> = kinds.iter().map(|&k| Some(k)).collect();
    let runs = run_all(cfg, &inst.problem, &jobs, true)?;
    manifest.timings.insert("solve".into(), t.elapsed().as_secs_f64());

    let mut fatal = Vec::new();
    let mut plots = Vec::new();
    let mut total = 0;
    for run in &runs {
        let rows = bound_rows(&inst.problem, &run.trace)?;
        let file = format!("bounds_y0_{}_{}.csv", y0_tag(run.y0), run.label());
        out.write_csv(&file, &BOUNDS_HEADER, &rows.iter().map(BoundRow::csv).collect::<Vec<_>>())?;
        for row in rows.iter().filter(|r| r.violation()) {
            total += 1;
            let msg = format!(
                "{} y0={} k={} eps={:.3e} eps*kappa={:.3e}",
                run.label(),
                run.y0,
                row.k,
                row.epsilon,
                row.epsilon * row.report.kappa
            );
            if row.tolerated() {
                println!("violation (tolerated, eps <= 1e3 u): {msg}");
            } else {
                println!("violation: {msg}");
                fatal.push(msg);
            }
        }
        plots.push((file.clone(), format!("y0={} {} err_x", run.y0, run.label())));
        manifest.runs.push(run.summary(Some(file)));
    }
    if cfg.output.gnuplot && !plots.is_empty() {
        out.write_text("plot.gp", &gnuplot_script("solution error", "||x - x_bar||", &plots, 6, true))?;
    }
    manifest.checks.insert("violations".into(), total.into());
    manifest.checks.insert("fatal_violations".into(), fatal.len().into());
    println!("{total} bound violations, {} outside the tolerated range", fatal.len());
    let failed = failures(&runs);
    out.write_manifest(manifest)?;
    if !failed.is_empty() {
        return Err(CliError::Solver(failed.join("; ")));
    }
    if !fatal.is_empty() {
        return Err(CliError::Check(format!("bound violated: {}", fatal[0])));
    }
    Ok(())
}

/// Model used by `gradcheck`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckModel {
    /// The benchmark blur.
    #[default]
    Blur,
    /// `A(y) = A(sigma_true)` for every `y`.
    Constant,
}

impl std::str::FromStr for CheckModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "blur" => Ok(Self::Blur),
            "constant" => Ok(Self::Constant),
            other => Err(format!("unknown model `{other}` (expected blur or constant)")),
        }
    }
}

/// Scales every derivative of the wrapped model; a negative control for
/// `gradcheck`.
#[derive(Debug)]
struct CorruptedModel {
    inner: Arc<dyn SeparableModel>,
    factor: f64,
}

impl SeparableModel for CorruptedModel {
    fn data_len(&self) -> usize {
        self.inner.data_len()
    }

    fn signal_len(&self) -> usize {
        self.inner.signal_len()
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn operator(&self, y: &DVector<f64>) -> ivarpro::Result<Operator> {
        self.inner.operator(y)
    }

    fn derivative(&self, y: &DVector<f64>, j: usize) -> ivarpro::Result<Operator> {
        let d = self.inner.derivative(y, j)?.to_dense() * self.factor;
        Ok(Arc::new(ivarpro::linops::DenseOperator::new(d)))
    }

    fn is_feasible(&self, y: &DVector<f64>) -> bool {
        self.inner.is_feasible(y)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradcheckOptions {
    pub model: CheckModel,
    pub corrupt_derivative: bool,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckPoint {
    pub y: f64,
    pub jacobian_error: f64,
    pub gradient_error: f64,
    pub gradient: f64,
    pub gradient_fd: f64,
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Analytic Jacobian and gradient against central differences at `y`.
pub fn check_point(problem: &SeparableProblem, y: f64) -> Result<GradcheckPoint, CliError> {
    let yv = DVector::from_element(1, y);
    let fact = problem.factorize(&yv).map_err(CliError::solver)?;
    let x = fact.solve(problem.data());
    let f = problem.reduced_residual(&yv, &x).map_err(CliError::solver)?;
    let jac: DMatrix<f64> = problem.exact_jacobian(&yv, &fact, &x).map_err(CliError::solver)?;
    let g = (jac.transpose() * &f)[0];

    let h = 1e-5 * y.abs().max(1.0);
    let (yp, ym) = (DVector::from_element(1, y + h), DVector::from_element(1, y - h));
    let fp = problem.residual_at(&yp).map_err(CliError::solver)?;
    let fm = problem.residual_at(&ym).map_err(CliError::solver)?;
    let jac_fd = (&fp - &fm) / (2.0 * h);
    let g_fd = (0.5 * fp.norm_squared() - 0.5 * fm.norm_squared()) / (2.0 * h);

    let col = jac.column(0).into_owned();
    let jscale = col.norm().max(jac_fd.norm());
    let jacobian_error = if jscale == 0.0 { 0.0 } else { (&col - &jac_fd).norm() / jscale };
    let gradient_error = relative(g, g_fd, 1e-6 * col.norm() * f.norm());
    Ok(GradcheckPoint { y, jacobian_error, gradient_error, gradient: g, gradient_fd: g_fd })
}

pub fn gradcheck_problem(inst: &ProblemInstance, opts: &GradcheckOptions) -> Result<SeparableProblem, CliError> {
    let p = &inst.problem;
    let model: Arc<dyn SeparableModel> = match opts.model {
        CheckModel::Blur => p.model().clone(),
        CheckModel::Constant => {
            let a: Operator = Arc::new(gaussian_toeplitz(inst.config.sigma_true, inst.config.n).map_err(CliError::solver)?);
            Arc::new(ConstantModel::new(a, 1))
        }
    };
    let model: Arc<dyn SeparableModel> =
        if opts.corrupt_derivative { Arc::new(CorruptedModel { inner: model, factor: 1.1 }) } else { model };
    SeparableProblem::new(model, p.data().clone(), p.regularizer().clone(), p.lambda()).map_err(CliError::solver)
}

/// Finite-difference check at `points` random feasible widths drawn from
/// `[sigma_true / 2, 3 sigma_true / 2]`.
pub fn gradcheck(cfg: &Config, opts: &GradcheckOptions) -> Result<(), CliError> {
    let mut manifest = Manifest::new("gradcheck", cfg);
    let t = Instant::now();
    let inst = build(cfg)?;
    let problem = gradcheck_problem(&inst, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.problem.seed);
    let sigma = cfg.problem.sigma_true;
    let mut points = Vec::new();
    while points.len() < opts.points.max(1) {
        let y = rng.random_range(0.5 * sigma..1.5 * sigma);
        if problem.model().is_feasible(&DVector::from_element(1, y)) {
            points.push(check_point(&problem, y)?);
        }
    }
    manifest.timings.insert("check".into(), t.elapsed().as_secs_f64());

    let mut out = OutputDir::create(Path::new(&cfg.output.dir))?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                i.to_string(),
                num(p.y),
                num(p.jacobian_error),
                num(p.gradient_error),
                num(p.gradient),
                num(p.gradient_fd),
            ]
        })
        .collect();
    out.write_csv("gradcheck.csv", &["point", "y", "jacobian_rel_err", "gradient_rel_err", "gradient", "gradient_fd"], &rows)?;

    let worst = points
        .iter()
        .flat_map(|p| [("jacobian", p.jacobian_error, p.y), ("gradient", p.gradient_error, p.y)])
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one point");
    println!("max relative error {:.3e} ({} at y = {})", worst.1, worst.0, worst.2);
    manifest.checks.insert("max_relative_error".into(), worst.1.into());
    manifest.checks.insert("tolerance".into(), GRADCHECK_TOLERANCE.into());
    out.write_manifest(manifest)?;
    if worst.1 <= GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "{} relative error {:.3e} at y = {} exceeds {GRADCHECK_TOLERANCE:e}",
            worst.0, worst.1, worst.2
        )))
    }
}

pub const TABLE_HEADER: [&str; 8] = ["y0", "k", "rre_gp", "rre_ab", "y_gp", "y_ab", "grad_gp", "grad_ab"];

/// Exact method against the exponential schedule over the first iterations.
pub fn table(cfg: &Config) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    cfg.solver.max_outer_iterations = cfg.output.table_iterations;
    let mut manifest = Manifest::new("table", &cfg);
    let t = Instant::now();
    let inst = build(&cfg)?;
    let runs = run_all(&cfg, &inst.problem, &[None, Some(ScheduleKind::Exponential)], false)?;
    manifest.timings.insert("solve".into(), t.elapsed().as_secs_f64());
    let mut out = OutputDir::create(Path::new(&cfg.output.dir))?;

    let mut rows = Vec::new();
    let mut text = String::new();
    for pair in runs.chunks(2) {
        let (gp, ab) = (&pair[0], &pair[1]);
        text.push_str(&format!("y0 = {}\n", gp.y0));
        text.push_str(&format!(
            "{:>3}  {:>10}  {:>10}  {:>10}  {:>10}  {:>12}  {:>12}\n",
            "k", "RRE(GP)", "RRE(ab)", "y(GP)", "y(ab)", "|grad|(GP)", "|grad|(ab)"
        ));
        let len = gp.trace.records.len().max(ab.trace.records.len());
        for k in 0..len {
            let (g, a) = (gp.trace.records.get(k), ab.trace.records.get(k));
            let rre = |r: Option<&IterationRecord>| r.map(|r| inst.relative_error(&r.x));
            let yv = |r: Option<&IterationRecord>| r.map(|r| r.y[0]);
            let gr = |r: Option<&IterationRecord>| r.map(|r| r.gradient_norm());
            rows.push(vec![
                gp.y0.to_string(),
                k.to_string(),
                opt_num(rre(g)),
                opt_num(rre(a)),
                opt_num(yv(g)),
                opt_num(yv(a)),
                opt_num(gr(g)),
                opt_num(gr(a)),
            ]);
            let f4 = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
            let e4 = |v: Option<f64>| v.map(|v| format!("{v:.4e}")).unwrap_or_default();
            text.push_str(&format!(
                "{k:>3}  {:>10}  {:>10}  {:>10}  {:>10}  {:>12}  {:>12}\n",
                f4(rre(g)),
                f4(rre(a)),
                f4(yv(g)),
                f4(yv(a)),
                e4(gr(g)),
                e4(gr(a))
            ));
        }
        text.push('\n');
        manifest.runs.push(gp.summary(None));
        manifest.runs.push(ab.summary(None));
    }
    out.write_csv("table.csv", &TABLE_HEADER, &rows)?;
    out.write_text("table.txt", &text)?;
    print!("{text}");
    finish(out, manifest, &runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        let mut cfg = Config::default();
        cfg.problem.n = 24;
        cfg.problem.y0 = vec![2.0];
        cfg.solver.max_outer_iterations = 4;
        cfg
    }

    #[test]
    fn overrides_win_over_the_file() {
        let ov = Overrides { out: Some("x".into()), seed: Some(9), schedules: Some(vec!["ab".into()]) };
        let cfg = resolve(None, &ov).unwrap();
        assert_eq!(cfg.output.dir, "x");
        assert_eq!(cfg.problem.seed, 9);
        assert_eq!(cfg.kinds().unwrap(), vec![ScheduleKind::Exponential]);
        let bad = Overrides { schedules: Some(vec!["q".into()]), ..Overrides::default() };
        assert!(matches!(resolve(None, &bad), Err(CliError::Config(_))));
    }

    #[test]
    fn runs_come_back_in_job_order() {
        let cfg = small();
        let inst = build(&cfg).unwrap();
        let runs = run_all(&cfg, &inst.problem, &[None, Some(ScheduleKind::Linear), Some(ScheduleKind::FixedSmall)], false)
            .unwrap();
        let labels: Vec<_> = runs.iter().map(Run::label).collect();
        assert_eq!(labels, ["gp", "lsqr-lb", "lsqr-s"]);
        assert!(runs.iter().all(|r| r.trace.records.len() == 5));
        assert!(runs[0].epsilon0.is_none() && runs[1].epsilon0.is_some());
    }

    #[test]
    fn gaps_pair_up_iterates() {
        let cfg = small();
        let inst = build(&cfg).unwrap();
        let runs = run_all(&cfg, &inst.problem, &[None, Some(ScheduleKind::FixedSmall)], false).unwrap();
        let g = gaps(&runs[0].trace, &runs[1].trace);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0].2, 0.0);
        assert!(g.iter().all(|(a, b, d)| (a - b).abs() == *d && *d <= 1e-6));
    }

    #[test]
    fn corrupted_derivative_is_detected_and_constant_model_is_clean() {
        let cfg = small();
        let inst = build(&cfg).unwrap();
        let good = gradcheck_problem(&inst, &GradcheckOptions::default()).unwrap();
        let p = check_point(&good, 2.5).unwrap();
        assert!(p.jacobian_error <= GRADCHECK_TOLERANCE && p.gradient_error <= GRADCHECK_TOLERANCE, "{p:?}");
        let bad = gradcheck_problem(&inst, &GradcheckOptions { corrupt_derivative: true, ..Default::default() }).unwrap();
        assert!(check_point(&bad, 2.5).unwrap().jacobian_error > 1e-2);
        let flat = gradcheck_problem(&inst, &GradcheckOptions { model: CheckModel::Constant, ..Default::default() }).unwrap();
        let p = check_point(&flat, 2.5).unwrap();
        assert_eq!((p.jacobian_error, p.gradient_error, p.gradient, p.gradient_fd), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn tolerance_near_roundoff_excuses_violations() {
        let report = BoundReport::evaluate(&BoundInputs {
            epsilon: 1e-14,
            kappa: 10.0,
            b_norm: 1.0,
            op_norm: 1.0,
            params: 1,
            data_rows: 4,
            reg_rows: 3,
            max_deriv_norm: 1.0,
        });
        let row = BoundRow { k: 3, epsilon: 1e-14, converged: true, measured: [1.0, 0.0, 0.0], report };
        assert!(row.violation() && row.tolerated());
        let loose = BoundRow { epsilon: 1e-6, ..row.clone() };
        assert!(!loose.tolerated());
        let unconverged = BoundRow { converged: false, ..row };
        assert!(!unconverged.violation());
    }
}
