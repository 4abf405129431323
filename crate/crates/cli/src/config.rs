//! Run configuration: a TOML file with `[problem]`, `[solver]`, `[schedules]`
//! and `[output]` sections. Every key is optional; an empty file runs the
//! default experiment.

use std::path::Path;

use ivarpro::bench::{reference_initial_tolerance, BenchConfig};
use ivarpro::bounds::initial_tolerance;
use ivarpro::inner::{condition_number, NormEstimate};
use ivarpro::varpro::{OuterOptions, ScheduleKind, SeparableProblem, ToleranceSchedule};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub problem: BenchConfig,
    pub solver: SolverSection,
    pub schedules: ScheduleSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_outer_iterations: usize,
    /// 0 runs every outer iteration, as in the reference experiment.
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
    pub lsqr_max_iterations: usize,
    pub norm_estimate: NormEstimate,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            max_outer_iterations: 50,
            step_tolerance: 0.0,
            gradient_tolerance: 0.0,
            lsqr_max_iterations: 10_000,
            norm_estimate: NormEstimate::Bidiagonal,
        }
    }
}

/// How the initial LSQR tolerance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Epsilon0Rule {
    /// Reference values for the default starting points, `auto` otherwise.
    Reference,
    /// `safety / kappa(M(y0))`.
    Auto,
    /// The value of `epsilon0`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// Labels `b`, `lb`, `ab`, `s` (or the long names).
    pub kinds: Vec<String>,
    pub rule: Epsilon0Rule,
    pub epsilon0: f64,
    pub safety: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            kinds: ScheduleKind::ALL.iter().map(|k| k.label().to_string()).collect(),
            rule: Epsilon0Rule::Reference,
            epsilon0: 1e-4,
            safety: ivarpro::bounds::DEFAULT_SAFETY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Last iteration listed by `table`.
    pub table_iterations: usize,
    pub gnuplot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), table_iterations: 7, gnuplot: true }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.problem.validate().map_err(|e| CliError::Config(format!("[problem] {e}")))?;
        let s = &self.solver;
        if !(s.step_tolerance >= 0.0 && s.gradient_tolerance >= 0.0) {
            return Err(CliError::Config("[solver] tolerances must be non-negative".into()));
        }
        if s.lsqr_max_iterations == 0 {
            return Err(CliError::Config("[solver] lsqr_max_iterations must be positive".into()));
        }
        if let NormEstimate::Known(v) = s.norm_estimate {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config("[solver] a known operator norm must be positive".into()));
            }
        }
        self.kinds()?;
        let sc = &self.schedules;
        if !(sc.epsilon0 > 0.0 && sc.epsilon0 < 1.0) {
            return Err(CliError::Config("[schedules] epsilon0 must lie in (0, 1)".into()));
        }
        if !(sc.safety > 0.0 && sc.safety < 1.0) {
            return Err(CliError::Config("[schedules] safety must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn kinds(&self) -> Result<Vec<ScheduleKind>, CliError> {
        let mut out = Vec::new();
        for name in &self.schedules.kinds {
            let kind: ScheduleKind = name.parse().map_err(|e| CliError::Config(format!("[schedules] {e}")))?;
            if !out.contains(&kind) {
                out.push(kind);
            }
        }
        Ok(out)
    }

    pub fn outer(&self) -> OuterOptions {
        OuterOptions {
            max_outer_iterations: self.solver.max_outer_iterations,
            step_tolerance: self.solver.step_tolerance,
            gradient_tolerance: self.solver.gradient_tolerance,
        }
    }

    /// Initial tolerance for a run started at `y0`.
    pub fn epsilon0(&self, problem: &SeparableProblem, y0: f64) -> Result<f64, CliError> {
        let auto = || {
            let op = problem.stacked(&DVector::from_element(1, y0)).map_err(CliError::solver)?;
            let kappa = condition_number(&op).map_err(CliError::solver)?;
            initial_tolerance(kappa, self.schedules.safety).map_err(CliError::solver)
        };
        match self.schedules.rule {
            Epsilon0Rule::Fixed => Ok(self.schedules.epsilon0),
            Epsilon0Rule::Auto => auto(),
            Epsilon0Rule::Reference => match reference_initial_tolerance(y0) {
                Some(e) if self.is_reference_problem() => Ok(e),
                _ => auto(),
            },
        }
    }

    /// Reference tolerances belong to the default problem (any seed); any
    /// other problem falls back to the automatic rule.
    fn is_reference_problem(&self) -> bool {
        let d = BenchConfig::default();
        let p = &self.problem;
        p.n == d.n
            && p.sigma_true == d.sigma_true
            && p.noise_level == d.noise_level
            && p.lambda == d.lambda
            && p.tau == d.tau
            && p.signal == d.signal
    }

    pub fn schedule(&self, kind: ScheduleKind, eps0: f64) -> Result<ToleranceSchedule, CliError> {
        ToleranceSchedule::new(kind, eps0).map_err(|e| CliError::Config(e.to_string()))
    }
}
