//! One-dimensional blind deconvolution benchmark.
//!
//! A signal is blurred by a Gaussian Toeplitz kernel of unknown width and
//! corrupted by noise rescaled to an exact relative level. The regularizer is
//! a weighted first difference `L = W D` with
//! `W_ii = (|(D x_true)_i| + tau)^{-1/2}`, so that
//! `||L x_true||^2 = sum_i (D x_true)_i^2 / (|(D x_true)_i| + tau)`, which
//! approximates `||D x_true||_1`.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{first_difference, gaussian_toeplitz, gaussian_toeplitz_derivative, LinearOperator, Operator, RowScaled};
use crate::varpro::{SeparableModel, SeparableProblem};

/// `A(sigma)`: `n x n` Gaussian blur with one parameter, feasible for `sigma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianBlurModel {
    n: usize,
}

impl GaussianBlurModel {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(config_error("n", format!("signal length must be at least 2, got {n}")));
        }
        Ok(Self { n })
    }
}

impl SeparableModel for GaussianBlurModel {
    fn data_len(&self) -> usize {
        self.n
    }

    fn signal_len(&self) -> usize {
        self.n
    }

    fn num_params(&self) -> usize {
        1
    }

    fn operator(&self, y: &DVector<f64>) -> Result<Operator> {
        Ok(Arc::new(gaussian_toeplitz(y[0], self.n)?))
    }

    fn derivative(&self, y: &DVector<f64>, j: usize) -> Result<Operator> {
        if j != 0 {
            return Err(Error::InvalidArgument(format!("blur model has one parameter, asked for {j}")));
        }
        Ok(Arc::new(gaussian_toeplitz_derivative(y[0], self.n)?))
    }

    fn is_feasible(&self, y: &DVector<f64>) -> bool {
        y.len() == 1 && y[0] > 0.0 && y[0].is_finite()
    }
}

/// Built-in ground-truth signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignalShape {
    /// Plateau, ramp with a sharp drop, and a smooth bump.
    #[default]
    Piecewise,
    /// Two smooth Gaussian bumps under a sine window.
    GaussianBumps,
}

impl SignalShape {
    pub fn name(self) -> &'static str {
        match self {
            Self::Piecewise => "piecewise",
            Self::GaussianBumps => "gaussian-bumps",
        }
    }
}

impl FromStr for SignalShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise" => Ok(Self::Piecewise),
            "gaussian-bumps" => Ok(Self::GaussianBumps),
            other => Err(config_error("signal", format!("unknown signal shape `{other}`"))),
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

/// Ground-truth signal of length `n >= 8` with values in `[0, 1]` and zero
/// end points.
pub fn default_signal(n: usize, shape: SignalShape) -> Result<DVector<f64>> {
    if n < 8 {
        return Err(config_error("n", format!("signal length must be at least 8, got {n}")));
    }
    let last = (n - 1) as f64;
    let mut x = DVector::from_fn(n, |i, _| {
        let t = i as f64 / last;
        match shape {
            SignalShape::Piecewise => {
                if (0.1..0.3).contains(&t) {
                    0.6
                } else if (0.4..0.6).contains(&t) {
                    0.2 + 0.8 * (t - 0.4) / 0.2
                } else if (0.65..0.9).contains(&t) {
                    let s = (std::f64::consts::PI * (t - 0.65) / 0.25).sin();
                    0.5 * s * s
                } else {
                    0.0
                }
            }
            SignalShape::GaussianBumps => {
                let window = (std::f64::consts::PI * t).sin();
                let bumps = 0.8 * (-(t - 0.3).powi(2) / 0.005).exp() + 0.5 * (-(t - 0.7).powi(2) / 0.01).exp();
                (window * bumps).clamp(0.0, 1.0)
            }
        }
    });
    x[0] = 0.0;
    x[n - 1] = 0.0;
    Ok(x)
}

/// `L = W D` with `W_ii = (|(D x_true)_i| + tau)^{-1/2}`.
pub fn build_regularizer(x_true: &DVector<f64>, tau: f64) -> Result<RowScaled> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(config_error("tau", format!("weight floor must be positive, got {tau}")));
    }
    let d: Operator = Arc::new(first_difference(x_true.len())?);
    let dx = d.apply(x_true);
    let weights = dx.map(|v| 1.0 / (v.abs() + tau).sqrt());
    RowScaled::new(weights, d)
}

/// Benchmark parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n: usize,
    pub sigma_true: f64,
    /// `||noise|| / ||b_true||`.
    pub noise_level: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Initial guesses for the blur width.
    pub y0: Vec<f64>,
    pub tau: f64,
    pub signal: SignalShape,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 128,
            sigma_true: 3.0,
            noise_level: 0.05,
            lambda: 0.0379,
            seed: 2024,
            y0: vec![2.0, 4.0],
            tau: 1e-8,
            signal: SignalShape::Piecewise,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(config_error("n", format!("must be at least 8, got {}", self.n)));
        }
        if !(self.sigma_true > 0.0 && self.sigma_true.is_finite()) {
            return Err(config_error("sigma_true", "must be positive"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(config_error("noise_level", "must be finite and non-negative"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(config_error("lambda", "must be positive"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(config_error("tau", "must be positive"));
        }
        if self.y0.is_empty() || self.y0.iter().any(|&y| !(y > 0.0 && y.is_finite())) {
            return Err(config_error("y0", "needs at least one positive initial guess"));
        }
        Ok(())
    }
}

/// Initial LSQR tolerances used with the default experiment, keyed by
/// starting blur width.
pub fn reference_initial_tolerance(y0: f64) -> Option<f64> {
    if y0 == 2.0 {
        Some(1.8718e-4)
    } else if y0 == 4.0 {
        Some(1.1239e-4)
    } else {
        None
    }
}

/// A fully built benchmark instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub problem: SeparableProblem,
    pub b: DVector<f64>,
    pub b_true: DVector<f64>,
    pub x_true: DVector<f64>,
    pub regularizer: Arc<RowScaled>,
    pub config: BenchConfig,
    /// Realized `||b - b_true|| / ||b_true||`.
    pub noise_ratio: f64,
}

impl ProblemInstance {
    /// `||x - x_true|| / ||x_true||`.
    pub fn relative_error(&self, x: &DVector<f64>) -> f64 {
        (x - &self.x_true).norm() / self.x_true.norm()
    }
}

/// Build the benchmark deterministically from `cfg`.
pub fn build_problem(cfg: &BenchConfig) -> Result<ProblemInstance> {
    cfg.validate()?;
    let model = GaussianBlurModel::new(cfg.n)?;
    let x_true = default_signal(cfg.n, cfg.signal)?;
    let a = gaussian_toeplitz(cfg.sigma_true, cfg.n)?;
    let b_true = a.apply(&x_true);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let raw: DVector<f64> = DVector::from_fn(cfg.n, |_, _| StandardNormal.sample(&mut rng));
    let b = if cfg.noise_level == 0.0 {
        b_true.clone()
    } else {
        let noise: DVector<f64> = &raw * (cfg.noise_level * b_true.norm() / raw.norm());
        &b_true + noise
    };
    let noise_ratio = (&b - &b_true).norm() / b_true.norm();

    let regularizer = Arc::new(build_regularizer(&x_true, cfg.tau)?);
    let problem = SeparableProblem::new(Arc::new(model), b.clone(), regularizer.clone(), cfg.lambda)?;
    Ok(ProblemInstance { problem, b, b_true, x_true, regularizer, config: cfg.clone(), noise_ratio })
}

/// Minimize the reduced objective of a one-parameter problem on a grid over
/// `[lo, hi]`: a coarse pass with 100x the final spacing, then a fine pass of
/// spacing `resolution` over two coarse cells around the coarse minimizer.
pub fn grid_minimize(problem: &SeparableProblem, lo: f64, hi: f64, resolution: f64) -> Result<(f64, f64)> {
    if !(lo < hi && resolution > 0.0) {
        return Err(Error::InvalidArgument("grid needs lo < hi and positive resolution".into()));
    }
    let scan = |a: f64, b: f64, h: f64| -> Result<(f64, f64)> {
        let steps = ((b - a) / h).round() as usize;
        let mut best = (a, f64::INFINITY);
        for i in 0..=steps {
            let y = a + h * i as f64;
            let f = problem.objective(&DVector::from_element(1, y))?;
            if f < best.1 {
                best = (y, f);
            }
        }
        Ok(best)
    };
    let coarse = 100.0 * resolution;
    let (yc, _) = scan(lo, hi, coarse)?;
    let a = (yc - coarse).max(lo);
    let b = (yc + coarse).min(hi);
    scan(a, b, resolution)
}
