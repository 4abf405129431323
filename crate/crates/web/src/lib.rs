//! Browser demo bindings. Each export takes a JSON benchmark config (any
//! subset of the `[problem]` keys; empty for the defaults) and returns JSON.
//!
//! * `objective_curve`: reduced objective over a range of blur widths.
//! * `compare_schedules`: exact method against every tolerance schedule.
//! * `reconstruct`: exact inner solution at a chosen width and `lambda`.

use ivarpro::bench::{build_problem, reference_initial_tolerance, BenchConfig, ProblemInstance};
use ivarpro::bounds::{initial_tolerance, DEFAULT_SAFETY};
use ivarpro::inner::condition_number;
use ivarpro::varpro::{genvarpro, inexact_genvarpro, InexactOptions, OuterOptions, ScheduleKind, ToleranceSchedule};
use nalgebra::DVector;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Cap on LSQR iterations per inner solve, to keep the page responsive.
const LSQR_CAP: usize = 3000;

fn parse_config(json: &str) -> Result<BenchConfig, String> {
    let cfg: BenchConfig = if json.trim().is_empty() {
        BenchConfig::default()
    } else {
        serde_json::from_str(json).map_err(|e| format!("bad config: {e}"))?
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn instance(json: &str) -> Result<ProblemInstance, String> {
    build_problem(&parse_config(json)?).map_err(|e| e.to_string())
}

fn y(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct Curve {
    y: Vec<f64>,
    f: Vec<f64>,
    argmin: f64,
}

pub fn objective_curve_json(config: &str, lo: f64, hi: f64, points: usize) -> Result<String, String> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err("need 0 < lo < hi and at least two points".into());
    }
    let inst = instance(config)?;
    let ys: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let f = ys
        .iter()
        .map(|&v| inst.problem.objective(&y(v)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let argmin = ys[f.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)];
    to_json(&Curve { y: ys, f, argmin })
}

#[derive(Debug, Serialize)]
struct Series {
    label: String,
    y: Vec<f64>,
    grad: Vec<f64>,
    /// `|y_GP - y|`; empty for the exact method.
    gap: Vec<f64>,
    epsilon: Vec<f64>,
    inner_iterations: Vec<usize>,
    status: String,
}

#[derive(Debug, Serialize)]
struct Comparison {
    y0: f64,
    epsilon0: f64,
    runs: Vec<Series>,
}

pub fn compare_schedules_json(config: &str, y0: f64, iterations: usize) -> Result<String, String> {
    if !(y0 > 0.0 && y0.is_finite()) {
        return Err("y0 must be positive".into());
    }
    let inst = instance(config)?;
    let p = &inst.problem;
    let outer = OuterOptions { max_outer_iterations: iterations.clamp(1, 200), step_tolerance: 0.0, gradient_tolerance: 0.0 };
    let eps0 = match reference_initial_tolerance(y0) {
        Some(e) if inst.config == BenchConfig { y0: inst.config.y0.clone(), seed: inst.config.seed, ..BenchConfig::default() } => e,
        _ => {
            let kappa = condition_number(&p.stacked(&y(y0)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            initial_tolerance(kappa, DEFAULT_SAFETY).map_err(|e| e.to_string())?
        }
    };
    let exact = genvarpro(p, &y(y0), &outer).map_err(|e| e.to_string())?;
    let y_gp = exact.y_values();
    let series = |label: String, tr: &ivarpro::varpro::SolverTrace, gap: Vec<f64>| Series {
        label,
        y: tr.y_values(),
        grad: tr.records.iter().map(|r| r.gradient_norm()).collect(),
        gap,
        epsilon: tr.records.iter().filter_map(|r| r.inner.as_ref().map(|s| s.tolerance)).collect(),
        inner_iterations: tr.records.iter().filter_map(|r| r.inner.as_ref().map(|s| s.iterations)).collect(),
        status: format!("{:?}", tr.status),
    };
    let mut runs = vec![series("gp".into(), &exact, Vec::new())];
    for kind in ScheduleKind::ALL {
        let mut opts = InexactOptions::new(ToleranceSchedule::new(kind, eps0).map_err(|e| e.to_string())?);
        opts.outer = outer;
        opts.lsqr_max_iterations = LSQR_CAP;
        let tr = inexact_genvarpro(p, &y(y0), &opts).map_err(|e| e.to_string())?;
        let gap = y_gp.iter().zip(tr.y_values()).map(|(a, b)| (a - b).abs()).collect();
        runs.push(series(format!("lsqr-{}", kind.label()), &tr, gap));
    }
    to_json(&Comparison { y0, epsilon0: eps0, runs })
}

#[derive(Debug, Serialize)]
struct Reconstruction {
    x_true: Vec<f64>,
    x: Vec<f64>,
    b: Vec<f64>,
    rre: f64,
    objective: f64,
}

pub fn reconstruct_json(config: &str, sigma: f64, lambda: f64) -> Result<String, String> {
    if !(sigma > 0.0 && lambda > 0.0) {
        return Err("sigma and lambda must be positive".into());
    }
    let cfg = BenchConfig { lambda, ..parse_config(config)? };
    let inst = build_problem(&cfg).map_err(|e| e.to_string())?;
    let x = inst.problem.inner_solution(&y(sigma)).map_err(|e| e.to_string())?;
    let objective = inst.problem.objective(&y(sigma)).map_err(|e| e.to_string())?;
    to_json(&Reconstruction {
        rre: inst.relative_error(&x),
        x_true: inst.x_true.iter().copied().collect(),
        x: x.iter().copied().collect(),
        b: inst.b.iter().copied().collect(),
        objective,
    })
}

#[wasm_bindgen]
pub fn objective_curve(config: &str, lo: f64, hi: f64, points: usize) -> Result<String, JsValue> {
    objective_curve_json(config, lo, hi, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_schedules(config: &str, y0: f64, iterations: usize) -> Result<String, JsValue> {
    compare_schedules_json(config, y0, iterations).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn reconstruct(config: &str, sigma: f64, lambda: f64) -> Result<String, JsValue> {
    reconstruct_json(config, sigma, lambda).map_err(|e| JsValue::from_str(&e))
}
