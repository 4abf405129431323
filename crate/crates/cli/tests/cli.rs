use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ivarpro::bench::build_problem;
use ivarpro::varpro::{Method, ScheduleKind};
use ivarpro_cli::commands::{resolve, run_all, trace_file, Overrides, TRACE_HEADER};
use tempfile::TempDir;

const SMALL: &str = "[problem]\nn = 32\ny0 = [2.0, 4.0]\n[solver]\nmax_outer_iterations = 8\n";

fn ivarpro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivarpro")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_in(dir: &TempDir, cmd: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir.path(), config);
    let out = dir.path().join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (ivarpro(&args), out)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn empty_config_runs_the_default_experiment() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "compare", "", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for y0 in ["2", "4"] {
        for m in ["gp", "lsqr-b", "lsqr-lb", "lsqr-ab", "lsqr-s"] {
            let y = column(&out.join(format!("trace_y0_{y0}_{m}.csv")), "y");
            assert_eq!(y.len(), 51, "{m}");
        }
    }
    // exponential schedule: gap decays at least like 2^(-k/4) over k in [2, 20]
    let gap = column(&out.join("gap_y0_2_ab.csv"), "gap");
    let pts: Vec<(f64, f64)> = (2..=20).map(|k| (k as f64, gap[k].max(1e-300).log2())).collect();
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / 19.0, b + y / 19.0));
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    assert!(slope <= -0.25, "slope {slope}");
    assert!(column(&out.join("gap_y0_2_s.csv"), "gap").iter().all(|g| *g <= 1e-6));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let mut on_disk: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    on_disk.sort();
    let mut listed: Vec<String> = files.iter().map(|s| s.to_string()).collect();
    listed.sort();
    assert_eq!(listed, on_disk);
    assert!(files.contains(&"plot.gp"));
    assert_eq!(manifest["config"]["problem"]["n"], 128);
    assert_eq!(manifest["config"]["solver"]["max_outer_iterations"], 50);
    assert!(manifest["timings"]["solve"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 10);
}

#[test]
fn trace_csvs_round_trip_to_the_in_memory_traces() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "compare", SMALL, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = resolve(Some(&dir.path().join("config.toml")), &Overrides::default()).unwrap();
    let inst = build_problem(&cfg.problem).unwrap();
    let mut jobs = vec![None];
    jobs.extend(ScheduleKind::ALL.iter().map(|&k| Some(k)));
    let runs = run_all(&cfg, &inst.problem, &jobs, false).unwrap();
    assert_eq!(runs.len(), 10);
    for run in &runs {
        let (header, rows) = read_csv(&out.join(trace_file(run.y0, &run.trace.method)));
        assert_eq!(header, TRACE_HEADER);
        assert_eq!(rows.len(), run.trace.records.len());
        for (row, rec) in rows.iter().zip(&run.trace.records) {
            let f = |i: usize| row[i].parse::<f64>().unwrap().to_bits();
            assert_eq!(row[0].parse::<usize>().unwrap(), rec.k);
            assert_eq!(f(1), rec.y[0].to_bits());
            assert_eq!(f(2), rec.objective.to_bits());
            assert_eq!(f(3), rec.gradient_norm().to_bits());
            assert_eq!(f(4), rec.step.norm().to_bits());
            assert_eq!(f(9), inst.relative_error(&rec.x).to_bits());
            match (&rec.inner, run.trace.method) {
                (Some(s), Method::Inexact(_)) => {
                    assert_eq!(f(5), s.tolerance.to_bits());
                    assert_eq!(row[6].parse::<usize>().unwrap(), s.iterations);
                    assert_eq!(f(7), s.criterion.to_bits());
                    assert_eq!(row[8].parse::<bool>().unwrap(), s.converged);
                }
                (None, Method::Exact) => assert!(row[5..9].iter().all(String::is_empty)),
                _ => panic!("inner stats do not match the method"),
            }
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (oa, out_a) = run_in(&a, "compare", SMALL, &[]);
    let (ob, out_b) = run_in(&b, "compare", SMALL, &[]);
    assert_eq!((code(&oa), code(&ob)), (0, 0));
    let mut n = 0;
    for entry in fs::read_dir(&out_a).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            assert_eq!(fs::read(out_a.join(&name)).unwrap(), fs::read(out_b.join(&name)).unwrap(), "{name:?}");
            n += 1;
        }
    }
    assert_eq!(n, 18);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    for text in ["[problem]\nlambda = -1.0\n", "[solver]\nunknown = 3\n", "[problem\n"] {
        let (o, _) = run_in(&dir, "compare", text, &[]);
        assert_eq!(code(&o), 1, "{text}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    }
    let (o, _) = run_in(&dir, "compare", SMALL, &["--schedules", "ab,zz"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&ivarpro(&["table", "--config", "/nonexistent/cfg.toml"])), 1);
    assert_eq!(code(&ivarpro(&["frobnicate"])), 1);
}

#[test]
fn solver_failure_exits_with_two_and_keeps_partial_output() {
    let dir = TempDir::new().unwrap();
    // far from the true width the first Gauss-Newton step overshoots below zero
    let (o, out) = run_in(&dir, "compare", "[problem]\nn = 16\ny0 = [20.0]\n[solver]\nmax_outer_iterations = 5\n", &["--schedules", "s"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("feasible"));
    let rows = read_csv(&out.join("trace_y0_20_gp.csv")).1;
    assert_eq!(rows.len(), 1);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn seed_and_schedule_flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "compare", SMALL, &["--seed", "99", "--schedules", "ab,b"]);
    assert_eq!(code(&o), 0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["problem"]["seed"], 99);
    assert!(out.join("gap_y0_2_ab.csv").exists() && out.join("gap_y0_2_b.csv").exists());
    assert!(!out.join("gap_y0_2_lb.csv").exists());

    let other = TempDir::new().unwrap();
    let (o, out2) = run_in(&other, "compare", SMALL, &["--schedules", "ab"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(out.join("trace_y0_2_gp.csv")).unwrap(), fs::read(out2.join("trace_y0_2_gp.csv")).unwrap());
}

#[test]
fn bounds_dominate_on_noise_free_data_with_a_loose_tolerance() {
    let dir = TempDir::new().unwrap();
    let config = "[problem]\nn = 32\nnoise_level = 0.0\ny0 = [2.5]\n[solver]\nmax_outer_iterations = 6\n[schedules]\nkinds = [\"b\"]\nrule = \"auto\"\nsafety = 0.5\n";
    let (o, out) = run_in(&dir, "bounds", config, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let path = out.join("bounds_y0_2p5_lsqr-b.csv");
    let (_, rows) = read_csv(&path);
    assert_eq!(rows.len(), 7);
    let eps_kappa = column(&path, "eps_kappa");
    assert!(eps_kappa.iter().all(|p| (0.0..1.0).contains(p)), "{eps_kappa:?}");
    for (err, bound) in [("err_x", "bound_x"), ("err_r", "bound_r"), ("err_j", "bound_j")] {
        for (e, b) in column(&path, err).iter().zip(column(&path, bound)) {
            assert!(*e <= b, "{err}: {e} > {b}");
        }
    }
}

#[test]
fn default_bounds_run_passes() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "bounds", "", &["--schedules", "b,lb,s"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for m in ["b", "lb", "s"] {
        let (header, rows) = read_csv(&out.join(format!("bounds_y0_2_lsqr-{m}.csv")));
        let v = header.iter().position(|h| h == "violation").unwrap();
        assert_eq!(rows.len(), 51);
        assert!(rows.iter().all(|r| r[v] == "false"), "schedule {m}");
    }
}

#[test]
fn gradcheck_passes_fails_on_corruption_and_passes_on_a_constant_model() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "gradcheck", "", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));
    assert_eq!(column(&out.join("gradcheck.csv"), "y").len(), 5);

    let (o, _) = run_in(&dir, "gradcheck", "", &["--corrupt-derivative"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at y ="));

    let (o, out) = run_in(&dir, "gradcheck", "", &["--model", "constant"]);
    assert_eq!(code(&o), 0);
    assert!(column(&out.join("gradcheck.csv"), "jacobian_rel_err").iter().all(|e| *e == 0.0));
}

#[test]
fn table_reaches_the_minimizer_within_seven_iterations() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "table", "", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("table.txt").exists());
    let path = out.join("table.csv");
    let (y0s, ks) = (column(&path, "y0"), column(&path, "k"));
    assert_eq!(y0s.len(), 16);
    let (y_gp, y_ab) = (column(&path, "y_gp"), column(&path, "y_ab"));
    let (g_gp, g_ab) = (column(&path, "grad_gp"), column(&path, "grad_ab"));
    for block in 0..2 {
        let b = 8 * block;
        assert_eq!(ks[b], 0.0);
        assert_eq!((y_gp[b], y_ab[b]), (y0s[b], y0s[b]));
        assert!(g_gp[b + 7] <= 1e-3 && g_ab[b + 7] <= 1e-3);
        assert!((y_gp[b + 7] - y_ab[b + 7]).abs() <= 1e-3);
        for k in 3..8 {
            assert!(g_gp[b + k] <= g_gp[b + k - 1] * (1.0 + 1e-6) + 1e-12, "k = {k}");
        }
    }
    // k = 0 error is that of the exact inner solve at y0
    let rre = column(&path, "rre_gp")[0];
    let inst = build_problem(&ivarpro::bench::BenchConfig::default()).unwrap();
    let x0 = inst.problem.inner_solution(&nalgebra::DVector::from_element(1, 2.0)).unwrap();
    assert_eq!(rre.to_bits(), inst.relative_error(&x0).to_bits());
}
