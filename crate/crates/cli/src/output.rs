//! CSV, manifest and gnuplot writers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;
use crate::CliError;

/// 17 significant digits: enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `2` -> `2`, `2.5` -> `2p5`; used in file names.
pub fn y0_tag(y0: f64) -> String {
    let plain = format!("{y0}");
    let s = if plain.len() > 12 { format!("{y0:e}") } else { plain };
    s.replace('.', "p").replace('-', "m")
}

/// Collects everything written into one output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.root.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json`; the manifest lists itself last.
    pub fn write_manifest(&mut self, mut manifest: Manifest) -> Result<(), CliError> {
        self.files.push("manifest.json".into());
        manifest.files = self.files.clone();
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.root.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub y0: f64,
    pub method: String,
    pub epsilon0: Option<f64>,
    pub records: usize,
    pub status: String,
    pub final_y: Option<f64>,
    pub final_gradient_norm: Option<f64>,
    pub total_inner_iterations: usize,
    pub warnings: Vec<String>,
    pub file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub core_version: String,
    /// Fully resolved configuration, overrides applied.
    pub config: Config,
    pub files: Vec<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub runs: Vec<RunSummary>,
    pub checks: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: ivarpro::VERSION.to_string(),
            config: config.clone(),
            files: Vec::new(),
            timings: BTreeMap::new(),
            runs: Vec::new(),
            checks: BTreeMap::new(),
        }
    }
}

/// Gnuplot script drawing `y` column `ycol` against column 1 for each file,
/// on a log scale when `log` is set.
pub fn gnuplot_script(title: &str, ylabel: &str, files: &[(String, String)], ycol: usize, log: bool) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title '{title}'\nset xlabel 'k'\nset ylabel '{ylabel}'\n"));
    if log {
        s.push_str("set logscale y\nset format y '10^{%L}'\n");
    }
    let plots: Vec<String> = files
        .iter()
        .map(|(file, label)| format!("'{file}' using 1:{ycol} with linespoints title '{label}'"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s.push_str("pause mouse close\n");
    s
}
