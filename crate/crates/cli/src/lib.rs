//! Benchmark runner for exact and inexact variable projection.
//!
//! Subcommands: `compare`, `bounds`, `gradcheck`, `table`. Each writes CSV
//! data, a `manifest.json` and (optionally) a gnuplot script into the output
//! directory. See [`config`] for the TOML schema.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn solver(e: ivarpro::Error) -> Self {
        match e {
            ivarpro::Error::Config { .. } => CliError::Config(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Io(String::new()).exit_code(), 1);
        assert_eq!(CliError::Solver(String::new()).exit_code(), 2);
        assert_eq!(CliError::Check(String::new()).exit_code(), 3);
        let cfg = ivarpro::Error::Config { field: "n".into(), message: "bad".into() };
        assert_eq!(CliError::solver(cfg).exit_code(), 1);
        assert_eq!(CliError::solver(ivarpro::Error::SingularStep).exit_code(), 2);
    }
}
