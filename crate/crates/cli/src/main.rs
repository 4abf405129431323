use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ivarpro_cli::commands::{self, CheckModel, GradcheckOptions, Overrides};
use ivarpro_cli::CliError;

#[derive(Parser)]
#[command(name = "ivarpro", version, about = "Exact and inexact variable projection benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Noise seed (overrides `[problem] seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated schedules, e.g. `b,ab` (overrides `[schedules] kinds`).
    #[arg(long, global = true, value_delimiter = ',')]
    schedules: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact method against every tolerance schedule.
    Compare,
    /// Measured inner-solve errors against their a-posteriori bounds.
    Bounds,
    /// Finite-difference check of the reduced Jacobian and gradient.
    Gradcheck {
        /// `blur` or `constant`.
        #[arg(long, default_value = "blur")]
        model: CheckModel,
        /// Scale the model derivative by 1.1 (negative control).
        #[arg(long)]
        corrupt_derivative: bool,
        #[arg(long, default_value_t = 5)]
        points: usize,
    },
    /// First iterations of the exact method and the exponential schedule.
    Table,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ov = Overrides { out: cli.out, seed: cli.seed, schedules: cli.schedules };
    let cfg = commands::resolve(cli.config.as_deref(), &ov)?;
    match cli.command {
        Command::Compare => commands::compare(&cfg),
        Command::Bounds => commands::bounds(&cfg),
        Command::Gradcheck { model, corrupt_derivative, points } => {
            commands::gradcheck(&cfg, &GradcheckOptions { model, corrupt_derivative, points })
        }
        Command::Table => commands::table(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
