//! `pepkit`: worst-case bounds, optimized step sizes and verification suites
//! for fixed-step first-order methods.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{MethodSpec, OutputFormat, RunConfig, Variant};

#[derive(Parser)]
#[command(
    name = "pepkit",
    version,
    about = "Worst-case performance estimation for first-order methods"
)]
struct Cli {
    /// Verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case bound factors for a method over a grid of step counts.
    Bound(BoundArgs),
    /// Optimized step sizes: relaxation value, recovered schedule and crosscheck.
    Optimize(OptimizeArgs),
    /// Run invariant suites; exits nonzero if any check fails.
    Verify(VerifyArgs),
    /// Reference tables and plot data.
    Table(TableArgs),
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Interior-point stopping tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Interior-point iteration limit.
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Significant digits in CSV output.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u8).range(3..=17))]
    digits: u8,
}

#[derive(Args)]
struct BoundArgs {
    /// gm, hbm, fgm, or file:<path> for a schedule stored as JSON.
    #[arg(long, default_value = "gm")]
    method: MethodSpec,
    /// Comma-separated step counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10,20,40")]
    n: Vec<usize>,
    /// Gradient-method step length.
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// Heavy-ball step length.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Heavy-ball momentum.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Accelerated-method point to bound; both when omitted.
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    /// Solve the SDP even where a closed form exists.
    #[arg(long)]
    numeric: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10")]
    n: Vec<usize>,
    /// Directory for the recovered schedules (`optimized_n<N>.json`).
    #[arg(long, default_value = "schedules")]
    schedule_dir: PathBuf,
    /// Print each recovered schedule as update rules.
    #[arg(long)]
    render: bool,
    /// Render with `+` signs and negated coefficients.
    #[arg(long, requires = "render")]
    plus_sign: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Gradient,
    Appendix,
    FgmEquiv,
    Cocoercivity,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    /// Seed for every randomized check.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Write a JSON report of every check here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableKind {
    /// Heavy ball and accelerated methods next to the classical rates.
    Momentum,
    /// Optimized step sizes.
    Optimized,
    /// Long-format `method,n,inverse_factor` for plotting.
    Plot,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_enum, default_value_t = TableKind::Momentum)]
    kind: TableKind,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10,20,40")]
    n: Vec<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bound(a) => {
            let cfg = RunConfig::new(a.n, &a.solver, &a.output)?;
            let params = config::MethodParams {
                h: a.h,
                alpha: a.alpha,
                beta: a.beta,
                variant: a.variant,
                numeric: a.numeric,
            };
            commands::cmd_bound(&cfg, &a.method, &params)?;
            Ok(true)
        }
        Command::Optimize(a) => {
            let cfg = RunConfig::new(a.n, &a.solver, &a.output)?;
            commands::cmd_optimize(&cfg, &a.schedule_dir, a.render.then_some(a.plus_sign))
        }
        Command::Verify(a) => {
            let suites = match a.suite {
                Suite::All => vec![
                    Suite::Gradient,
                    Suite::Appendix,
                    Suite::FgmEquiv,
                    Suite::Cocoercivity,
                ],
                s => vec![s],
            };
            commands::cmd_verify(
                &suites,
                a.seed,
                &config::sdp_config(&a.solver)?,
                a.out.as_deref(),
            )
        }
        Command::Table(a) => {
            let cfg = RunConfig::new(a.n, &a.solver, &a.output)?;
            commands::cmd_table(&cfg, a.kind)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
