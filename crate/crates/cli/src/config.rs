use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Result};
use clap::ValueEnum;
use pepkit::schedule::FgmVariant;
use pepkit::sdp::SdpConfig;

use crate::{OutputArgs, SolverArgs};

#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Gm,
    Hbm,
    Fgm,
    File(PathBuf),
}

impl FromStr for MethodSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gm" => Ok(Self::Gm),
            "hbm" => Ok(Self::Hbm),
            "fgm" => Ok(Self::Fgm),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(format!(
                    "unknown method '{s}' (expected gm, hbm, fgm or file:<path>)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Main,
    Aux,
}

impl From<Variant> for FgmVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Main => FgmVariant::Main,
            Variant::Aux => FgmVariant::Auxiliary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

pub struct MethodParams {
    pub h: f64,
    pub alpha: f64,
    pub beta: f64,
    pub variant: Option<Variant>,
    pub numeric: bool,
}

/// Settings shared by the table-producing commands.
pub struct RunConfig {
    pub grid: Vec<usize>,
    pub sdp: SdpConfig,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub digits: usize,
}

impl RunConfig {
    pub fn new(grid: Vec<usize>, solver: &SolverArgs, output: &OutputArgs) -> Result<Self> {
        if grid.is_empty() {
            bail!("the step-count grid is empty");
        }
        if let Some(bad) = grid.iter().find(|&&n| n == 0) {
            bail!("step counts must be positive (got {bad})");
        }
        if !(3..=17).contains(&output.digits) {
            bail!("--digits must be between 3 and 17");
        }
        Ok(Self {
            grid,
            sdp: sdp_config(solver)?,
            format: output.format,
            out: output.out.clone(),
            digits: output.digits as usize,
        })
    }
}

pub fn sdp_config(s: &SolverArgs) -> Result<SdpConfig> {
    if !(s.tol > 0.0 && s.tol < 1.0) {
        bail!("--tol must lie in (0, 1)");
    }
    if s.max_iter == 0 {
        bail!("--max-iter must be positive");
    }
    Ok(SdpConfig {
        tolerance: s.tol,
        max_iterations: s.max_iter,
        ..SdpConfig::default()
    })
}
