//! Batch front-end behind the `bp` binary: reads a model file, runs one command and writes
//! CSV/JSON artifacts into the output directory.
//!
//! Exit codes: 0 success, 1 verification failed, 2 usage, input or solver error.

mod commands;
pub mod files;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{run_g_eval, run_oracle, run_solve, run_sweep, run_transform, run_verify, SweepAxis, SweepParam};
pub use files::{CandidateFile, ConstraintSpec, Model, ModelFile};

use crate::error::{Error, Result};
use crate::verify::Tolerances;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bp", version, about = "Power-utility Bellman solver, oracle and verifier on lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// model file (schema bp-model/1)
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// output directory, created if missing
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// seed for randomized search starts
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// tolerance override NAME=VALUE with NAME in {mart, opt}
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    /// run sweep cells in parallel
    #[arg(long, global = true)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Backward induction: opportunity.csv, summary.json, drift_residual.csv, candidate.json
    Solve,
    /// Brute-force value over the model's strategy grid: oracle.json
    Oracle,
    /// Certificates for a candidate file: verify.json
    Verify {
        #[arg(long)]
        candidate: PathBuf,
    },
    /// Representative-portfolio transform: transformed_model.json, phi.json
    Transform,
    /// g, its gradient and its maximizer at L = ell: g_eval.json
    GEval {
        /// comma-separated portfolio
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
    },
    /// One solve per axis value: sweep.csv
    Sweep {
        /// NAME=v1,v2,... with NAME in {p, steps, theta, radius}
        #[arg(long, value_name = "NAME=VALUES")]
        sweep: String,
    },
}

impl Common {
    pub fn tolerances(&self) -> Result<Tolerances> {
        let mut tol = Tolerances::default();
        for item in &self.tol {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("tolerance \"{item}\" is not NAME=VALUE")))?;
            let v: f64 = value.trim().parse().map_err(|_| Error::Invalid(format!("tolerance value \"{value}\"")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("tolerance {name} must be nonnegative")));
            }
            match name.trim() {
                "mart" => tol.mart = v,
                "opt" => tol.opt = v,
                other => return Err(Error::Invalid(format!("unknown tolerance \"{other}\" (expected mart or opt)"))),
            }
        }
        Ok(tol)
    }

    pub fn model_file(&self) -> Result<ModelFile> {
        let path = self.model.as_ref().ok_or_else(|| Error::Invalid("--model is required".into()))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read model {}: {e}", path.display())))?;
        ModelFile::parse(&text)
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let common = &cli.common;
    let tol = common.tolerances()?;
    let file = common.model_file()?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Error::Invalid(format!("cannot create {}: {e}", common.out.display())))?;
    match &cli.command {
        Command::Solve => run_solve(&file, &common.out).map(|_| EXIT_OK),
        Command::Oracle => run_oracle(&file, &common.out).map(|_| EXIT_OK),
        Command::Verify { candidate } => {
            let text = std::fs::read_to_string(candidate)
                .map_err(|e| Error::Invalid(format!("cannot read candidate {}: {e}", candidate.display())))?;
            let cand = CandidateFile::parse(&text)?;
            let report = run_verify(&file, &cand, &tol, &common.out)?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY_FAILED })
        }
        Command::Transform => run_transform(&file, &common.out).map(|_| EXIT_OK),
        Command::GEval { y, ell } => {
            let y = parse_list(y)?;
            run_g_eval(&file, &y, *ell, common.seed, &common.out).map(|_| EXIT_OK)
        }
        Command::Sweep { sweep } => {
            let axis = SweepAxis::parse(sweep)?;
            run_sweep(&file, &axis, common.parallel, &common.out).map(|_| EXIT_OK)
        }
    }
}

pub(crate) fn parse_list(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("\"{s}\" is not a number"))))
        .collect()
}

#[cfg(test)]
mod tests;
