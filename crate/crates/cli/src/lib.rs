//! Command-line experiment runner: regime presets, policy files, sweeps,
//! heat maps, state counts and simulation.
//!
//! Exit codes: 0 success, 1 other errors, 2 infeasible `n > t_max`,
//! 3 non-convergence or a policy that never completes, 4 simulation step cap.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod heatmap;
pub mod policy_file;
pub mod presets;
pub mod sweep;

use std::ffi::OsString;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;

use crate::args::{Cli, Command};

pub const WORKERS_ENV: &str = "ENTPACK_WORKERS";

pub fn exit_code(err: &anyhow::Error) -> i32 {
    use entpack_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Infeasible { .. } => 2,
                E::NonConvergence { .. } | E::InfiniteExpectedTime { .. } => 3,
                E::StepCap { .. } => 4,
                _ => 1,
            };
        }
    }
    1
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use entpack_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Domain(_) => "domain",
                E::Infeasible { .. } => "infeasible",
                E::Overflow(_) => "overflow",
                E::NonConvergence { .. } => "non-convergence",
                E::InfiniteExpectedTime { .. } => "infinite-expected-time",
                E::StepCap { .. } => "step-cap",
                E::AbsorbingState(_) => "absorbing-state",
                E::Internal(_) => "internal",
            };
        }
    }
    "error"
}

fn report(kind: &str, message: String, code: i32) {
    let record = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{record}");
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let k: usize = v
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(a) => commands::solve(&a).map(drop),
        Command::Sweep(a) => commands::sweep(&a).map(drop),
        Command::Heatmap(a) => commands::heatmap_cmd(&a),
        Command::Count(a) => commands::count(&a).map(drop),
        Command::Simulate(a) => commands::simulate(&a).map(drop),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            // usage errors use 1; 2 is reserved for infeasible instances
            report("usage", e.to_string(), 1);
            return 1;
        }
    };
    match configure_workers().and_then(|()| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            report(error_kind(&e), format!("{e:#}"), code);
            code
        }
    }
}
