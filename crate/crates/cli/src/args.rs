use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use entpack_core::dp::EvalMethod;

use crate::experiment::Method;

#[derive(Debug, Parser)]
#[command(
    name = "entpack",
    version,
    about = "Policies for generating n simultaneous entangled links"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a policy for one n, write it to a policy file and report E[T].
    Solve(SolveArgs),
    /// Evaluate several methods over a range of n and write a results CSV.
    Sweep(SweepArgs),
    /// Aggregate a deterministic policy file into heat-map cells.
    Heatmap(HeatmapArgs),
    /// State-space sizes for (n, t_max).
    Count(CountArgs),
    /// Monte Carlo estimate of E[T] for a policy file.
    Simulate(SimulateArgs),
}

/// Flags shared by the commands that build a model instance.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file; flags take precedence over its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// near-term, far-term or custom.
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Policy method; repeat or comma-separate for sweeps.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub method: Vec<Method>,
    /// Convergence tolerance for policy evaluation.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Policy evaluation scheme: regenerative, jacobi or gauss-seidel.
    #[arg(long, value_parser = parse_eval)]
    pub eval: Option<EvalMethod>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Work on viable-projected states (default).
    #[arg(long, conflicts_with = "full")]
    pub reduced: bool,
    /// Work on the full state space.
    #[arg(long)]
    pub full: bool,
    /// Largest state count handled by exact evaluation; larger instances
    /// are simulated.
    #[arg(long)]
    pub exact_state_limit: Option<usize>,
    /// Steps after which a simulated episode is abandoned.
    #[arg(long)]
    pub step_cap: Option<u64>,
    /// Custom regime: decoherence rate.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Custom regime: trade-off parameter.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Custom regime: application fidelity threshold.
    #[arg(long)]
    pub f_app: Option<f64>,
    /// Custom regime: memory lifetime in single-click executions.
    #[arg(long)]
    pub n_exec: Option<f64>,
    /// Custom regime: photon detection probability.
    #[arg(long)]
    pub p_det: Option<f64>,
    /// Custom regime: single-click executions per time step.
    #[arg(long)]
    pub batch: Option<u64>,
}

impl CommonArgs {
    pub fn has_custom_parameters(&self) -> bool {
        self.gamma.is_some()
            || self.lambda.is_some()
            || self.f_app.is_some()
            || self.n_exec.is_some()
            || self.p_det.is_some()
            || self.batch.is_some()
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Policy file to write; defaults to policy_<regime>_n<n>_<method>.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Results CSV; rows are appended when the file already exists.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Deterministic policy file.
    #[arg(long)]
    pub policy: PathBuf,
    /// Heat-map CSV; metadata goes to <out>.meta.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregate over every state instead of viable-projected states only.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(long)]
    pub n: usize,
    /// Defaults to the regime's t_max.
    #[arg(long)]
    pub t_max: Option<u32>,
    #[arg(long, default_value = "near-term")]
    pub regime: String,
    /// Enumerate spaces up to this many states to confirm the formulas.
    #[arg(long, default_value_t = 5_000_000)]
    pub verify_limit: u128,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value_t = crate::config::DEFAULT_EPISODES)]
    pub episodes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub step_cap: Option<u64>,
    /// Also record the completion-time histogram.
    #[arg(long)]
    pub histogram: bool,
    /// Write the result JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Append a row to this results CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_eval(s: &str) -> Result<EvalMethod, String> {
    match s {
        "regenerative" => Ok(EvalMethod::Regenerative),
        "jacobi" => Ok(EvalMethod::Jacobi),
        "gauss-seidel" => Ok(EvalMethod::GaussSeidel),
        _ => Err(format!(
            "unknown evaluation scheme {s:?} (regenerative, jacobi, gauss-seidel)"
        )),
    }
}
