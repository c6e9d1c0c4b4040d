use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use entpack_core::montecarlo::{estimate, SimOptions, SimResult, TableRule, DEFAULT_STEP_CAP};
use entpack_core::statespace::{count_reduced, count_states, state_count_lower_bound, StateSpace};
use serde::Serialize;

use crate::args::{CountArgs, HeatmapArgs, SimulateArgs, SolveArgs, SweepArgs};
use crate::config::{default_policy_path, Settings};
use crate::experiment::{run_method, EvaluationKind, Instance, Method};
use crate::heatmap::{heatmap, write_csv, Aggregation, HeatmapMeta};
use crate::policy_file::{action_records, Meta, PolicyFile, FORMAT_VERSION};
use crate::presets::RegimePreset;
use crate::sweep::{self, append_rows, Row};

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub regime: String,
    pub n: usize,
    pub t_max: u32,
    pub method: Method,
    pub reduced: bool,
    pub states: Option<usize>,
    pub expected_time: f64,
    pub evaluation_kind: EvaluationKind,
    pub std_error: Option<f64>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    pub empty_action_ttl: Option<u32>,
    pub empty_action_tie: Option<bool>,
    pub improvement_rounds: Option<usize>,
    pub residual: Option<f64>,
    pub certificate: Option<f64>,
    pub policy_file: Option<PathBuf>,
}

pub fn solve(args: &SolveArgs) -> Result<SolveSummary> {
    let settings = Settings::resolve(&args.common)?;
    let n = settings.require_n()?;
    let method = match settings.methods.as_slice() {
        [] => Method::PolicyIteration,
        [m] => *m,
        _ => bail!("solve takes a single --method"),
    };
    let inst = Instance::build(
        &settings.regime,
        n,
        settings.reduced,
        settings.exact_state_limit,
    )?;
    let out = run_method(&inst, method, &settings)?;
    let policy_file = match (inst.space(), &out.policy) {
        (Some(space), Some(policy)) => {
            let meta = Meta {
                format: FORMAT_VERSION,
                regime: settings.regime.clone(),
                n,
                t_max: space.t_max(),
                reduced: space.is_reduced(),
                states: space.len(),
                provenance: inst.actions.provenance(),
                actions: action_records(&inst.actions),
                method,
                tol: settings.eval.tol,
                eval: settings.eval.method,
                seed: settings.seed,
                episodes: settings.episodes,
                expected_time: out.expected_time,
                evaluation_kind: out.kind,
                empty_action: out.empty_action,
                selection: out.selection.clone(),
            };
            let path = args
                .out
                .clone()
                .unwrap_or_else(|| default_policy_path(&settings, n, method));
            PolicyFile::new(meta, space, policy)?.write(&path)?;
            Some(path)
        }
        _ => None,
    };
    let summary = SolveSummary {
        regime: settings.regime.name.clone(),
        n,
        t_max: inst.actions.t_max(),
        method,
        reduced: settings.reduced,
        states: inst.space().map(StateSpace::len),
        expected_time: out.expected_time,
        evaluation_kind: out.kind,
        std_error: out.std_error,
        episodes: out.episodes,
        seed: out.seed,
        empty_action_ttl: out.empty_action.map(|a| inst.actions.get(a).ttl),
        empty_action_tie: out.tie,
        improvement_rounds: (method == Method::PolicyIteration).then_some(out.rounds.len()),
        residual: out.values.as_ref().map(|v| v.residual),
        certificate: out.certificate,
        policy_file,
    };
    print_json(&summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    regime: &'a str,
    rows: usize,
    failed: usize,
    out: &'a Path,
}

pub fn sweep(args: &SweepArgs) -> Result<Vec<Row>> {
    let settings = Settings::resolve(&args.common)?;
    let rows = sweep::run(&settings, |row| {
        append_rows(&args.out, std::slice::from_ref(row))
    })?;
    print_json(&SweepSummary {
        regime: &settings.regime.name,
        rows: rows.len(),
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
        out: &args.out,
    })?;
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct HeatmapSidecar<'a> {
    heatmap: HeatmapMeta,
    policy_file: &'a Path,
    regime: &'a RegimePreset,
    n: usize,
    method: Method,
    policy_reduced: bool,
    cells: usize,
}

pub fn heatmap_cmd(args: &HeatmapArgs) -> Result<()> {
    let loaded = PolicyFile::read(&args.policy)?.load()?;
    let aggregation = if args.full {
        Aggregation::Full
    } else {
        Aggregation::Reduced
    };
    let cells = heatmap(&loaded.space, &loaded.actions, &loaded.policy, aggregation)?;
    write_csv(&args.out, &cells)?;
    let sidecar = HeatmapSidecar {
        heatmap: HeatmapMeta::new(aggregation),
        policy_file: &args.policy,
        regime: &loaded.meta.regime,
        n: loaded.meta.n,
        method: loaded.meta.method,
        policy_reduced: loaded.meta.reduced,
        cells: cells.len(),
    };
    let meta_path = sidecar_path(&args.out);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&sidecar)? + "\n")
        .with_context(|| format!("writing {}", meta_path.display()))?;
    print_json(&sidecar)
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CountRecord {
    pub n: usize,
    pub t_max: u32,
    pub full: u128,
    pub reduced: u128,
    pub lower_bound: f64,
    /// `verified`, or `skipped` above the enumeration limit.
    pub enumeration: String,
}

pub fn count(args: &CountArgs) -> Result<CountRecord> {
    let t_max = match args.t_max {
        Some(t) => t,
        None => RegimePreset::by_name(&args.regime)?.t_max(),
    };
    let full = count_states(args.n, t_max)?;
    let reduced = count_reduced(args.n, t_max)?;
    let lower_bound = state_count_lower_bound(args.n, t_max)?;
    let enumeration = if full <= args.verify_limit {
        let f = StateSpace::full(args.n, t_max)?.len() as u128;
        let r = StateSpace::reduced(args.n, t_max)?.len() as u128;
        if (f, r) != (full, reduced) {
            bail!("enumeration gives ({f}, {r}) states but the formulas give ({full}, {reduced})");
        }
        "verified"
    } else {
        "skipped"
    };
    let record = CountRecord {
        n: args.n,
        t_max,
        full,
        reduced,
        lower_bound,
        enumeration: enumeration.into(),
    };
    print_json(&record)?;
    Ok(record)
}

#[derive(Debug, Serialize)]
pub struct SimulateRecord {
    pub policy_file: PathBuf,
    pub regime: String,
    pub n: usize,
    pub method: Method,
    pub result: SimResult,
}

pub fn simulate(args: &SimulateArgs) -> Result<SimulateRecord> {
    let loaded = PolicyFile::read(&args.policy)?.load()?;
    let rule = TableRule::new(&loaded.policy, &loaded.space)?;
    let opts = SimOptions {
        step_cap: args.step_cap.unwrap_or(DEFAULT_STEP_CAP),
        histogram: args.histogram,
    };
    let result = estimate(
        &rule,
        loaded.meta.n,
        &loaded.actions,
        args.episodes,
        args.seed,
        &opts,
    )?;
    let record = SimulateRecord {
        policy_file: args.policy.clone(),
        regime: loaded.meta.regime.name.clone(),
        n: loaded.meta.n,
        method: loaded.meta.method,
        result,
    };
    let text = serde_json::to_string_pretty(&record)?;
    println!("{text}");
    if let Some(out) = &args.out {
        std::fs::write(out, text + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    if let Some(csv) = &args.csv {
        let row = Row {
            n: record.n,
            method: record.method.name().into(),
            expected_t: Some(record.result.mean),
            evaluation_kind: Some(EvaluationKind::Simulated),
            std_error: Some(record.result.std_error),
            episodes: Some(record.result.episodes),
            seed: Some(record.result.seed),
            ratio_to_optimal: None,
            error: None,
        };
        append_rows(csv, &[row])?;
    }
    Ok(record)
}
