//! Runs one policy method on one model instance.

use anyhow::{bail, Result};
use clap::ValueEnum;
use entpack_core::actions::{build_action_space, ActionSpace};
use entpack_core::dp::{
    optimality_certificate, policy_evaluation, policy_iteration, Policy, RoundRecord, ValueTable,
};
use entpack_core::montecarlo::{estimate, SimOptions, UniformRule};
use entpack_core::policies::{
    analytic_n2, best_constant, constant_policy, heuristic_policy, random_policy,
    select_empty_action, select_empty_action_by_simulation, Candidate, EmptyActionSelection,
    HeuristicSpec,
};
use entpack_core::statespace::{count_reduced, count_states, StateSpace};
use entpack_core::transitions::TransitionTable;
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::presets::RegimePreset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
pub enum Method {
    #[value(name = "policy-iteration")]
    #[serde(rename = "policy-iteration")]
    PolicyIteration,
    #[value(name = "heuristic")]
    #[serde(rename = "heuristic")]
    Heuristic,
    #[value(name = "best-constant")]
    #[serde(rename = "best-constant")]
    BestConstant,
    #[value(name = "random")]
    #[serde(rename = "random")]
    Random,
    #[value(name = "analytic-n2")]
    #[serde(rename = "analytic-n2")]
    AnalyticN2,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PolicyIteration,
        Method::Heuristic,
        Method::BestConstant,
        Method::Random,
        Method::AnalyticN2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PolicyIteration => "policy-iteration",
            Method::Heuristic => "heuristic",
            Method::BestConstant => "best-constant",
            Method::Random => "random",
            Method::AnalyticN2 => "analytic-n2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationKind {
    Exact,
    Simulated,
}

impl EvaluationKind {
    pub fn name(self) -> &'static str {
        match self {
            EvaluationKind::Exact => "exact",
            EvaluationKind::Simulated => "simulated",
        }
    }
}

/// Model data for one (regime, n). The state space and transition table
/// are only built when the instance is small enough for exact evaluation.
pub struct Instance {
    pub regime: RegimePreset,
    pub n: usize,
    pub actions: ActionSpace,
    pub exact: Option<(StateSpace, TransitionTable)>,
}

impl Instance {
    pub fn build(
        regime: &RegimePreset,
        n: usize,
        reduced: bool,
        exact_state_limit: usize,
    ) -> Result<Self> {
        let params = regime.params(n)?;
        let actions = build_action_space(&params)?;
        let t_max = actions.t_max();
        let count = if reduced {
            count_reduced(n, t_max)?
        } else {
            count_states(n, t_max)?
        };
        let exact = if count <= exact_state_limit as u128 {
            let space = StateSpace::enumerate(n, t_max, reduced)?;
            let table = TransitionTable::build(&space, &actions)?;
            Some((space, table))
        } else {
            None
        };
        Ok(Instance {
            regime: regime.clone(),
            n,
            actions,
            exact,
        })
    }

    pub fn space(&self) -> Option<&StateSpace> {
        self.exact.as_ref().map(|e| &e.0)
    }

    fn require_exact(&self, method: Method) -> Result<(&StateSpace, &TransitionTable)> {
        match &self.exact {
            Some((s, t)) => Ok((s, t)),
            None => bail!(
                "{} needs an explicit state space, which exceeds the exact-state limit at n = {}",
                method.name(),
                self.n
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub method: Method,
    pub expected_time: f64,
    pub kind: EvaluationKind,
    pub std_error: Option<f64>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    pub policy: Option<Policy>,
    pub values: Option<ValueTable>,
    pub empty_action: Option<usize>,
    pub selection: Option<EmptyActionSelection>,
    pub rounds: Vec<RoundRecord>,
    pub certificate: Option<f64>,
    pub tie: Option<bool>,
    pub candidates: Vec<Candidate>,
}

impl Outcome {
    fn exact(method: Method, policy: Policy, values: ValueTable) -> Self {
        Outcome {
            method,
            expected_time: values.empty_state_value(),
            kind: EvaluationKind::Exact,
            std_error: None,
            episodes: None,
            seed: None,
            policy: Some(policy),
            values: Some(values),
            empty_action: None,
            selection: None,
            rounds: Vec::new(),
            certificate: None,
            tie: None,
            candidates: Vec::new(),
        }
    }

    fn simulated(method: Method, mean: f64, std_error: f64, episodes: u64, seed: u64) -> Self {
        Outcome {
            method,
            expected_time: mean,
            kind: EvaluationKind::Simulated,
            std_error: Some(std_error),
            episodes: Some(episodes),
            seed: Some(seed),
            policy: None,
            values: None,
            empty_action: None,
            selection: None,
            rounds: Vec::new(),
            certificate: None,
            tie: None,
            candidates: Vec::new(),
        }
    }
}

pub fn run_method(inst: &Instance, method: Method, settings: &Settings) -> Result<Outcome> {
    let opts = &settings.eval;
    let sim = SimOptions {
        step_cap: settings.step_cap,
        histogram: false,
    };
    match method {
        Method::PolicyIteration => {
            let (space, table) = inst.require_exact(method)?;
            // the longest-TTL constant policy always terminates since t_max >= n
            let init = constant_policy(space.len(), inst.actions.len() - 1);
            let res = policy_iteration(table, &init, opts)?;
            let certificate = optimality_certificate(&res.values, table);
            let mut out = Outcome::exact(method, res.policy, res.values);
            out.empty_action = out.policy.as_ref().and_then(|p| p.action(0));
            out.rounds = res.rounds;
            out.certificate = Some(certificate);
            Ok(out)
        }
        Method::Heuristic => match &inst.exact {
            Some((space, table)) => {
                let spec = HeuristicSpec {
                    empty_action: None,
                    episodes: settings.episodes,
                    seed: settings.seed,
                    exact_state_limit: usize::MAX,
                };
                let sel = select_empty_action(space, table, &inst.actions, &spec, opts)?;
                let policy = heuristic_policy(space, &inst.actions, sel.action)?;
                let values = policy_evaluation(&policy, table, opts)?;
                let mut out = Outcome::exact(method, policy, values);
                out.empty_action = Some(sel.action);
                out.tie = Some(sel.tie);
                out.selection = Some(sel);
                Ok(out)
            }
            None => {
                let sel = select_empty_action_by_simulation(
                    inst.n,
                    &inst.actions,
                    settings.episodes,
                    settings.seed,
                    &sim,
                )?;
                let chosen = &sel.candidates[sel.action];
                let mut out = Outcome::simulated(
                    method,
                    chosen.expected_time.unwrap_or(f64::NAN),
                    chosen.std_error.unwrap_or(f64::NAN),
                    settings.episodes,
                    settings.seed,
                );
                out.empty_action = Some(sel.action);
                out.tie = Some(sel.tie);
                out.selection = Some(sel);
                Ok(out)
            }
        },
        Method::BestConstant => {
            let (space, table) = inst.require_exact(method)?;
            let best = best_constant(table, &inst.actions, opts)?;
            let mut out = Outcome::exact(
                method,
                constant_policy(space.len(), best.action),
                best.values,
            );
            out.empty_action = Some(best.action);
            out.candidates = best.candidates;
            Ok(out)
        }
        Method::Random => match &inst.exact {
            Some((space, table)) => {
                let policy = random_policy(space.len(), inst.actions.len());
                let values = policy_evaluation(&policy, table, opts)?;
                Ok(Outcome::exact(method, policy, values))
            }
            None => {
                let rule = UniformRule(inst.actions.len());
                let r = estimate(
                    &rule,
                    inst.n,
                    &inst.actions,
                    settings.episodes,
                    settings.seed,
                    &sim,
                )?;
                Ok(Outcome::simulated(
                    method,
                    r.mean,
                    r.std_error,
                    settings.episodes,
                    settings.seed,
                ))
            }
        },
        Method::AnalyticN2 => {
            let (space, table) = inst.require_exact(method)?;
            let res = analytic_n2(space, &inst.actions)?;
            let values = policy_evaluation(&res.policy, table, opts)?;
            let mut out = Outcome::exact(method, res.policy, values);
            out.expected_time = res.expected_time;
            out.empty_action = Some(res.empty_action);
            out.tie = Some(res.tie);
            Ok(out)
        }
    }
}
