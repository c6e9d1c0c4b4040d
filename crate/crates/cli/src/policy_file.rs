//! JSON policy files:
//! `{"meta": {...}, "policy": {"<key>": action | [probabilities]}}` where
//! the key is the state's comma-joined descending TTLs (`""` for ∅).

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use entpack_core::actions::{Action, ActionSpace, Provenance};
use entpack_core::dp::{EvalMethod, Policy};
use entpack_core::policies::EmptyActionSelection;
use entpack_core::statespace::{State, StateSpace};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::experiment::{EvaluationKind, Method};
use crate::presets::RegimePreset;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub p: f64,
    pub f: Option<f64>,
    pub ttl: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub format: u32,
    pub regime: RegimePreset,
    pub n: usize,
    pub t_max: u32,
    pub reduced: bool,
    pub states: usize,
    pub provenance: Provenance,
    pub actions: Vec<ActionRecord>,
    pub method: Method,
    pub tol: f64,
    pub eval: EvalMethod,
    pub seed: u64,
    pub episodes: u64,
    pub expected_time: f64,
    pub evaluation_kind: EvaluationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty_action: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<EmptyActionSelection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub meta: Meta,
    pub policy: Map<String, Value>,
}

pub struct LoadedPolicy {
    pub meta: Meta,
    pub actions: ActionSpace,
    pub space: StateSpace,
    pub policy: Policy,
}

pub fn action_records(actions: &ActionSpace) -> Vec<ActionRecord> {
    actions
        .actions()
        .iter()
        .map(|a| ActionRecord {
            p: a.p,
            f: a.f,
            ttl: a.ttl,
        })
        .collect()
}

impl PolicyFile {
    pub fn new(meta: Meta, space: &StateSpace, policy: &Policy) -> Result<Self> {
        ensure!(
            policy.len() == space.len(),
            "policy covers {} states, space has {}",
            policy.len(),
            space.len()
        );
        let n_actions = meta.actions.len();
        let mut map = Map::with_capacity(space.len());
        for (id, s) in space.states().iter().enumerate() {
            let entry = match policy.action(id) {
                Some(a) => Value::from(a),
                None => Value::from(policy.distribution(id, n_actions)),
            };
            map.insert(s.key(), entry);
        }
        Ok(PolicyFile { meta, policy: map })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading policy file {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing policy file {}", path.display()))
    }

    /// Rebuilds the action space, state space and policy, checking that
    /// every state has exactly one valid entry.
    pub fn load(self) -> Result<LoadedPolicy> {
        let meta = self.meta;
        ensure!(
            meta.format == FORMAT_VERSION,
            "unsupported policy file format {}",
            meta.format
        );
        let lambda = (meta.provenance == Provenance::SingleClick).then_some(meta.regime.lambda);
        let actions = ActionSpace::from_actions(
            meta.actions
                .iter()
                .map(|r| Action {
                    p: r.p,
                    f: r.f,
                    ttl: r.ttl,
                })
                .collect(),
            lambda,
            meta.provenance,
        )?;
        ensure!(
            actions.t_max() <= meta.t_max,
            "action TTL exceeds t_max {}",
            meta.t_max
        );
        let space = StateSpace::enumerate(meta.n, meta.t_max, meta.reduced)?;
        ensure!(
            self.policy.len() == space.len(),
            "policy has {} entries, state space has {}",
            self.policy.len(),
            space.len()
        );
        let n_actions = actions.len();
        let stochastic = self.policy.values().any(Value::is_array);
        let mut det = vec![usize::MAX; space.len()];
        let mut probs = vec![
            f64::NAN;
            if stochastic {
                space.len() * n_actions
            } else {
                0
            }
        ];
        for (key, value) in &self.policy {
            let state = State::from_key(key, meta.t_max)?;
            ensure!(state.key() == *key, "state key {key:?} is not canonical");
            let id = space
                .id_of(&state)
                .with_context(|| format!("state {key:?} is not in the state space"))?;
            if stochastic {
                let row = value
                    .as_array()
                    .with_context(|| format!("state {key:?}: expected a probability list"))?;
                ensure!(
                    row.len() == n_actions,
                    "state {key:?}: {} probabilities for {n_actions} actions",
                    row.len()
                );
                let mut total = 0.0;
                for (a, x) in row.iter().enumerate() {
                    let p = x
                        .as_f64()
                        .filter(|p| *p >= 0.0)
                        .with_context(|| format!("state {key:?}: bad probability {x}"))?;
                    probs[id * n_actions + a] = p;
                    total += p;
                }
                ensure!(
                    (total - 1.0).abs() < 1e-9,
                    "state {key:?}: probabilities sum to {total}"
                );
            } else {
                let a = value
                    .as_u64()
                    .with_context(|| format!("state {key:?}: expected an action index"))?
                    as usize;
                ensure!(a < n_actions, "state {key:?}: action {a} out of range");
                ensure!(det[id] == usize::MAX, "state {key:?} listed twice");
                det[id] = a;
            }
        }
        let policy = if stochastic {
            if probs.iter().any(|p| p.is_nan()) {
                bail!("policy file misses some states");
            }
            Policy::Stochastic { n_actions, probs }
        } else {
            Policy::Deterministic(det)
        };
        Ok(LoadedPolicy {
            meta,
            actions,
            space,
            policy,
        })
    }
}
