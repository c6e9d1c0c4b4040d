//! The heuristic, baseline and closed-form `n = 2` policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::ActionSpace;
use crate::dp::{policy_evaluation, EvalOptions, Policy, ValueTable};
use crate::error::{Error, Result};
use crate::montecarlo::{estimate, ActionRule, SimOptions};
use crate::statespace::{viable_count, StateSpace};
use crate::transitions::TransitionTable;

/// The heuristic as a rule on raw TTLs, usable without a state space.
///
/// - no viable links: the configured empty-state action;
/// - `n - 1` viable links: the highest-probability action;
/// - otherwise: the highest-probability action whose TTL is at least the
///   smallest viable TTL minus one.
#[derive(Debug, Clone)]
pub struct HeuristicRule {
    n: usize,
    empty_action: usize,
    max_p: usize,
    /// matching[t] = action for a smallest viable TTL of t
    matching: Vec<usize>,
}

impl HeuristicRule {
    pub fn new(n: usize, actions: &ActionSpace, empty_action: usize) -> Result<Self> {
        if empty_action >= actions.len() {
            return Err(Error::domain(format!(
                "empty-state action {empty_action} out of range"
            )));
        }
        let t_max = actions.t_max();
        let mut matching = vec![0; t_max as usize + 1];
        for (t, slot) in matching.iter_mut().enumerate().skip(1) {
            *slot = actions
                .max_probability_with_ttl_at_least((t as u32).saturating_sub(1))
                .ok_or_else(|| Error::Internal(format!("no action with TTL >= {}", t - 1)))?;
        }
        Ok(HeuristicRule {
            n,
            empty_action,
            max_p: actions.max_probability(),
            matching,
        })
    }

    #[inline]
    pub fn action_for(&self, ttls: &[u8]) -> usize {
        let viable = viable_count(ttls, self.n);
        if viable == 0 {
            self.empty_action
        } else if viable == self.n - 1 {
            self.max_p
        } else {
            self.matching[ttls[viable - 1] as usize]
        }
    }

    pub fn empty_action(&self) -> usize {
        self.empty_action
    }
}

impl ActionRule for HeuristicRule {
    #[inline]
    fn choose(&self, ttls: &[u8], _: &mut rand_chacha::ChaCha8Rng) -> usize {
        self.action_for(ttls)
    }
}

/// Heuristic policy over a state space with a fixed empty-state action.
pub fn heuristic_policy(
    space: &StateSpace,
    actions: &ActionSpace,
    empty_action: usize,
) -> Result<Policy> {
    let rule = HeuristicRule::new(space.n(), actions, empty_action)?;
    Ok(Policy::Deterministic(
        space
            .states()
            .iter()
            .map(|s| rule.action_for(s.ttls()))
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Selection {
    ExactEvaluation,
    Simulation { episodes: u64, seed: u64 },
}

/// How the heuristic's empty-state action is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicSpec {
    /// Fixed empty-state action; selected automatically when `None`.
    pub empty_action: Option<usize>,
    /// Simulation budget used when selection falls back to Monte Carlo.
    pub episodes: u64,
    pub seed: u64,
    /// State counts above this switch selection to simulation.
    pub exact_state_limit: usize,
}

impl Default for HeuristicSpec {
    fn default() -> Self {
        HeuristicSpec {
            empty_action: None,
            episodes: 1_000_000,
            seed: 0,
            exact_state_limit: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: usize,
    pub expected_time: Option<f64>,
    pub std_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmptyActionSelection {
    pub action: usize,
    pub selection: Selection,
    pub candidates: Vec<Candidate>,
    /// Another candidate matched the winner within tolerance.
    pub tie: bool,
}

/// Tries every action as the heuristic's empty-state action and keeps the
/// one with the smallest expected completion time (lowest id on ties).
pub fn select_empty_action(
    space: &StateSpace,
    table: &TransitionTable,
    actions: &ActionSpace,
    spec: &HeuristicSpec,
    opts: &EvalOptions,
) -> Result<EmptyActionSelection> {
    if space.len() > spec.exact_state_limit {
        return select_empty_action_by_simulation(
            space.n(),
            actions,
            spec.episodes,
            spec.seed,
            &SimOptions::default(),
        );
    }
    select_with(
        space.n(),
        actions,
        Selection::ExactEvaluation,
        opts.tol,
        |a| {
            let p = heuristic_policy(space, actions, a)?;
            let v = policy_evaluation(&p, table, opts)?;
            Ok((v.empty_state_value(), None))
        },
    )
}

/// Selection by simulation alone; no state space is materialised.
pub fn select_empty_action_by_simulation(
    n: usize,
    actions: &ActionSpace,
    episodes: u64,
    seed: u64,
    sim: &SimOptions,
) -> Result<EmptyActionSelection> {
    let selection = Selection::Simulation { episodes, seed };
    select_with(n, actions, selection, 0.0, |a| {
        let rule = HeuristicRule::new(n, actions, a)?;
        let r = estimate(&rule, n, actions, episodes, seed, sim)?;
        Ok((r.mean, Some(r.std_error)))
    })
}

fn select_with(
    n: usize,
    actions: &ActionSpace,
    selection: Selection,
    tol: f64,
    score: impl Fn(usize) -> Result<(f64, Option<f64>)> + Sync,
) -> Result<EmptyActionSelection> {
    let candidates: Vec<Candidate> = (0..actions.len())
        .into_par_iter()
        .map(|a| {
            let ttl = actions.get(a).ttl;
            let outcome = if (ttl as usize) < n {
                // links created from ∅ never become viable, so n links never coexist
                Err(Error::InfiniteExpectedTime {
                    state: format!("empty-state action TTL {ttl} is below n = {n}"),
                })
            } else {
                score(a)
            };
            match outcome {
                Ok((w, se)) => Candidate {
                    action: a,
                    expected_time: Some(w),
                    std_error: se,
                    error: None,
                },
                Err(e) => Candidate {
                    action: a,
                    expected_time: None,
                    std_error: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let (action, tie) = argmin_with_tie(&candidates, tol).ok_or_else(|| {
        let reasons: Vec<&str> = candidates
            .iter()
            .filter_map(|c| c.error.as_deref())
            .collect();
        Error::InfiniteExpectedTime {
            state: format!("no empty-state action terminates ({})", reasons.join("; ")),
        }
    })?;
    Ok(EmptyActionSelection {
        action,
        selection,
        candidates,
        tie,
    })
}

fn argmin_with_tie(candidates: &[Candidate], tol: f64) -> Option<(usize, bool)> {
    let mut best: Option<(usize, f64)> = None;
    for c in candidates {
        if let Some(w) = c.expected_time {
            if best.is_none_or(|(_, b)| w < b) {
                best = Some((c.action, w));
            }
        }
    }
    let (a, w) = best?;
    let slack = 10.0 * tol * w.max(1.0);
    let tie = candidates
        .iter()
        .any(|c| c.action != a && c.expected_time.is_some_and(|x| x <= w + slack));
    Some((a, tie))
}

pub fn constant_policy(n_states: usize, action: usize) -> Policy {
    Policy::Deterministic(vec![action; n_states])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestConstant {
    pub action: usize,
    pub values: ValueTable,
    pub candidates: Vec<Candidate>,
}

/// Evaluates every constant policy exactly and keeps the fastest. Actions
/// whose evaluation fails are reported and skipped.
pub fn best_constant(
    table: &TransitionTable,
    actions: &ActionSpace,
    opts: &EvalOptions,
) -> Result<BestConstant> {
    let results: Vec<Result<ValueTable>> = (0..actions.len())
        .into_par_iter()
        .map(|a| policy_evaluation(&constant_policy(table.n_states(), a), table, opts))
        .collect();
    let candidates: Vec<Candidate> = results
        .iter()
        .enumerate()
        .map(|(a, r)| match r {
            Ok(v) => Candidate {
                action: a,
                expected_time: Some(v.empty_state_value()),
                std_error: None,
                error: None,
            },
            Err(e) => Candidate {
                action: a,
                expected_time: None,
                std_error: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let (action, _) = argmin_with_tie(&candidates, 0.0).ok_or_else(|| match &results[0] {
        Err(e) => e.clone(),
        Ok(_) => Error::Internal("no constant policy evaluated".into()),
    })?;
    let values = results.into_iter().nth(action).expect("in range")?;
    Ok(BestConstant {
        action,
        values,
        candidates,
    })
}

/// Uniform distribution over all actions in every state.
pub fn random_policy(n_states: usize, n_actions: usize) -> Policy {
    Policy::Stochastic {
        n_actions,
        probs: vec![1.0 / n_actions as f64; n_states * n_actions],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticN2 {
    pub policy: Policy,
    pub empty_action: usize,
    pub expected_time: f64,
    /// Another empty-state action attains the same minimum.
    pub tie: bool,
}

/// Closed-form optimal policy and expected completion time for `n = 2`.
///
/// States with no viable link (`∅` and `{1}`) take the action minimising
/// `1 / (p (1 - (1 - p_max)^(ttl - 1)))`; all other single-link states take
/// the highest-probability action. Then
/// `E[T] = 1/p_max + min_a 1 / (p_a (1 - (1 - p_max)^(ttl_a - 1)))`.
pub fn analytic_n2(space: &StateSpace, actions: &ActionSpace) -> Result<AnalyticN2> {
    if space.n() != 2 {
        return Err(Error::domain(format!(
            "closed form applies to n = 2 only, got n = {}",
            space.n()
        )));
    }
    let max_p = actions.max_probability();
    let p_max = actions.get(max_p).p;
    let mut best: Option<(usize, f64)> = None;
    let mut tie = false;
    for (i, a) in actions.actions().iter().enumerate() {
        let window = 1.0 - (1.0 - p_max).powi(a.ttl as i32 - 1);
        if window <= 0.0 {
            continue;
        }
        let cost = 1.0 / (a.p * window);
        match best {
            Some((_, b)) if cost > b => {}
            Some((_, b)) if cost == b => tie = true,
            _ => {
                tie = false;
                best = Some((i, cost));
            }
        }
    }
    let (empty_action, cost) = best.ok_or_else(|| Error::InfiniteExpectedTime {
        state: "no action has TTL above 1".into(),
    })?;
    let policy = heuristic_policy(space, actions, empty_action)?;
    Ok(AnalyticN2 {
        policy,
        empty_action,
        expected_time: 1.0 / p_max + cost,
        tie,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::build_action_space;
    use crate::dp::policy_iteration;
    use crate::model::ModelParams;
    use crate::statespace::State;

    fn regime(gamma: f64, lambda: f64, n: usize) -> (StateSpace, ActionSpace, TransitionTable) {
        let params = ModelParams::new(gamma, 0.5, n, lambda).unwrap();
        let actions = build_action_space(&params).unwrap();
        let space = StateSpace::full(n, actions.t_max()).unwrap();
        let table = TransitionTable::build(&space, &actions).unwrap();
        (space, actions, table)
    }

    #[test]
    fn synthetic_analytic_n2() {
        let actions = ActionSpace::synthetic(&[(0.5, 3), (0.2, 6)]).unwrap();
        let space = StateSpace::full(2, 6).unwrap();
        let res = analytic_n2(&space, &actions).unwrap();
        assert_eq!(res.empty_action, 0);
        assert!((res.expected_time - 14.0 / 3.0).abs() < 1e-12);
        let other = 2.0 + 1.0 / (0.2 * (1.0 - 0.5f64.powi(5)));
        assert!((other - 7.1613).abs() < 1e-4);
        assert!(!res.tie);
    }

    #[test]
    fn single_action_closed_form() {
        let actions = ActionSpace::synthetic(&[(0.3, 4)]).unwrap();
        let space = StateSpace::full(2, 4).unwrap();
        let res = analytic_n2(&space, &actions).unwrap();
        let expected = 1.0 / 0.3 + 1.0 / (0.3 * (1.0 - 0.7f64.powi(3)));
        assert!((res.expected_time - expected).abs() < 1e-12);
        let table = TransitionTable::build(&space, &actions).unwrap();
        let w = policy_evaluation(&res.policy, &table, &EvalOptions::default()).unwrap();
        assert!((w.empty_state_value() - expected).abs() / expected < 1e-9);
    }

    #[test]
    fn analytic_n2_rejects_other_n() {
        let actions = ActionSpace::synthetic(&[(0.3, 4)]).unwrap();
        let space = StateSpace::full(3, 4).unwrap();
        assert!(analytic_n2(&space, &actions).is_err());
        let ttl_one = ActionSpace::synthetic(&[(0.3, 1)]).unwrap();
        let space = StateSpace::full(2, 2).unwrap();
        assert!(analytic_n2(&space, &ttl_one).is_err());
    }

    #[test]
    fn heuristic_matches_analytic_for_n2() {
        for (gamma, lambda) in [(0.19, 2.0), (0.1, 1.0)] {
            let (space, actions, table) = regime(gamma, lambda, 2);
            let analytic = analytic_n2(&space, &actions).unwrap();
            let sel = select_empty_action(
                &space,
                &table,
                &actions,
                &HeuristicSpec::default(),
                &EvalOptions::default(),
            )
            .unwrap();
            let h = heuristic_policy(&space, &actions, sel.action).unwrap();
            assert_eq!(h, analytic.policy);
            let w = policy_evaluation(&h, &table, &EvalOptions::default()).unwrap();
            assert!(
                (w.empty_state_value() - analytic.expected_time).abs() / analytic.expected_time
                    < 1e-9
            );
        }
    }

    #[test]
    fn heuristic_rules_on_examples() {
        let (space, actions, _) = regime(0.1, 1.0, 4);
        let h = heuristic_policy(&space, &actions, 9).unwrap();
        let s = State::canonicalize(&[5, 3], 11).unwrap();
        let a = h.action(space.id_of(&s).unwrap()).unwrap();
        assert_eq!(actions.get(a).ttl, 2);
        let zero = State::canonicalize(&[3, 2], 11).unwrap();
        assert_eq!(h.action(space.id_of(&zero).unwrap()), Some(9));

        let (space, actions, _) = regime(0.1, 1.0, 5);
        let h = heuristic_policy(&space, &actions, 9).unwrap();
        let s = State::canonicalize(&[9, 7, 5, 2], 11).unwrap();
        assert_eq!(s.viable_count(5), 4);
        assert_eq!(
            actions.get(h.action(space.id_of(&s).unwrap()).unwrap()).ttl,
            actions.t_min()
        );
    }

    #[test]
    fn heuristic_depends_only_on_viable_links() {
        for (gamma, lambda) in [(0.19, 2.0), (0.1, 1.0)] {
            for n in 2..=5 {
                let (space, actions, _) = regime(gamma, lambda, n);
                let h = heuristic_policy(&space, &actions, actions.len() - 2).unwrap();
                for (i, s) in space.states().iter().enumerate() {
                    let v = space.id_of(&s.viable_projection(n)).unwrap();
                    assert_eq!(h.action(i), h.action(v));
                }
            }
        }
    }

    #[test]
    fn simulated_selection_agrees_with_exact() {
        let (space, actions, table) = regime(0.19, 2.0, 3);
        let exact = select_empty_action(
            &space,
            &table,
            &actions,
            &HeuristicSpec::default(),
            &EvalOptions::default(),
        )
        .unwrap();
        let spec = HeuristicSpec {
            exact_state_limit: 0,
            episodes: 200_000,
            seed: 3,
            ..HeuristicSpec::default()
        };
        let sim =
            select_empty_action(&space, &table, &actions, &spec, &EvalOptions::default()).unwrap();
        assert!(matches!(sim.selection, Selection::Simulation { .. }));
        let w_exact = exact.candidates[exact.action].expected_time.unwrap();
        let w_sim_choice = exact.candidates[sim.action].expected_time.unwrap();
        let se = sim.candidates[sim.action].std_error.unwrap();
        // simulation may pick a near-equivalent action, but not a clearly worse one
        assert!(w_sim_choice - w_exact <= 6.0 * se);
    }

    #[test]
    fn baselines_are_never_better_than_optimal() {
        let actions = ActionSpace::synthetic(&[(0.5, 3), (0.2, 6)]).unwrap();
        let space = StateSpace::full(2, 6).unwrap();
        let table = TransitionTable::build(&space, &actions).unwrap();
        let opts = EvalOptions::default();
        let best = best_constant(&table, &actions, &opts).unwrap();
        assert_eq!(best.candidates.len(), actions.len());
        assert!(best.values.empty_state_value() >= 14.0 / 3.0 - 1e-9);

        for (gamma, lambda) in [(0.19, 2.0), (0.1, 1.0)] {
            for n in 2..=4 {
                let (space, actions, table) = regime(gamma, lambda, n);
                let opt = policy_iteration(
                    &table,
                    &constant_policy(space.len(), actions.len() - 1),
                    &opts,
                )
                .unwrap();
                let w_opt = opt.values.empty_state_value();
                let sel =
                    select_empty_action(&space, &table, &actions, &HeuristicSpec::default(), &opts)
                        .unwrap();
                let w_h = sel.candidates[sel.action].expected_time.unwrap();
                let w_con = best_constant(&table, &actions, &opts)
                    .unwrap()
                    .values
                    .empty_state_value();
                let w_ran =
                    policy_evaluation(&random_policy(space.len(), actions.len()), &table, &opts)
                        .unwrap()
                        .empty_state_value();
                let slack = 1e-9 * w_opt;
                assert!(w_opt <= w_h + slack && w_h <= w_con + slack && w_opt <= w_ran + slack);
            }
        }
    }

    #[test]
    fn random_policy_rows() {
        let p = random_policy(5, 3);
        for s in 0..5 {
            assert_eq!(p.distribution(s, 3).iter().sum::<f64>(), 1.0);
        }
        let single = random_policy(4, 1);
        assert_eq!(
            single.distribution(2, 1),
            constant_policy(4, 0).distribution(2, 1)
        );
    }
}
