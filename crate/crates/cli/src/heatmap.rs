//! Most common action per (number of viable links, smallest viable TTL).

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use entpack_core::actions::ActionSpace;
use entpack_core::dp::Policy;
use entpack_core::statespace::StateSpace;
use entpack_core::transitions::TransitionTable;
use serde::{Deserialize, Serialize};

pub const HEADER: [&str; 5] = [
    "n_viable",
    "min_viable_ttl",
    "modal_action_ttl",
    "state_count",
    "accessible",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// States equal to their own viable projection.
    Reduced,
    /// Every state, placed by its viable projection.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub n_viable: usize,
    /// Smallest TTL among the viable links; 0 when there are none.
    pub min_viable_ttl: u32,
    pub modal_action_ttl: u32,
    pub state_count: usize,
    /// Some state in the cell is reachable from ∅.
    pub accessible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub aggregation: Aggregation,
    pub weighting: String,
    pub modal_ties: String,
    pub accessible: String,
}

impl HeatmapMeta {
    pub fn new(aggregation: Aggregation) -> Self {
        HeatmapMeta {
            aggregation,
            weighting: "unweighted count of distinct states".into(),
            modal_ties: "larger TTL".into(),
            accessible: "reachable from the empty state under some sequence of actions".into(),
        }
    }
}

/// States reachable from ∅ when any action may be taken.
pub fn reachable(table: &TransitionTable) -> Vec<bool> {
    let n = table.n_states();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(s) = stack.pop() {
        for row in table.rows_of(s) {
            for t in [row.succ, row.fail] {
                let t = t as usize;
                if t < n && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    seen
}

/// Aggregates a deterministic policy defined on `space`.
pub fn heatmap(
    space: &StateSpace,
    actions: &ActionSpace,
    policy: &Policy,
    aggregation: Aggregation,
) -> Result<Vec<HeatmapCell>> {
    let Some(choice) = policy.actions() else {
        bail!("heat maps need a deterministic policy");
    };
    let n = space.n();
    // the population of states and, for each, the action the policy takes
    let owned;
    let population: &StateSpace = match aggregation {
        Aggregation::Full if space.is_reduced() => {
            owned = StateSpace::full(n, space.t_max())?;
            &owned
        }
        _ => space,
    };
    let table = TransitionTable::build(population, actions)?;
    let reach = reachable(&table);

    let mut cells: BTreeMap<(usize, u32), (Vec<usize>, usize, bool)> = BTreeMap::new();
    for (id, s) in population.states().iter().enumerate() {
        let v = s.viable_projection(n);
        if aggregation == Aggregation::Reduced && v != *s {
            continue;
        }
        let a = match space.lookup_ttls(s.ttls()) {
            Some(j) => choice[j],
            None => bail!("state {s} missing from the policy's state space"),
        };
        let key = (v.len(), v.min_ttl().unwrap_or(0));
        let cell = cells
            .entry(key)
            .or_insert_with(|| (vec![0; actions.len()], 0, false));
        cell.0[a] += 1;
        cell.1 += 1;
        cell.2 |= reach[id];
    }
    Ok(cells
        .into_iter()
        .map(
            |((n_viable, min_viable_ttl), (votes, state_count, accessible))| {
                // actions are sorted by TTL, so the last maximum has the larger TTL
                let best = votes
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
                    .map(|(a, _)| a)
                    .unwrap_or(0);
                HeatmapCell {
                    n_viable,
                    min_viable_ttl,
                    modal_action_ttl: actions.get(best).ttl,
                    state_count,
                    accessible,
                }
            },
        )
        .collect())
}

pub fn write_csv(path: &std::path::Path, cells: &[HeatmapCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for c in cells {
        w.write_record([
            c.n_viable.to_string(),
            c.min_viable_ttl.to_string(),
            c.modal_action_ttl.to_string(),
            c.state_count.to_string(),
            c.accessible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use entpack_core::actions::build_action_space;
    use entpack_core::model::ModelParams;
    use entpack_core::policies::heuristic_policy;
    use entpack_core::statespace::State;

    fn setup(n: usize, reduced: bool) -> (StateSpace, ActionSpace) {
        let params = ModelParams::new(0.19, 0.5, n, 2.0).unwrap();
        let actions = build_action_space(&params).unwrap();
        let space = StateSpace::enumerate(n, actions.t_max(), reduced).unwrap();
        (space, actions)
    }

    #[test]
    fn heuristic_last_link_cells_use_shortest_ttl() {
        let (space, actions) = setup(4, true);
        let policy = heuristic_policy(&space, &actions, 5).unwrap();
        let cells = heatmap(&space, &actions, &policy, Aggregation::Reduced).unwrap();
        let total: usize = cells.iter().map(|c| c.state_count).sum();
        assert_eq!(total, space.len());
        for c in &cells {
            if c.n_viable == 3 {
                assert_eq!(c.modal_action_ttl, actions.t_min());
            }
            if c.n_viable == 0 {
                assert_eq!((c.min_viable_ttl, c.modal_action_ttl), (0, 6));
            }
        }
    }

    #[test]
    fn full_aggregation_counts_every_state() {
        let (red, actions) = setup(3, true);
        let (full, _) = setup(3, false);
        let p_red = heuristic_policy(&red, &actions, 4).unwrap();
        let p_full = heuristic_policy(&full, &actions, 4).unwrap();
        let from_red = heatmap(&red, &actions, &p_red, Aggregation::Full).unwrap();
        let from_full = heatmap(&full, &actions, &p_full, Aggregation::Full).unwrap();
        assert_eq!(from_red, from_full);
        assert_eq!(
            from_full.iter().map(|c| c.state_count).sum::<usize>(),
            full.len()
        );
        let reduced_on_full = heatmap(&full, &actions, &p_full, Aggregation::Reduced).unwrap();
        let reduced_on_red = heatmap(&red, &actions, &p_red, Aggregation::Reduced).unwrap();
        assert_eq!(reduced_on_full, reduced_on_red);
    }

    #[test]
    fn inaccessible_cells_are_flagged() {
        // two viable links that both have TTL 6 can never coexist
        let (space, actions) = setup(5, true);
        let policy = heuristic_policy(&space, &actions, 5).unwrap();
        let cells = heatmap(&space, &actions, &policy, Aggregation::Reduced).unwrap();
        let c = cells
            .iter()
            .find(|c| c.n_viable == 2 && c.min_viable_ttl == 6)
            .unwrap();
        assert!(!c.accessible);
        assert!(
            cells
                .iter()
                .find(|c| c.n_viable == 1 && c.min_viable_ttl == 6)
                .unwrap()
                .accessible
        );
        let table = TransitionTable::build(&space, &actions).unwrap();
        let reach = reachable(&table);
        let s = space
            .id_of(&State::canonicalize(&[6, 6], 6).unwrap())
            .unwrap();
        assert!(!reach[s]);
    }

    #[test]
    fn modal_ties_prefer_larger_ttl() {
        let actions = ActionSpace::synthetic(&[(0.5, 1), (0.3, 2), (0.1, 3)]).unwrap();
        let space = StateSpace::full(3, 3).unwrap();
        // cell (1 viable, ttl 3) holds {3} and {3,1}; give them different actions
        let mut choice = vec![0; space.len()];
        choice[space.id_of(&State::canonicalize(&[3], 3).unwrap()).unwrap()] = 0;
        choice[space
            .id_of(&State::canonicalize(&[3, 1], 3).unwrap())
            .unwrap()] = 2;
        let cells = heatmap(
            &space,
            &actions,
            &Policy::Deterministic(choice),
            Aggregation::Full,
        )
        .unwrap();
        let c = cells
            .iter()
            .find(|c| c.n_viable == 1 && c.min_viable_ttl == 3)
            .unwrap();
        assert_eq!((c.state_count, c.modal_action_ttl), (2, 3));
    }

    #[test]
    fn stochastic_policies_rejected() {
        let (space, actions) = setup(2, true);
        let p = entpack_core::policies::random_policy(space.len(), actions.len());
        assert!(heatmap(&space, &actions, &p, Aggregation::Reduced).is_err());
    }
}
