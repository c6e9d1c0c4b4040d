//! One-step dynamics: all links age by one step, expired links are dropped,
//! and on success a fresh link with the action's TTL is added.

use crate::actions::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::statespace::{State, StateSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEntry {
    pub next_state: State,
    pub probability: f64,
}

/// Successor distribution of `s` under action `a` when `n` links are
/// required. Success branch first.
pub fn successors(s: &State, a: &Action, n: usize) -> Result<Vec<TransitionEntry>> {
    if s.len() >= n {
        return Err(Error::AbsorbingState(s.key()));
    }
    let fail = s.decayed();
    let succ = fail.with_link(a.ttl as u8);
    Ok(merge(succ, fail, a.p)
        .into_iter()
        .map(|(next_state, probability)| TransitionEntry {
            next_state,
            probability,
        })
        .collect())
}

fn merge<T: PartialEq>(succ: T, fail: T, p: f64) -> Vec<(T, f64)> {
    if p >= 1.0 {
        vec![(succ, 1.0)]
    } else if p <= 0.0 {
        vec![(fail, 1.0)]
    } else if succ == fail {
        vec![(succ, 1.0)]
    } else {
        vec![(succ, p), (fail, 1.0 - p)]
    }
}

/// Where a transition leads, resolved against a [`StateSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    State(usize),
    Absorbing,
}

/// Compact row of the transition table. Targets index an extended value
/// vector whose last slot (`terminal`) is the absorbing set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub succ: u32,
    pub fail: u32,
    /// Probability of the success target; `1.0` when both branches merge.
    pub p: f64,
}

impl Row {
    /// Expected value of `values` over the row's successors.
    #[inline]
    pub fn expect(&self, values: &[f64]) -> f64 {
        if self.p >= 1.0 {
            values[self.succ as usize]
        } else {
            self.p * values[self.succ as usize] + (1.0 - self.p) * values[self.fail as usize]
        }
    }
}

/// Materialised transitions for every (state, action) pair of a space.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Row>,
}

impl TransitionTable {
    /// On a reduced space, successors are replaced by their viable
    /// projection before being resolved to ids.
    pub fn build(space: &StateSpace, actions: &ActionSpace) -> Result<Self> {
        if actions.t_max() > space.t_max() {
            return Err(Error::domain(format!(
                "action TTL {} exceeds state space t_max {}",
                actions.t_max(),
                space.t_max()
            )));
        }
        let n = space.n();
        let terminal = space.len() as u32;
        let resolve = |s: &State| -> Result<u32> {
            if s.is_absorbing(n) {
                return Ok(terminal);
            }
            space
                .lookup_ttls(s.ttls())
                .map(|id| id as u32)
                .ok_or_else(|| Error::Internal(format!("successor {s} outside the state space")))
        };
        let mut rows = Vec::with_capacity(space.len() * actions.len());
        for s in space.states() {
            let fail = s.decayed();
            let fail_id = resolve(&fail)?;
            for a in actions.actions() {
                let succ_id = resolve(&fail.with_link(a.ttl as u8))?;
                let row = match merge(succ_id, fail_id, a.p).as_slice() {
                    [(t, _)] => Row {
                        succ: *t,
                        fail: *t,
                        p: 1.0,
                    },
                    _ => Row {
                        succ: succ_id,
                        fail: fail_id,
                        p: a.p,
                    },
                };
                rows.push(row);
            }
        }
        Ok(TransitionTable {
            n_states: space.len(),
            n_actions: actions.len(),
            rows,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Index of the absorbing slot in extended value vectors.
    pub fn terminal(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &Row {
        &self.rows[state * self.n_actions + action]
    }

    /// Rows of all actions for one state.
    #[inline]
    pub fn rows_of(&self, state: usize) -> &[Row] {
        &self.rows[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Successor list for one (state, action) pair.
    pub fn entries(&self, state: usize, action: usize) -> Vec<(Target, f64)> {
        let row = self.row(state, action);
        let target = |t: u32| {
            if t as usize == self.n_states {
                Target::Absorbing
            } else {
                Target::State(t as usize)
            }
        };
        if row.p >= 1.0 {
            vec![(target(row.succ), 1.0)]
        } else {
            vec![(target(row.succ), row.p), (target(row.fail), 1.0 - row.p)]
        }
    }
}
