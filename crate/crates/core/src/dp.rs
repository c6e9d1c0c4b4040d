//! Policy evaluation and policy iteration over expected completion times.
//!
//! Values are expected times `w(s) = E[T | S_0 = s]`, so every optimisation
//! is a minimisation and absorbing states have value zero.
//!
//! Besides plain Jacobi / Gauss–Seidel sweeps on `w = 1 + P w`, evaluation
//! offers a regenerative scheme that splits trajectories at their returns to
//! the empty state. For the chain killed on entering the empty state or the
//! absorbing set it iterates
//!
//! ```text
//! B(s) = 1 + Σ P(s'|s) B(s')        (time until killed)
//! A(s) = Σ P(s'|s) A(s')            (probability the kill is absorption)
//! ```
//!
//! with `B = 0` on both killing sets and `A = 1` on the absorbing set. Then
//! `w(∅) = B(∅) / A(∅)` and `w(s) = B(s) + (1 - A(s)) w(∅)`. The killed
//! chain mixes on the scale of a single excursion, so the number of sweeps
//! does not grow with `E[T]`. Plain sweeps need on the order of
//! `E[T] · ln(1/tol)` iterations, which is hopeless for the baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transitions::TransitionTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    /// One action id per state id.
    Deterministic(Vec<usize>),
    /// Row-major `n_states × n_actions` action probabilities.
    Stochastic { n_actions: usize, probs: Vec<f64> },
}

impl Policy {
    pub fn len(&self) -> usize {
        match self {
            Policy::Deterministic(a) => a.len(),
            Policy::Stochastic { n_actions, probs } => probs.len() / n_actions,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Policy::Deterministic(_))
    }

    /// Action of a deterministic policy.
    pub fn action(&self, state: usize) -> Option<usize> {
        match self {
            Policy::Deterministic(a) => Some(a[state]),
            Policy::Stochastic { .. } => None,
        }
    }

    pub fn actions(&self) -> Option<&[usize]> {
        match self {
            Policy::Deterministic(a) => Some(a),
            Policy::Stochastic { .. } => None,
        }
    }

    /// Distribution over actions in a state.
    pub fn distribution(&self, state: usize, n_actions: usize) -> Vec<f64> {
        match self {
            Policy::Deterministic(a) => {
                let mut d = vec![0.0; n_actions];
                d[a[state]] = 1.0;
                d
            }
            Policy::Stochastic { n_actions, probs } => {
                probs[state * n_actions..(state + 1) * n_actions].to_vec()
            }
        }
    }

    pub fn check(&self, table: &TransitionTable) -> Result<()> {
        if self.len() != table.n_states() {
            return Err(Error::domain(format!(
                "policy covers {} states, table has {}",
                self.len(),
                table.n_states()
            )));
        }
        match self {
            Policy::Deterministic(a) => {
                if let Some(bad) = a.iter().find(|&&x| x >= table.n_actions()) {
                    return Err(Error::domain(format!("action id {bad} out of range")));
                }
            }
            Policy::Stochastic { n_actions, probs } => {
                if *n_actions != table.n_actions() {
                    return Err(Error::domain(
                        "stochastic policy action count does not match table",
                    ));
                }
                for row in probs.chunks(*n_actions) {
                    let total: f64 = row.iter().sum();
                    if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (total - 1.0).abs() > 1e-12
                    {
                        return Err(Error::domain("stochastic policy row is not a distribution"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Expected value of `ext` after one step from `state`.
    #[inline]
    fn expect(&self, table: &TransitionTable, state: usize, ext: &[f64]) -> f64 {
        match self {
            Policy::Deterministic(a) => table.row(state, a[state]).expect(ext),
            Policy::Stochastic { n_actions, probs } => {
                let pi = &probs[state * n_actions..(state + 1) * n_actions];
                let mut acc = 0.0;
                for (row, &w) in table.rows_of(state).iter().zip(pi) {
                    if w > 0.0 {
                        acc += w * row.expect(ext);
                    }
                }
                acc
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    /// Synchronous sweeps of `w = 1 + P w`.
    Jacobi,
    /// In-place sweeps of `w = 1 + P w` in state-id order.
    GaussSeidel,
    /// Killed-chain sweeps split at the empty state (see module docs).
    Regenerative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub method: EvalMethod,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tol: 1e-10,
            max_iters: 10_000_000,
            method: EvalMethod::Regenerative,
        }
    }
}

impl EvalOptions {
    pub fn with_method(mut self, method: EvalMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    /// Expected completion time per state id.
    pub w: Vec<f64>,
    /// Relative Bellman residual `max |w - 1 - P w| / max(1, w)`.
    pub residual: f64,
    pub iterations: usize,
    pub method: EvalMethod,
}

impl ValueTable {
    pub fn empty_state_value(&self) -> f64 {
        self.w[0]
    }

    /// Values extended with a trailing zero for the absorbing slot.
    pub fn extended(&self) -> Vec<f64> {
        let mut ext = Vec::with_capacity(self.w.len() + 1);
        ext.extend_from_slice(&self.w);
        ext.push(0.0);
        ext
    }
}

/// Expected completion time of `policy` from every state.
pub fn policy_evaluation(
    policy: &Policy,
    table: &TransitionTable,
    opts: &EvalOptions,
) -> Result<ValueTable> {
    if !(opts.tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    policy.check(table)?;
    check_proper(policy, table)?;
    let (w, iterations) = match opts.method {
        EvalMethod::Jacobi => sweep_plain(policy, table, opts, false)?,
        EvalMethod::GaussSeidel => sweep_plain(policy, table, opts, true)?,
        EvalMethod::Regenerative => regenerative(policy, table, opts)?,
    };
    let residual = bellman_residual(policy, table, &w);
    Ok(ValueTable {
        w,
        residual,
        iterations,
        method: opts.method,
    })
}

/// Every state must reach the absorbing set with positive probability under
/// the policy, otherwise some expected time is infinite.
fn check_proper(policy: &Policy, table: &TransitionTable) -> Result<()> {
    let n = table.n_states();
    let terminal = table.terminal();
    // reverse adjacency in CSR form
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(2 * n);
    for s in 0..n {
        let mut push_row = |a: usize| {
            let row = table.row(s, a);
            edges.push((row.succ, s as u32));
            if row.p < 1.0 {
                edges.push((row.fail, s as u32));
            }
        };
        match policy {
            Policy::Deterministic(acts) => push_row(acts[s]),
            Policy::Stochastic { n_actions, probs } => {
                for a in 0..*n_actions {
                    if probs[s * n_actions + a] > 0.0 {
                        push_row(a);
                    }
                }
            }
        }
    }
    let mut start = vec![0usize; n + 2];
    for &(to, _) in &edges {
        start[to as usize + 1] += 1;
    }
    for i in 0..=n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut from = vec![0u32; edges.len()];
    for &(to, f) in &edges {
        from[fill[to as usize]] = f;
        fill[to as usize] += 1;
    }
    let mut seen = vec![false; n + 1];
    seen[terminal] = true;
    let mut stack = vec![terminal];
    while let Some(t) = stack.pop() {
        for &f in &from[start[t]..start[t + 1]] {
            if !seen[f as usize] {
                seen[f as usize] = true;
                stack.push(f as usize);
            }
        }
    }
    match seen[..n].iter().position(|&x| !x) {
        None => Ok(()),
        Some(s) => Err(Error::InfiniteExpectedTime {
            state: format!("absorption unreachable from state id {s}"),
        }),
    }
}

fn sweep_plain(
    policy: &Policy,
    table: &TransitionTable,
    opts: &EvalOptions,
    in_place: bool,
) -> Result<(Vec<f64>, usize)> {
    let n = table.n_states();
    let mut ext = vec![0.0; n + 1];
    let mut next = vec![0.0; n];
    let mut delta = f64::INFINITY;
    for it in 1..=opts.max_iters {
        if in_place {
            delta = 0.0;
            for s in 0..n {
                let v = 1.0 + policy.expect(table, s, &ext);
                delta = delta.max((v - ext[s]).abs());
                ext[s] = v;
            }
        } else {
            next.par_iter_mut()
                .enumerate()
                .for_each(|(s, v)| *v = 1.0 + policy.expect(table, s, &ext));
            delta = next
                .iter()
                .zip(&ext)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ext[..n].copy_from_slice(&next);
        }
        if delta < opts.tol {
            ext.truncate(n);
            return Ok((ext, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        residual: delta,
    })
}

fn rel_change(new: f64, old: f64) -> f64 {
    if new == old {
        0.0
    } else {
        (new - old).abs() / new.abs()
    }
}

fn regenerative(
    policy: &Policy,
    table: &TransitionTable,
    opts: &EvalOptions,
) -> Result<(Vec<f64>, usize)> {
    let n = table.n_states();
    let terminal = table.terminal();
    // Extended vectors: slot 0 (the empty state) always reads as killed,
    // slot `terminal` is the absorbing set.
    let mut time = vec![0.0; n + 1];
    let mut absorb = vec![0.0; n + 1];
    absorb[terminal] = 1.0;
    let mut next: Vec<(f64, f64)> = vec![(0.0, 0.0); n];
    let mut empty = (0.0, 0.0);
    let mut prev_delta = f64::INFINITY;
    let mut delta = f64::INFINITY;
    let mut converged_at = None;
    for it in 1..=opts.max_iters {
        next.par_iter_mut().enumerate().for_each(|(s, v)| {
            *v = (
                1.0 + policy.expect(table, s, &time),
                policy.expect(table, s, &absorb),
            );
        });
        delta = rel_change(next[0].0, empty.0).max(rel_change(next[0].1, empty.1));
        empty = next[0];
        for s in 1..n {
            let (b, a) = next[s];
            delta = delta
                .max(rel_change(b, time[s]))
                .max(rel_change(a, absorb[s]));
            time[s] = b;
            absorb[s] = a;
        }
        let rho = delta / prev_delta;
        prev_delta = delta;
        if delta == 0.0 || (delta < opts.tol && rho < 1.0 && delta * rho / (1.0 - rho) < opts.tol) {
            converged_at = Some(it);
            break;
        }
    }
    let iterations = converged_at.ok_or(Error::NonConvergence {
        iterations: opts.max_iters,
        residual: delta,
    })?;
    let (b0, a0) = empty;
    if !(a0 > 0.0) {
        return Err(Error::InfiniteExpectedTime {
            state: "absorption probability from the empty state is zero".into(),
        });
    }
    let w0 = b0 / a0;
    if !w0.is_finite() {
        return Err(Error::InfiniteExpectedTime {
            state: "absorption probability from the empty state is zero".into(),
        });
    }
    let mut w = Vec::with_capacity(n);
    w.push(w0);
    for s in 1..n {
        w.push(time[s] + (1.0 - absorb[s]) * w0);
    }
    Ok((w, iterations))
}

/// `max_s |w(s) - 1 - Σ π P w| / max(1, w(s))`.
pub fn bellman_residual(policy: &Policy, table: &TransitionTable, w: &[f64]) -> f64 {
    let mut ext = w.to_vec();
    ext.push(0.0);
    (0..table.n_states())
        .into_par_iter()
        .map(|s| (w[s] - 1.0 - policy.expect(table, s, &ext)).abs() / w[s].abs().max(1.0))
        .reduce(|| 0.0, f64::max)
}

/// One-step lookahead residual of the optimality equation,
/// `max_s |w(s) - (1 + min_a Σ P w)| / max(1, w(s))`.
pub fn optimality_certificate(values: &ValueTable, table: &TransitionTable) -> f64 {
    let ext = values.extended();
    (0..table.n_states())
        .into_par_iter()
        .map(|s| {
            let best = table
                .rows_of(s)
                .iter()
                .map(|r| r.expect(&ext))
                .fold(f64::INFINITY, f64::min);
            (values.w[s] - 1.0 - best).abs() / values.w[s].abs().max(1.0)
        })
        .reduce(|| 0.0, f64::max)
}

/// Greedy policy with respect to `values`; near-ties within
/// `10 · tol · max(1, q_min)` go to the lowest action id.
pub fn greedy_policy(values: &ValueTable, table: &TransitionTable, tol: f64) -> Vec<usize> {
    let ext = values.extended();
    (0..table.n_states())
        .into_par_iter()
        .map(|s| {
            let q: Vec<f64> = table.rows_of(s).iter().map(|r| r.expect(&ext)).collect();
            let min = q.iter().copied().fold(f64::INFINITY, f64::min);
            let slack = 10.0 * tol * min.abs().max(1.0);
            q.iter().position(|&x| x <= min + slack).unwrap_or(0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Expected completion time from the empty state for this round's policy.
    pub w_empty: f64,
    /// States whose action changed in the improvement step.
    pub changed: usize,
    /// `max_s (w_k(s) - w_{k-1}(s)) / max(1, w_{k-1}(s))`; zero in round one.
    pub max_increase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterationResult {
    pub policy: Policy,
    pub values: ValueTable,
    pub iterations: usize,
    pub rounds: Vec<RoundRecord>,
}

pub const MAX_POLICY_ROUNDS: usize = 1000;

/// Alternates exact evaluation and greedy improvement until the policy is
/// stable.
pub fn policy_iteration(
    table: &TransitionTable,
    initial: &Policy,
    opts: &EvalOptions,
) -> Result<PolicyIterationResult> {
    let mut current = match initial {
        Policy::Deterministic(a) => a.clone(),
        Policy::Stochastic { .. } => {
            return Err(Error::domain(
                "policy iteration needs a deterministic initial policy",
            ))
        }
    };
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut prev: Option<ValueTable> = None;
    for _ in 0..MAX_POLICY_ROUNDS {
        let policy = Policy::Deterministic(current);
        let values = policy_evaluation(&policy, table, opts)?;
        let max_increase = match &prev {
            None => 0.0,
            Some(p) => values
                .w
                .iter()
                .zip(&p.w)
                .map(|(new, old)| (new - old) / old.abs().max(1.0))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        let improved = greedy_policy(&values, table, opts.tol);
        let Policy::Deterministic(cur) = policy else {
            unreachable!()
        };
        let changed = improved.iter().zip(&cur).filter(|(a, b)| a != b).count();
        rounds.push(RoundRecord {
            w_empty: values.empty_state_value(),
            changed,
            max_increase,
        });
        if changed == 0 {
            return Ok(PolicyIterationResult {
                policy: Policy::Deterministic(cur),
                values,
                iterations: rounds.len(),
                rounds,
            });
        }
        current = improved;
        prev = Some(values);
    }
    Err(Error::NonConvergence {
        iterations: MAX_POLICY_ROUNDS,
        residual: f64::NAN,
    })
}
