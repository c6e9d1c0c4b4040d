//! Generation parameters `(p, F)` and the finite action space derived from the
//! batched single-click trade-off `F = λ ln(1 - p) + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fidelity_with_decay_time, ModelParams};
use crate::statespace::MAX_TTL;

/// Offset, in units of time steps, by which the fidelity of action `i` is
/// placed above the lower edge of the TTL-`i` fidelity band. Must exceed the
/// ceiling snap tolerance so the TTL classification is unambiguous.
pub const BAND_ENTRY: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Success probability of one attempt.
    pub p: f64,
    /// Fidelity of a freshly generated link; absent for synthetic actions.
    pub f: Option<f64>,
    /// TTL of a freshly generated link.
    pub ttl: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Synthetic,
    SingleClick,
}

/// Actions sorted by increasing TTL (and so non-increasing probability).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    actions: Vec<Action>,
    lambda: Option<f64>,
    provenance: Provenance,
}

impl ActionSpace {
    /// Caller-supplied `(p, ttl)` pairs. TTLs must be strictly increasing and
    /// probabilities non-increasing, each in `(0, 1]`.
    pub fn synthetic(pairs: &[(f64, u32)]) -> Result<Self> {
        let actions = pairs
            .iter()
            .map(|&(p, ttl)| Action { p, f: None, ttl })
            .collect();
        Self::from_actions(actions, None, Provenance::Synthetic)
    }

    pub fn from_actions(
        actions: Vec<Action>,
        lambda: Option<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::domain("action space is empty"));
        }
        for a in &actions {
            if !(a.p > 0.0 && a.p <= 1.0) {
                return Err(Error::domain(format!(
                    "success probability {} outside (0, 1]",
                    a.p
                )));
            }
            if a.ttl < 1 || a.ttl > MAX_TTL {
                return Err(Error::domain(format!(
                    "action TTL {} outside [1, {MAX_TTL}]",
                    a.ttl
                )));
            }
        }
        for w in actions.windows(2) {
            if w[0].ttl >= w[1].ttl {
                return Err(Error::domain("action TTLs must be strictly increasing"));
            }
            if w[0].p < w[1].p {
                return Err(Error::domain(
                    "action probabilities must be non-increasing in TTL",
                ));
            }
            if provenance == Provenance::SingleClick {
                let strict_f = matches!((w[0].f, w[1].f), (Some(a), Some(b)) if a < b);
                if w[0].p <= w[1].p || !strict_f {
                    return Err(Error::domain(
                        "single-click actions must satisfy the strict rate-fidelity ordering",
                    ));
                }
            }
        }
        Ok(ActionSpace {
            actions,
            lambda,
            provenance,
        })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn get(&self, id: usize) -> &Action {
        &self.actions[id]
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn t_min(&self) -> u32 {
        self.actions[0].ttl
    }

    pub fn t_max(&self) -> u32 {
        self.actions[self.actions.len() - 1].ttl
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Id of the highest-probability action; ties go to the larger TTL.
    pub fn max_probability(&self) -> usize {
        self.best_probability_where(|_| true).expect("non-empty")
    }

    /// Id of the highest-probability action among those with TTL at least
    /// `min_ttl`; ties go to the larger TTL.
    pub fn max_probability_with_ttl_at_least(&self, min_ttl: u32) -> Option<usize> {
        self.best_probability_where(|a| a.ttl >= min_ttl)
    }

    fn best_probability_where(&self, keep: impl Fn(&Action) -> bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, a) in self.actions.iter().enumerate() {
            if !keep(a) {
                continue;
            }
            match best {
                Some(b) if self.actions[b].p > a.p => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

/// Fidelity produced at success probability `p` under the batched
/// single-click trade-off.
pub fn singleclick_fidelity(p: f64, lambda: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "success probability {p} outside (0, 1)"
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(lambda * (-p).ln_1p() + 1.0)
}

/// Inverse of [`singleclick_fidelity`]: `p = 1 - exp(-(1 - F)/λ)`.
pub fn singleclick_probability(f: f64, lambda: f64) -> f64 {
    -(-(1.0 - f) / lambda).exp_m1()
}

fn batch_rate(f: f64, lambda: f64, m_batch: u64) -> Result<f64> {
    if m_batch == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let per_exec = (1.0 - f) / (lambda * m_batch as f64);
    if !(0.0..1.0).contains(&per_exec) {
        return Err(Error::domain(format!(
            "per-execution success probability {per_exec} outside [0, 1)"
        )));
    }
    Ok(per_exec)
}

/// Exact success probability of a batch of `m_batch` single-click executions
/// tuned to produce fidelity `f`.
pub fn exact_batched_probability(f: f64, lambda: f64, m_batch: u64) -> Result<f64> {
    let per_exec = batch_rate(f, lambda, m_batch)?;
    Ok(-(m_batch as f64 * (-per_exec).ln_1p()).exp_m1())
}

/// Upper bound `1 - (1 - r/M)^r` on the gap between the exact batched
/// probability and the exponential approximation, with `r = (1 - F)/λ`.
pub fn approximation_error_bound(f: f64, lambda: f64, m_batch: u64) -> Result<f64> {
    let per_exec = batch_rate(f, lambda, m_batch)?;
    let r = (1.0 - f) / lambda;
    if r == 0.0 {
        return Ok(0.0);
    }
    // y = M / r must exceed 1, i.e. r/M < 1; per_exec = r/M
    if per_exec >= 1.0 {
        return Err(Error::domain("bound requires M > r"));
    }
    Ok(-(r * (-per_exec).ln_1p()).exp_m1())
}

/// Margins of `(1 - 1/y)^(y-1) > 1/e > (1 - 1/y)^y`, evaluated in log
/// space. Both are positive exactly when the inequality holds at `y`.
pub fn sandwich_margins(y: f64) -> Result<(f64, f64)> {
    if !(y > 1.0) || !y.is_finite() {
        return Err(Error::domain(format!("y must be finite and > 1, got {y}")));
    }
    let l = (-1.0 / y).ln_1p();
    Ok(((y - 1.0) * l + 1.0, -1.0 - y * l))
}

/// The discretised single-click action space: one action per reachable TTL,
/// each at the largest probability that still yields that TTL.
pub fn build_action_space(params: &ModelParams) -> Result<ActionSpace> {
    params.check_feasible()?;
    let t_max = params.max_ttl();
    if t_max > MAX_TTL {
        return Err(Error::domain(format!(
            "t_max {t_max} exceeds supported maximum {MAX_TTL}"
        )));
    }
    let mut actions = Vec::with_capacity(t_max as usize);
    for ttl in 1..=t_max {
        let f_edge =
            fidelity_with_decay_time(ttl as f64 - 1.0 + BAND_ENTRY, params.gamma, params.f_app);
        if f_edge >= 1.0 {
            continue;
        }
        let p = singleclick_probability(f_edge, params.lambda).min(params.q);
        if p <= 0.0 {
            continue;
        }
        let f = singleclick_fidelity(p, params.lambda)?;
        if f <= params.f_app || params.ttl_of(f)? != ttl {
            // below t_min when q is restricted
            continue;
        }
        actions.push(Action { p, f: Some(f), ttl });
    }
    if actions.last().map(|a| a.ttl) != Some(t_max) {
        return Err(Error::Internal(format!(
            "no action reaches t_max = {t_max}"
        )));
    }
    if actions.len() < (t_max - actions[0].ttl + 1) as usize {
        return Err(Error::Infeasible { n: params.n, t_max });
    }
    ActionSpace::from_actions(actions, Some(params.lambda), Provenance::SingleClick)
}
