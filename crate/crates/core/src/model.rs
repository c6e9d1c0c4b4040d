//! Depolarising decay, fidelity to time-to-live conversion and the shared
//! model parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fidelity of the maximally mixed two-qubit state, the fixed point of decay.
pub const MIXED_FIDELITY: f64 = 0.25;

/// Raw decay times within this distance of an integer are treated as that
/// integer before taking the ceiling.
pub const CEIL_SNAP: f64 = 1e-9;

/// Parameters of the generation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Decoherence rate per time step.
    pub gamma: f64,
    /// Minimum fidelity tolerated by the application.
    pub f_app: f64,
    /// Number of simultaneously live links required.
    pub n: usize,
    /// Trade-off parameter of the batched single-click relation.
    pub lambda: f64,
    /// Largest success probability allowed by the trade-off. Equal to
    /// [`max_success_probability`] unless restricted by the caller.
    pub q: f64,
}

impl ModelParams {
    /// Parameters with `q` at its supremum.
    pub fn new(gamma: f64, f_app: f64, n: usize, lambda: f64) -> Result<Self> {
        let q = max_success_probability(lambda, f_app);
        Self::with_q(gamma, f_app, n, lambda, q)
    }

    pub fn with_q(gamma: f64, f_app: f64, n: usize, lambda: f64, q: f64) -> Result<Self> {
        check_gamma(gamma)?;
        check_f_app(f_app)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if n < 2 {
            return Err(Error::domain(format!("n must be at least 2, got {n}")));
        }
        let q_sup = max_success_probability(lambda, f_app);
        if !(q > 0.0 && q <= q_sup) {
            return Err(Error::domain(format!(
                "q must lie in (0, {q_sup}], got {q}"
            )));
        }
        Ok(ModelParams {
            gamma,
            f_app,
            n,
            lambda,
            q,
        })
    }

    pub fn max_ttl(&self) -> u32 {
        max_ttl(self.gamma, self.f_app)
    }

    /// Fails with [`Error::Infeasible`] when `n > t_max`.
    pub fn check_feasible(&self) -> Result<()> {
        let t_max = self.max_ttl();
        if self.n > t_max as usize {
            return Err(Error::Infeasible { n: self.n, t_max });
        }
        Ok(())
    }

    pub fn ttl_of(&self, f: f64) -> Result<u32> {
        ttl_of_fidelity(f, self.gamma, self.f_app)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "gamma must be positive, got {gamma}"
        )))
    }
}

fn check_f_app(f_app: f64) -> Result<()> {
    if f_app > MIXED_FIDELITY && f_app < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "f_app must lie in (1/4, 1), got {f_app}"
        )))
    }
}

/// Fidelity of a link of initial fidelity `f` after `t` steps in memory.
pub fn fidelity_after(f: f64, t: u32, gamma: f64) -> Result<f64> {
    if !(f > MIXED_FIDELITY && f <= 1.0) {
        return Err(Error::domain(format!(
            "fidelity must lie in (1/4, 1], got {f}"
        )));
    }
    check_gamma(gamma)?;
    Ok((-gamma * t as f64).exp() * (f - MIXED_FIDELITY) + MIXED_FIDELITY)
}

/// Real-valued time until a link of fidelity `f` decays to `f_app`.
pub fn raw_decay_time(f: f64, gamma: f64, f_app: f64) -> f64 {
    ((f - MIXED_FIDELITY) / (f_app - MIXED_FIDELITY)).ln() / gamma
}

/// Fidelity whose raw decay time is exactly `t`.
pub fn fidelity_with_decay_time(t: f64, gamma: f64, f_app: f64) -> f64 {
    MIXED_FIDELITY + (f_app - MIXED_FIDELITY) * (gamma * t).exp()
}

fn snapped_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= CEIL_SNAP {
        r
    } else {
        x.ceil()
    }
}

/// Number of whole time steps a link of fidelity `f` stays above `f_app`.
pub fn ttl_of_fidelity(f: f64, gamma: f64, f_app: f64) -> Result<u32> {
    check_gamma(gamma)?;
    check_f_app(f_app)?;
    if !(f > f_app && f <= 1.0) {
        return Err(Error::domain(format!(
            "fidelity {f} is not above f_app = {f_app}; a non-viable link has no TTL"
        )));
    }
    let ttl = snapped_ceil(raw_decay_time(f, gamma, f_app)).max(1.0);
    if ttl > u32::MAX as f64 {
        return Err(Error::Overflow("time-to-live"));
    }
    Ok(ttl as u32)
}

/// TTL of a perfect link, the largest TTL any generated link can have.
pub fn max_ttl(gamma: f64, f_app: f64) -> u32 {
    // gamma and f_app are validated by every caller that holds ModelParams;
    // fall back to 1 for nonsensical input rather than panicking.
    ttl_of_fidelity(1.0, gamma, f_app).unwrap_or(1)
}

/// Supremum of the success probability whose single-click fidelity stays
/// above `f_app`.
pub fn max_success_probability(lambda: f64, f_app: f64) -> f64 {
    -((f_app - 1.0) / lambda).exp_m1()
}
