//! Seeded episode simulator for the completion time `T`.
//!
//! Episode `i` draws from a ChaCha8 stream keyed by the master seed with
//! stream id `i`, so streams never overlap and results do not depend on how
//! episodes are scheduled across workers. Completion times are accumulated
//! in exact integer arithmetic, making the reduction order irrelevant.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::ActionSpace;
use crate::dp::Policy;
use crate::error::{Error, Result};
use crate::statespace::StateSpace;

/// Most links a simulated state may hold.
pub const MAX_LINKS: usize = 64;

pub const DEFAULT_STEP_CAP: u64 = 10_000_000_000;

pub const RNG_NAME: &str = "ChaCha8Rng(seed_from_u64(seed), stream = episode index)";

/// Chooses an action from the canonical TTLs of the current state.
pub trait ActionRule: Sync {
    fn choose(&self, ttls: &[u8], rng: &mut ChaCha8Rng) -> usize;
}

/// A policy materialised over a [`StateSpace`]. On a reduced space the
/// viable projection of the state is looked up.
pub struct TableRule<'a> {
    space: &'a StateSpace,
    kind: TableKind<'a>,
}

enum TableKind<'a> {
    Deterministic(&'a [usize]),
    Stochastic {
        n_actions: usize,
        cumulative: Vec<f64>,
    },
}

impl<'a> TableRule<'a> {
    pub fn new(policy: &'a Policy, space: &'a StateSpace) -> Result<Self> {
        if policy.len() != space.len() {
            return Err(Error::domain("policy and state space sizes differ"));
        }
        let kind = match policy {
            Policy::Deterministic(a) => TableKind::Deterministic(a),
            Policy::Stochastic { n_actions, probs } => {
                let mut cumulative = Vec::with_capacity(probs.len());
                for row in probs.chunks(*n_actions) {
                    let mut acc = 0.0;
                    for &p in row {
                        acc += p;
                        cumulative.push(acc);
                    }
                }
                TableKind::Stochastic {
                    n_actions: *n_actions,
                    cumulative,
                }
            }
        };
        Ok(TableRule { space, kind })
    }
}

impl ActionRule for TableRule<'_> {
    #[inline]
    fn choose(&self, ttls: &[u8], rng: &mut ChaCha8Rng) -> usize {
        let id = self
            .space
            .lookup_ttls(ttls)
            .expect("simulated state outside the policy's state space");
        match &self.kind {
            TableKind::Deterministic(a) => a[id],
            TableKind::Stochastic {
                n_actions,
                cumulative,
            } => {
                let row = &cumulative[id * n_actions..(id + 1) * n_actions];
                let u: f64 = rng.random::<f64>() * row[n_actions - 1];
                row.iter().position(|&c| u < c).unwrap_or(n_actions - 1)
            }
        }
    }
}

/// Same action in every state.
pub struct ConstantRule(pub usize);

impl ActionRule for ConstantRule {
    fn choose(&self, _: &[u8], _: &mut ChaCha8Rng) -> usize {
        self.0
    }
}

/// Uniformly random action in every state.
pub struct UniformRule(pub usize);

impl ActionRule for UniformRule {
    fn choose(&self, _: &[u8], rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(0..self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Steps after which an episode is declared non-terminating.
    pub step_cap: u64,
    pub histogram: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            step_cap: DEFAULT_STEP_CAP,
            histogram: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub episodes: u64,
    pub mean: f64,
    pub std_error: f64,
    /// Three-standard-error half width.
    pub ci3: f64,
    pub seed: u64,
    pub rng: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<BTreeMap<u64, u64>>,
}

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Runs one episode from the empty state and returns its completion time.
pub fn simulate_episode<R: ActionRule + ?Sized>(
    rule: &R,
    n: usize,
    actions: &ActionSpace,
    rng: &mut ChaCha8Rng,
    step_cap: u64,
) -> Result<u64> {
    if n == 0 || n > MAX_LINKS {
        return Err(Error::domain(format!(
            "simulation supports 1..={MAX_LINKS} links, got {n}"
        )));
    }
    let acts = actions.actions();
    let mut buf = [0u8; MAX_LINKS];
    let mut len = 0usize;
    let mut t: u64 = 0;
    while t < step_cap {
        t += 1;
        let a = &acts[rule.choose(&buf[..len], rng)];
        let success = rng.random::<f64>() < a.p;
        for x in &mut buf[..len] {
            *x -= 1;
        }
        // canonical order puts expired links at the tail
        while len > 0 && buf[len - 1] == 0 {
            len -= 1;
        }
        if success {
            let ttl = a.ttl as u8;
            let pos = buf[..len].iter().position(|&x| x < ttl).unwrap_or(len);
            buf.copy_within(pos..len, pos + 1);
            buf[pos] = ttl;
            len += 1;
            if len == n {
                return Ok(t);
            }
        }
    }
    Err(Error::StepCap {
        cap: step_cap,
        completed: 0,
    })
}

#[derive(Default)]
struct Acc {
    ok: u64,
    sum: u128,
    sum_sq: u128,
    failed: bool,
    histogram: BTreeMap<u64, u64>,
}

impl Acc {
    fn merge(mut self, other: Acc) -> Acc {
        self.ok += other.ok;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.failed |= other.failed;
        for (k, v) in other.histogram {
            *self.histogram.entry(k).or_insert(0) += v;
        }
        self
    }
}

/// Estimates `E[T]` from `episodes` independent episodes.
pub fn estimate<R: ActionRule + ?Sized>(
    rule: &R,
    n: usize,
    actions: &ActionSpace,
    episodes: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimResult> {
    if episodes < 2 {
        return Err(Error::domain(
            "at least two episodes are needed for a standard error",
        ));
    }
    if n > actions.t_max() as usize {
        return Err(Error::Infeasible {
            n,
            t_max: actions.t_max(),
        });
    }
    let acc = (0..episodes)
        .into_par_iter()
        .fold(Acc::default, |mut acc, i| {
            if acc.failed {
                return acc;
            }
            let mut rng = episode_rng(seed, i);
            match simulate_episode(rule, n, actions, &mut rng, opts.step_cap) {
                Ok(t) => {
                    acc.ok += 1;
                    acc.sum += t as u128;
                    acc.sum_sq += (t as u128) * (t as u128);
                    if opts.histogram {
                        *acc.histogram.entry(t).or_insert(0) += 1;
                    }
                }
                Err(_) => acc.failed = true,
            }
            acc
        })
        .reduce(Acc::default, Acc::merge);
    if acc.failed {
        return Err(Error::StepCap {
            cap: opts.step_cap,
            completed: acc.ok,
        });
    }
    let count = episodes as u128;
    let mean = acc.sum as f64 / episodes as f64;
    let spread = match count.checked_mul(acc.sum_sq) {
        Some(nss) => (nss - acc.sum * acc.sum) as f64,
        None => {
            let m = acc.sum as f64 / episodes as f64;
            (acc.sum_sq as f64 - m * acc.sum as f64) * episodes as f64
        }
    };
    let variance = spread / (episodes as f64 * (episodes as f64 - 1.0));
    let std_error = (variance / episodes as f64).sqrt();
    Ok(SimResult {
        episodes,
        mean,
        std_error,
        ci3: 3.0 * std_error,
        seed,
        rng: RNG_NAME.to_string(),
        histogram: opts.histogram.then_some(acc.histogram),
    })
}
