//! Markov decision process for sequential heralded entanglement generation
//! with an adjustable rate–fidelity trade-off.
//!
//! A state is the multiset of time-to-live values of the links in memory;
//! each step an action `(p, F)` is chosen, every link ages by one step and
//! with probability `p` a link with TTL `t_TTL(F)` is added. The process ends
//! when `n` links coexist. This crate enumerates the states, builds the
//! transition table, evaluates and optimises policies, and simulates them.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actions;
pub mod dp;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod policies;
pub mod statespace;
pub mod transitions;

pub use actions::{build_action_space, Action, ActionSpace, Provenance};
pub use dp::{policy_evaluation, policy_iteration, EvalMethod, EvalOptions, Policy, ValueTable};
pub use error::{Error, Result};
pub use model::ModelParams;
pub use statespace::{State, StateSpace};
pub use transitions::TransitionTable;
