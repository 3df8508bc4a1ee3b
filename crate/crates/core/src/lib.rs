//! Joint sampling and remote decision-making for a Markov source observed
//! through a random-delay channel.
//!
//! The controller receives delayed samples of a controlled Markov chain,
//! decides how long to wait before taking the next sample and which action to
//! hold until the next delivery. This crate builds the lifted MDP over
//! delivery epochs, solves it with and without a sampling-rate constraint,
//! evaluates baseline policies, and simulates the protocol slot by slot.

pub mod baselines;
pub mod constrained;
pub mod error;
pub mod lifted;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod policy;
pub mod sim;
pub mod unconstrained;

pub use error::{Error, Result};
pub use lifted::{build_lifted, check_unichain_sufficient, cost_bounds, EpochAction, LiftedMdp, LiftedState};
pub use model::{delay_moments, make_delay, DecisionRule, DelayDistribution, DelayKind, PrimalMdp};
pub use policy::{DeterministicPolicy, LiftedPolicy, MixturePolicy, OccupancyPolicy};
pub use unconstrained::{IterationTrace, PolicyEvaluation, SolverConfig};

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
