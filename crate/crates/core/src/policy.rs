//! Stationary policies on the lifted state space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{EpochAction, LiftedMdp};

/// Pure map from lifted-state index to epoch action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub actions: Vec<EpochAction>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<EpochAction>, l: &LiftedMdp) -> Result<Self> {
        if actions.len() != l.num_states() {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} entries for {} lifted states",
                actions.len(),
                l.num_states()
            )));
        }
        if let Some(act) = actions.iter().find(|a| l.action_index(a.z, a.a).is_none()) {
            return Err(Error::InvalidParameter(format!(
                "epoch action (z = {}, a = {}) out of range",
                act.z, act.a
            )));
        }
        Ok(Self { actions })
    }

    /// Policy choosing the same epoch action everywhere.
    pub fn constant(l: &LiftedMdp, action: EpochAction) -> Result<Self> {
        Self::new(vec![action; l.num_states()], l)
    }

    pub fn action(&self, g: usize) -> EpochAction {
        self.actions[g]
    }

    pub fn max_wait(&self) -> u32 {
        self.actions.iter().map(|a| a.z).max().unwrap_or(0)
    }
}

/// Per-epoch randomization between two deterministic policies: `phi_plus`
/// with probability `eta`, `phi_minus` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePolicy {
    pub phi_plus: DeterministicPolicy,
    pub phi_minus: DeterministicPolicy,
    pub eta: f64,
}

/// Randomized policy read off an occupancy measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyPolicy {
    /// Per-state action distribution; empty for zero-mass states.
    pub distributions: Vec<Vec<(EpochAction, f64)>>,
    pub fallback: DeterministicPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiftedPolicy {
    Deterministic(DeterministicPolicy),
    Mixture(MixturePolicy),
    Occupancy(OccupancyPolicy),
}

impl From<DeterministicPolicy> for LiftedPolicy {
    fn from(p: DeterministicPolicy) -> Self {
        Self::Deterministic(p)
    }
}

impl From<MixturePolicy> for LiftedPolicy {
    fn from(p: MixturePolicy) -> Self {
        Self::Mixture(p)
    }
}

impl From<OccupancyPolicy> for LiftedPolicy {
    fn from(p: OccupancyPolicy) -> Self {
        Self::Occupancy(p)
    }
}

impl LiftedPolicy {
    pub fn num_states(&self) -> usize {
        match self {
            Self::Deterministic(p) => p.actions.len(),
            Self::Mixture(p) => p.phi_plus.actions.len(),
            Self::Occupancy(p) => p.fallback.actions.len(),
        }
    }

    /// Action distribution at lifted state `g`.
    pub fn distribution(&self, g: usize) -> Vec<(EpochAction, f64)> {
        match self {
            Self::Deterministic(p) => vec![(p.action(g), 1.0)],
            Self::Mixture(p) => {
                let plus = p.phi_plus.action(g);
                let minus = p.phi_minus.action(g);
                if plus == minus {
                    vec![(plus, 1.0)]
                } else {
                    vec![(plus, p.eta), (minus, 1.0 - p.eta)]
                }
            }
            Self::Occupancy(p) => {
                if p.distributions[g].is_empty() {
                    vec![(p.fallback.action(g), 1.0)]
                } else {
                    p.distributions[g].clone()
                }
            }
        }
    }

    /// Draws an action at `g`. Deterministic policies consume no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, g: usize, rng: &mut R) -> EpochAction {
        match self {
            Self::Deterministic(p) => p.action(g),
            Self::Mixture(p) => {
                if rng.gen::<f64>() < p.eta {
                    p.phi_plus.action(g)
                } else {
                    p.phi_minus.action(g)
                }
            }
            Self::Occupancy(p) => {
                let dist = &p.distributions[g];
                if dist.is_empty() {
                    return p.fallback.action(g);
                }
                let r: f64 = rng.gen();
                let mut acc = 0.0;
                for &(act, prob) in dist {
                    acc += prob;
                    if r < acc {
                        return act;
                    }
                }
                dist.last().expect("non-empty").0
            }
        }
    }

    pub fn max_wait(&self) -> u32 {
        (0..self.num_states())
            .flat_map(|g| self.distribution(g))
            .filter(|&(_, p)| p > 0.0)
            .map(|(a, _)| a.z)
            .max()
            .unwrap_or(0)
    }
}
