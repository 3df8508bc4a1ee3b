//! Baseline samplers and per-state decision rules used for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{EpochAction, LiftedMdp};
use crate::model::{DecisionRule, DelayDistribution, PrimalMdp};
use crate::policy::DeterministicPolicy;
use crate::unconstrained::argmin_first;

/// How long to wait after a delivery, as a function of the observed delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingRule {
    ZeroWait,
    ConstantWait { z: u32 },
    /// Fixed generation period with queueing; runs only in the queued simulator.
    Uniform { d: u32 },
    /// Wait `max(0, β - y)`, rounded to the nearest slot.
    AoiThreshold { beta: f64 },
}

/// Waiting time chosen by `rule` after a delivery with delay `y`.
pub fn sampling_rule_wait(rule: &SamplingRule, y: u32) -> Result<u32> {
    match *rule {
        SamplingRule::ZeroWait => Ok(0),
        SamplingRule::ConstantWait { z } => Ok(z),
        SamplingRule::Uniform { .. } => Err(Error::UniformNotWaitingRule),
        SamplingRule::AoiThreshold { beta } => {
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(Error::InvalidParameter(format!("beta = {beta} must be finite and >= 0")));
            }
            Ok((beta - y as f64).max(0.0).round() as u32)
        }
    }
}

/// `E[max(β, Y)] - max(1/f_max, E[max(β, Y)^2] / (2β))`.
pub fn aoi_beta_residual(d: &DelayDistribution, f_max: f64, beta: f64) -> f64 {
    let first = d.expect(|y| beta.max(y as f64));
    let second = d.expect(|y| beta.max(y as f64).powi(2));
    first - (1.0 / f_max).max(second / (2.0 * beta))
}

/// Threshold of the age-optimal sampler under a frequency budget, by
/// bisection on [`aoi_beta_residual`]. `f_max = ∞` means no budget.
pub fn aoi_optimal_beta(d: &DelayDistribution, f_max: f64, tol: f64) -> Result<f64> {
    if !(f_max > 0.0) {
        return Err(Error::InvalidParameter(format!("f_max = {f_max} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be positive")));
    }
    let r = |b: f64| aoi_beta_residual(d, f_max, b);
    let mut lo = d.min_delay() as f64;
    while r(lo) >= 0.0 {
        lo *= 0.5;
        if lo < 1e-12 {
            return Err(Error::BracketExpansion { cap: lo });
        }
    }
    let cap = 1e12;
    let mut hi = 2.0 * (d.max_delay() as f64).max(if f_max.is_finite() { 1.0 / f_max } else { 0.0 });
    while r(hi) < 0.0 {
        hi *= 2.0;
        if hi > cap {
            return Err(Error::BracketExpansion { cap });
        }
    }
    // The residual can vanish on a whole interval (constant delay), so bisect
    // for the left end of the root set rather than stopping at the first zero.
    while hi - lo > tol * hi.max(1.0) && hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if r(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn myopic_policy(m: &PrimalMdp) -> DecisionRule {
    let actions = (0..m.num_states())
        .map(|s| {
            let costs: Vec<f64> = (0..m.num_actions()).map(|a| m.cost(s, a)).collect();
            argmin_first(&costs)
        })
        .collect();
    DecisionRule(actions)
}

/// Average-cost-optimal decision rule of the delay-free primal chain, by
/// damped relative value iteration (`τ = 0.5`) so periodic chains converge too.
pub fn longterm_primal_policy(m: &PrimalMdp, tol: f64, k_max: usize) -> Result<DecisionRule> {
    let tau = 0.5;
    let ns = m.num_states();
    let na = m.num_actions();
    let bellman = |h: &[f64], s: usize, a: usize, scale: f64| -> f64 {
        let row = m.transition(a).row(s);
        m.cost(s, a) + scale * row.iter().zip(h).map(|(p, v)| p * v).sum::<f64>()
    };
    let mut h = vec![0.0; ns];
    let mut u_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for _ in 0..k_max {
        let best: Vec<f64> = (0..ns)
            .map(|s| (0..na).map(|a| bellman(&h, s, a, tau)).fold(f64::INFINITY, f64::min))
            .collect();
        let u = best[0];
        let next: Vec<f64> = h.iter().zip(&best).map(|(hv, b)| (1.0 - tau) * hv + b - u).collect();
        let diff: Vec<f64> = next.iter().zip(&h).map(|(a, b)| a - b).collect();
        residual = crate::linalg::span(&diff);
        let du = (u - u_prev).abs();
        h = next;
        u_prev = u;
        if residual < tol && du < tol {
            let scaled: Vec<f64> = h.iter().map(|v| tau * v).collect();
            let actions = (0..ns)
                .map(|s| {
                    let vals: Vec<f64> = (0..na).map(|a| bellman(&scaled, s, a, 1.0)).collect();
                    argmin_first(&vals)
                })
                .collect();
            return Ok(DecisionRule(actions));
        }
    }
    Err(Error::NotConverged {
        iterations: k_max,
        residual,
    })
}

/// Lifted policy `(s, y, a_prev) -> (wait(y), π(s))` of a baseline pair.
pub fn baseline_policy(l: &LiftedMdp, rule: &SamplingRule, decision: &DecisionRule) -> Result<DeterministicPolicy> {
    let actions = l
        .states()
        .iter()
        .map(|st| {
            let z = sampling_rule_wait(rule, st.y)?;
            if z > l.z_max() {
                return Err(Error::InvalidParameter(format!(
                    "baseline waits {z} slots after delay {}, beyond z_max = {}",
                    st.y,
                    l.z_max()
                )));
            }
            Ok(EpochAction {
                z,
                a: decision.action(st.s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DeterministicPolicy::new(actions, l)
}
