//! Unconstrained solvers: the Dinkelbach value `U(λ)` by (damped) relative
//! value iteration, its root `ρ*` by bisection or by one-layer fixed-point
//! iterations, and exact policy evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{cost_bounds, EpochAction, LiftedMdp};
use crate::linalg::{self, Matrix};
use crate::model::stationary_distribution;
pub use crate::policy::{DeterministicPolicy, LiftedPolicy};

/// Window used by the oscillation predicate.
const OSCILLATION_WINDOW: usize = 100;

/// Solver knobs shared by the iterative methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tau: f64,
    pub kappa: f64,
    /// Stopping tolerance of the value iterations.
    pub tol: f64,
    pub k_max: usize,
    /// Bracket width at which `λ` bisection stops.
    pub eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            kappa: 0.9,
            tol: 1e-10,
            k_max: 200_000,
            eps: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `U_K` or `ρ_K`, one per iteration.
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residuals settled into a non-decaying band (see [`is_oscillatory`]).
    pub oscillatory: bool,
}

impl IterationTrace {
    fn push(&mut self, value: f64, residual: f64) {
        self.values.push(value);
        self.residuals.push(residual);
        self.iterations += 1;
    }

    fn finish(&mut self, converged: bool, tol: f64) {
        self.converged = converged;
        self.oscillatory = !converged && is_oscillatory(&self.residuals, tol);
    }

    pub fn last_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// True when the last 100 residuals all exceed `tol` and their range is
/// within 10% of their maximum.
pub fn is_oscillatory(residuals: &[f64], tol: f64) -> bool {
    if residuals.len() < OSCILLATION_WINDOW {
        return false;
    }
    let tail = &residuals[residuals.len() - OSCILLATION_WINDOW..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo > tol && (hi - lo) <= 0.1 * hi
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    /// Expected cost per epoch.
    pub q: f64,
    /// Expected epoch length.
    pub f: f64,
    pub cost_rate: f64,
    pub epoch_stationary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RviResult {
    pub u: f64,
    pub v: Vec<f64>,
    pub trace: IterationTrace,
}

/// Plain relative value iteration for `U(λ)`. Identical to `tau_rvi` with `τ = 1`.
pub fn rvi(l: &LiftedMdp, lambda: f64, k_max: usize, tol: f64) -> RviResult {
    tau_iterate(l, lambda, 1.0, k_max, tol)
}

/// Damped relative value iteration. Returns `U ≈ U(λ)` and `V ≈ V*/τ`.
pub fn tau_rvi(l: &LiftedMdp, lambda: f64, tau: f64, k_max: usize, tol: f64) -> Result<RviResult> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau} outside (0, 1]")));
    }
    Ok(tau_iterate(l, lambda, tau, k_max, tol))
}

fn tau_iterate(l: &LiftedMdp, lambda: f64, tau: f64, k_max: usize, tol: f64) -> RviResult {
    let n = l.num_states();
    let nu = l.num_actions();
    let r = l.reference();
    let mut v = vec![0.0; n];
    let mut u_prev = f64::NAN;
    let mut best = vec![0.0; n];
    let mut trace = IterationTrace::default();
    let mut converged = false;
    for _ in 0..k_max {
        let vbar = l.delay_averaged(&v);
        for (g, slot) in best.iter_mut().enumerate() {
            let mut m = f64::INFINITY;
            for u in 0..nu {
                let val = l.q(g, u) - lambda * l.f(u) + tau * l.expected_next(g, u, &vbar);
                if val < m {
                    m = val;
                }
            }
            *slot = m;
        }
        let u_new = best[r];
        let next: Vec<f64> = v
            .iter()
            .zip(&best)
            .map(|(&vi, &bi)| (1.0 - tau) * vi + bi - u_new)
            .collect();
        let diff: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        let residual = linalg::span(&diff);
        let du = (u_new - u_prev).abs();
        trace.push(u_new, residual);
        v = next;
        u_prev = u_new;
        if residual < tol && du < tol {
            converged = true;
            break;
        }
    }
    trace.finish(converged, tol);
    RviResult {
        u: u_prev,
        v,
        trace,
    }
}

/// Greedy policy for `g(γ, u; λ) + E[V(γ')]`, ties to the smallest action index
/// (smallest wait, then smallest primal action).
pub fn extract_policy(l: &LiftedMdp, lambda: f64, v: &[f64]) -> DeterministicPolicy {
    let vbar = l.delay_averaged(v);
    let actions = (0..l.num_states())
        .map(|g| {
            let vals: Vec<f64> = (0..l.num_actions())
                .map(|u| l.q(g, u) - lambda * l.f(u) + l.expected_next(g, u, &vbar))
                .collect();
            l.action(argmin_first(&vals))
        })
        .collect();
    DeterministicPolicy { actions }
}

/// Smallest index whose value is within a relative `1e-12` of the minimum.
pub(crate) fn argmin_first(vals: &[f64]) -> usize {
    let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * (1.0 + best.abs());
    vals.iter().position(|&v| v <= best + slack).unwrap_or(0)
}

/// Induced lifted-chain transition matrix.
pub fn induced_chain(l: &LiftedMdp, phi: &LiftedPolicy) -> Result<Matrix> {
    let n = l.num_states();
    if phi.num_states() != n {
        return Err(Error::DimensionMismatch(format!(
            "policy covers {} states, lifted MDP has {n}",
            phi.num_states()
        )));
    }
    let mut p = Matrix::zeros(n, n);
    for g in 0..n {
        for (act, w) in phi.distribution(g) {
            if w == 0.0 {
                continue;
            }
            let u = action_index(l, act)?;
            for (j, pj) in l.transition(g, u) {
                p[(g, j)] += w * pj;
            }
        }
    }
    Ok(p)
}

fn action_index(l: &LiftedMdp, act: EpochAction) -> Result<usize> {
    l.action_index(act.z, act.a).ok_or_else(|| {
        Error::InvalidParameter(format!("epoch action (z = {}, a = {}) out of range", act.z, act.a))
    })
}

/// Exact long-run epoch cost, epoch length and cost rate of a stationary policy.
pub fn evaluate_policy(l: &LiftedMdp, phi: &LiftedPolicy) -> Result<PolicyEvaluation> {
    let p = induced_chain(l, phi)?;
    let mu = stationary_distribution(&p)?;
    let mut q = 0.0;
    let mut f = 0.0;
    for (g, &m) in mu.iter().enumerate() {
        for (act, w) in phi.distribution(g) {
            let u = action_index(l, act)?;
            q += m * w * l.q(g, u);
            f += m * w * l.f(u);
        }
    }
    Ok(PolicyEvaluation {
        q,
        f,
        cost_rate: q / f,
        epoch_stationary: mu,
    })
}

pub fn evaluate_deterministic(l: &LiftedMdp, phi: &DeterministicPolicy) -> Result<PolicyEvaluation> {
    evaluate_policy(l, &LiftedPolicy::Deterministic(phi.clone()))
}

/// Exact solution of the MDP at a fixed `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSolution {
    pub lambda: f64,
    /// `U(λ) = Q - λF` of the optimal policy.
    pub u: f64,
    /// Relative values with `h(γ^r) = 0`.
    pub bias: Vec<f64>,
    pub policy: DeterministicPolicy,
    pub evaluation: PolicyEvaluation,
    pub rvi_iterations: usize,
}

/// Solves the MDP at `λ`: damped value iteration to locate a near-optimal
/// policy, then policy iteration with exact evaluation to remove the residual
/// iteration error. Ties are broken toward the smallest action index.
pub fn solve_at(l: &LiftedMdp, lambda: f64, cfg: &SolverConfig) -> Result<LambdaSolution> {
    let run = tau_rvi(l, lambda, cfg.tau, cfg.k_max, cfg.tol)?;
    if !run.trace.converged {
        return Err(Error::InnerNotConverged {
            lambda,
            iterations: run.trace.iterations,
        });
    }
    let scaled: Vec<f64> = run.v.iter().map(|x| cfg.tau * x).collect();
    let mut policy = extract_policy(l, lambda, &scaled);
    let mut bias = scaled;
    for _ in 0..100 {
        let Some((_, h)) = gain_and_bias(l, lambda, &policy) else {
            break;
        };
        bias = h;
        let improved = improve(l, lambda, &policy, &bias);
        if improved == policy {
            break;
        }
        policy = improved;
    }
    let policy = extract_policy(l, lambda, &bias);
    let evaluation = evaluate_deterministic(l, &policy)?;
    Ok(LambdaSolution {
        lambda,
        u: evaluation.q - lambda * evaluation.f,
        bias,
        policy,
        evaluation,
        rvi_iterations: run.trace.iterations,
    })
}

/// Solves `h(γ) + U = g(γ, φ(γ)) + Σ p(γ'|γ, φ(γ)) h(γ')` with `h(γ^r) = 0`.
fn gain_and_bias(l: &LiftedMdp, lambda: f64, phi: &DeterministicPolicy) -> Option<(f64, Vec<f64>)> {
    let n = l.num_states();
    let r = l.reference();
    // Unknown layout: h for every state except r, and U in r's slot.
    let mut a = Matrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for g in 0..n {
        let act = phi.action(g);
        let u = l.action_index(act.z, act.a)?;
        b[g] = l.q(g, u) - lambda * l.f(u);
        a[(g, r)] += 1.0;
        if g != r {
            a[(g, g)] += 1.0;
        }
        for (j, pj) in l.transition(g, u) {
            if j != r {
                a[(g, j)] -= pj;
            }
        }
    }
    let x = linalg::solve(&a, &b, 1e-12)?;
    let gain = x[r];
    let mut h = x;
    h[r] = 0.0;
    Some((gain, h))
}

/// Policy improvement that keeps the incumbent action unless another action
/// is better by more than a small relative margin.
fn improve(l: &LiftedMdp, lambda: f64, phi: &DeterministicPolicy, h: &[f64]) -> DeterministicPolicy {
    let hbar = l.delay_averaged(h);
    let actions = (0..l.num_states())
        .map(|g| {
            let cur = phi.action(g);
            let cu = l.action_index(cur.z, cur.a).expect("valid policy");
            let val = |u: usize| l.q(g, u) - lambda * l.f(u) + l.expected_next(g, u, &hbar);
            let incumbent = val(cu);
            let vals: Vec<f64> = (0..l.num_actions()).map(val).collect();
            let best = argmin_first(&vals);
            if vals[best] < incumbent - 1e-9 * (1.0 + incumbent.abs()) {
                l.action(best)
            } else {
                cur
            }
        })
        .collect();
    DeterministicPolicy { actions }
}

/// Default perturbation for one-sided limits in `λ`.
pub fn default_delta(lambda: f64) -> f64 {
    (1e-8 * lambda.abs()).max(1e-6)
}

/// Epoch lengths of the optimal policies just below and just above `λ`.
pub fn f_limits(l: &LiftedMdp, lambda: f64, delta: Option<f64>, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let delta = delta.unwrap_or_else(|| default_delta(lambda));
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    let minus = solve_at(l, lambda - delta, cfg)?;
    let plus = solve_at(l, lambda + delta, cfg)?;
    Ok((minus.evaluation.f, plus.evaluation.f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionResult {
    pub rho_star: f64,
    pub policy: DeterministicPolicy,
    /// `(λ, U(λ))` at every bisection step.
    pub steps: Vec<(f64, f64)>,
    pub inner_iterations: usize,
}

/// Bisection on the sign of `U(λ)` with damped value iteration inside.
pub fn bisec_tau_rvi(l: &LiftedMdp, eps: f64, tau: f64, cfg: &SolverConfig) -> Result<BisectionResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    let (mut lo, mut hi) = cost_bounds(l.primal())?;
    let mut steps = Vec::new();
    let mut inner = 0;
    while hi - lo >= eps {
        let mid = 0.5 * (lo + hi);
        let run = tau_rvi(l, mid, tau, cfg.k_max, cfg.tol)?;
        inner += run.trace.iterations;
        if !run.trace.converged {
            return Err(Error::InnerNotConverged {
                lambda: mid,
                iterations: run.trace.iterations,
            });
        }
        steps.push((mid, run.u));
        if run.u > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho_star = 0.5 * (lo + hi);
    let inner_cfg = SolverConfig { tau, ..cfg.clone() };
    let sol = solve_at(l, rho_star, &inner_cfg)?;
    Ok(BisectionResult {
        rho_star,
        policy: sol.policy,
        steps,
        inner_iterations: inner + sol.rvi_iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub rho: f64,
    /// Fixed-point relative values `W`.
    pub w: Vec<f64>,
    pub trace: IterationTrace,
}

/// Residuals of the fixed-point system at `(ρ, W)`:
/// `max_γ |min_u {q - ρ f + E W'} - W(γ)|` and
/// `|ρ - min_u {(q(γ^r) + E W') / f}|`.
pub fn fixed_point_residuals(l: &LiftedMdp, rho: f64, w: &[f64]) -> (f64, f64) {
    let wbar = l.delay_averaged(w);
    let mut r1: f64 = 0.0;
    for (g, &wg) in w.iter().enumerate() {
        let m = (0..l.num_actions())
            .map(|u| l.q(g, u) - rho * l.f(u) + l.expected_next(g, u, &wbar))
            .fold(f64::INFINITY, f64::min);
        r1 = r1.max((m - wg).abs());
    }
    let r2 = (rho - ratio_at_reference(l, &wbar)).abs();
    (r1, r2)
}

fn ratio_at_reference(l: &LiftedMdp, wbar: &[f64]) -> f64 {
    let r = l.reference();
    (0..l.num_actions())
        .map(|u| (l.q(r, u) + l.expected_next(r, u, wbar)) / l.f(u))
        .fold(f64::INFINITY, f64::min)
}

/// Undamped fixed-point iteration on the root equations. It may fail to
/// converge; non-convergence is reported in the trace.
pub fn fpbi(l: &LiftedMdp, k_max: usize, tol: f64) -> Result<FixedPointResult> {
    let n = l.num_states();
    let mut w = vec![0.0; n];
    let mut rho = ratio_at_reference(l, &l.delay_averaged(&w));
    let mut trace = IterationTrace::default();
    let mut converged = false;
    for k in 0..k_max {
        let wbar = l.delay_averaged(&w);
        let next: Vec<f64> = (0..n)
            .map(|g| {
                (0..l.num_actions())
                    .map(|u| l.q(g, u) - rho * l.f(u) + l.expected_next(g, u, &wbar))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let rho_next = ratio_at_reference(l, &l.delay_averaged(&next));
        if !rho_next.is_finite() || next.iter().any(|x| !x.is_finite() || x.abs() > 1e300) {
            return Err(Error::Overflow { iteration: k + 1 });
        }
        let residual = linalg::max_abs_diff(&next, &w).max((rho_next - rho).abs());
        trace.push(rho_next, residual);
        w = next;
        rho = rho_next;
        if residual < tol {
            converged = true;
            break;
        }
    }
    trace.finish(converged, tol);
    Ok(FixedPointResult { rho, w, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnePdsiResult {
    pub rho_star: f64,
    /// `κ E[Y] W̃`, the fixed-point relative values.
    pub w: Vec<f64>,
    pub w_tilde: Vec<f64>,
    pub policy: DeterministicPolicy,
    pub trace: IterationTrace,
    /// Fixed-point residuals at the returned iterate.
    pub residuals: (f64, f64),
}

/// One-layer synchronous iteration for `(ρ*, W*)`. The trace records the
/// fixed-point residual of each iterate; the run stops once it drops below `tol`.
pub fn one_pdsi(l: &LiftedMdp, kappa: f64, k_max: usize, tol: f64) -> Result<OnePdsiResult> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} outside (0, 1)")));
    }
    let n = l.num_states();
    let ey = l.mean_delay();
    let scale = kappa * ey;
    let r = l.reference();
    let mut wt = vec![0.0; n];
    let mut trace = IterationTrace::default();
    let mut converged = false;
    let mut out: Option<(f64, Vec<f64>)> = None;
    for _ in 0..k_max {
        let w: Vec<f64> = wt.iter().map(|x| scale * x).collect();
        let wbar = l.delay_averaged(&w);
        let step = |g: usize| {
            (0..l.num_actions())
                .map(|u| (l.q(g, u) - scale * wt[g] + l.expected_next(g, u, &wbar)) / l.f(u))
                .fold(f64::INFINITY, f64::min)
        };
        let rho = step(r) + wt[r];
        // Residual of the current W against the new ρ, from the same sweep.
        let mut r1: f64 = 0.0;
        for (g, &wg) in w.iter().enumerate() {
            let m = (0..l.num_actions())
                .map(|u| l.q(g, u) - rho * l.f(u) + l.expected_next(g, u, &wbar))
                .fold(f64::INFINITY, f64::min);
            r1 = r1.max((m - wg).abs());
        }
        trace.push(rho, r1);
        if !rho.is_finite() {
            return Err(Error::Overflow { iteration: trace.iterations });
        }
        if r1 < tol {
            converged = true;
            out = Some((rho, w));
            break;
        }
        let next: Vec<f64> = (0..n).map(|g| step(g) + wt[g] - rho).collect();
        wt = next;
    }
    trace.finish(converged, tol);
    let Some((rho_star, w)) = out else {
        return Err(Error::NotConverged {
            iterations: trace.iterations,
            residual: trace.last_residual(),
        });
    };
    let residuals = fixed_point_residuals(l, rho_star, &w);
    let policy = extract_policy(l, rho_star, &w);
    Ok(OnePdsiResult {
        rho_star,
        w,
        w_tilde: wt,
        policy,
        trace,
        residuals,
    })
}

/// Least-squares slope of `ln(residual)` against the iteration index over
/// `residuals[from..]`, skipping non-positive entries.
pub fn log_residual_slope(residuals: &[f64], from: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .skip(from)
        .filter(|(_, &r)| r > 0.0)
        .map(|(k, &r)| (k as f64, r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
