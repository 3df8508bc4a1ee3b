//! Rate-constrained solvers: the three-layer Lagrangian bisection and the
//! two-stage OnePDSI + occupancy LP method, plus the sampling-frequency
//! threshold and the sensitivity of `h*` to the frequency budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{cost_bounds, LiftedMdp};
use crate::linalg::Matrix;
use crate::lp::{solve_lp, LinearProgram, LpStatus};
pub use crate::policy::{MixturePolicy, OccupancyPolicy};
use crate::policy::{DeterministicPolicy, LiftedPolicy};
use crate::unconstrained::{
    default_delta, evaluate_policy, one_pdsi, solve_at, LambdaSolution, SolverConfig,
};

/// Relative slack below which the rate constraint counts as met with equality.
const EQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstrainedConfig {
    pub solver: SolverConfig,
    /// Outer (Dinkelbach) bracket width.
    pub eps1: f64,
    /// Middle (Lagrange multiplier) bracket width.
    pub eps2: f64,
    /// Largest multiplier tried before declaring the rate unreachable.
    pub theta_cap: f64,
    /// Perturbation for one-sided limits; `None` uses `max(1e-6, 1e-8 |λ|)`.
    pub delta: Option<f64>,
}

impl Default for ConstrainedConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            eps1: 1e-9,
            eps2: 1e-9,
            theta_cap: 1e9,
            delta: None,
        }
    }
}

impl ConstrainedConfig {
    fn delta(&self, lambda: f64) -> f64 {
        self.delta.unwrap_or_else(|| default_delta(lambda))
    }
}

/// Which structural case produced the returned policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyCase {
    /// Constraint slack: the unconstrained optimum is feasible.
    Unconstrained,
    /// One deterministic policy meets the rate with equality.
    Deterministic,
    /// Two adjacent deterministic policies randomized per epoch.
    Mixture,
    /// Policy read off the occupancy LP.
    Occupancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ThreeLayer,
    QuickBlp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedReport {
    pub method: Method,
    pub h_star: f64,
    pub lambda_star: f64,
    /// Lagrange multiplier; zero when the three-layer path finds the constraint slack
    /// and for QuickBLP.
    pub theta_star: f64,
    pub policy: LiftedPolicy,
    pub case: PolicyCase,
    pub achieved_f: f64,
    /// Long-run cost rate of `policy`.
    pub achieved_cost: f64,
    pub binding: bool,
    /// Mixture weight from the closed-form ratio of epoch lengths, when a mixture is used.
    pub eta_formula: Option<f64>,
}

/// Lagrangian dual value `Υ(θ, λ) = U(λ + θ) + θ / f_max` with its minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct DualValue {
    pub upsilon: f64,
    pub f: f64,
    pub policy: DeterministicPolicy,
}

pub fn lagrangian_dual_value(
    l: &LiftedMdp,
    lambda: f64,
    theta: f64,
    f_max: f64,
    cfg: &SolverConfig,
) -> Result<DualValue> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!("theta = {theta} must be >= 0")));
    }
    check_f_max(f_max)?;
    let sol = solve_at(l, lambda + theta, cfg)?;
    Ok(DualValue {
        upsilon: sol.u + theta / f_max,
        f: sol.evaluation.f,
        policy: sol.policy,
    })
}

fn check_f_max(f_max: f64) -> Result<()> {
    if f_max > 0.0 && f_max.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("f_max = {f_max} must be positive and finite")))
    }
}

fn check_reachable(l: &LiftedMdp, f_max: f64) -> Result<()> {
    let required = 1.0 / f_max;
    let achievable = l.max_f();
    if required > achievable * (1.0 + EQUALITY_TOL) {
        return Err(Error::InfeasibleRate {
            required,
            achievable,
        });
    }
    Ok(())
}

/// Result of the multiplier search at one `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSearch {
    pub theta_star: f64,
    /// Solution at `λ + θ*` (epoch length at least `1/f_max`).
    pub plus: LambdaSolution,
    /// Solution just below the break point (epoch length below `1/f_max`).
    pub minus: LambdaSolution,
}

/// Bisects the multiplier on `F^{λ+θ} >= 1/f_max`, expanding the upper end
/// geometrically. The caller must already know `F^{λ+} < 1/f_max`.
///
/// The predicate is evaluated on the policy solved at `λ + θ` itself; with
/// ties resolved toward shorter waits this is the left-continuous branch, so
/// the returned `θ*` sits at the break point to within `eps2`.
pub fn middle_theta_search(
    l: &LiftedMdp,
    lambda: f64,
    f_max: f64,
    eps2: f64,
    cfg: &ConstrainedConfig,
) -> Result<ThetaSearch> {
    check_f_max(f_max)?;
    check_reachable(l, f_max)?;
    let target = 1.0 / f_max;
    let mut lo = 0.0;
    let mut minus = solve_at(l, lambda, &cfg.solver)?;
    if minus.evaluation.f >= target {
        return Ok(ThetaSearch {
            theta_star: 0.0,
            plus: minus.clone(),
            minus,
        });
    }
    let mut hi = 1.0f64.max(lambda.abs());
    let mut plus = loop {
        let sol = solve_at(l, lambda + hi, &cfg.solver)?;
        if sol.evaluation.f >= target {
            break sol;
        }
        lo = hi;
        minus = sol;
        if hi >= cfg.theta_cap {
            return Err(Error::InfeasibleRate {
                required: target,
                achievable: minus.evaluation.f,
            });
        }
        hi = (2.0 * hi).min(cfg.theta_cap);
    };
    while hi - lo >= eps2 && hi - lo > 4.0 * f64::EPSILON * (lambda + hi).abs() {
        let mid = 0.5 * (lo + hi);
        let sol = solve_at(l, lambda + mid, &cfg.solver)?;
        if sol.evaluation.f >= target {
            hi = mid;
            plus = sol;
        } else {
            lo = mid;
            minus = sol;
        }
    }
    Ok(ThetaSearch {
        theta_star: hi,
        plus,
        minus,
    })
}

/// Dual value `d(λ)` and the multiplier search that produced it.
struct OuterPoint {
    d: f64,
    theta: Option<ThetaSearch>,
    slack: Option<LambdaSolution>,
}

fn dual_at(l: &LiftedMdp, lambda: f64, f_max: f64, cfg: &ConstrainedConfig) -> Result<OuterPoint> {
    let at = solve_at(l, lambda, &cfg.solver)?;
    let right = solve_at(l, lambda + cfg.delta(lambda), &cfg.solver)?;
    if right.evaluation.f >= 1.0 / f_max {
        return Ok(OuterPoint {
            d: at.u,
            theta: None,
            slack: Some(right),
        });
    }
    let search = middle_theta_search(l, lambda, f_max, cfg.eps2, cfg)?;
    let d = search.plus.u + search.theta_star / f_max;
    Ok(OuterPoint {
        d,
        theta: Some(search),
        slack: None,
    })
}

/// Three-layer solve: bisection on `λ` over the sign of the dual value,
/// bisection on the multiplier inside, exact MDP solves innermost.
pub fn three_layer_solve(l: &LiftedMdp, f_max: f64, cfg: &ConstrainedConfig) -> Result<ConstrainedReport> {
    check_f_max(f_max)?;
    check_reachable(l, f_max)?;
    let (low, high) = cost_bounds(l.primal())?;
    let mut lo = low;
    let mut hi = high;
    // Grow the upper end until the dual value is negative there.
    let mut width = (high - low).max(1.0);
    let mut expansions = 0;
    while dual_at(l, hi, f_max, cfg)?.d > 0.0 {
        lo = hi;
        hi += width;
        width *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::BracketExpansion { cap: hi });
        }
    }
    while hi - lo >= cfg.eps1 {
        let mid = 0.5 * (lo + hi);
        if dual_at(l, mid, f_max, cfg)?.d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_star = 0.5 * (lo + hi);
    let point = dual_at(l, h_star, f_max, cfg)?;
    let target = 1.0 / f_max;

    let (policy, case, theta_star, eta_formula): (LiftedPolicy, PolicyCase, f64, Option<f64>) =
        match (point.slack, point.theta) {
            (Some(sol), _) => (sol.policy.into(), PolicyCase::Unconstrained, 0.0, None),
            (None, Some(search)) => {
                let f_plus = search.plus.evaluation.f;
                let f_minus = search.minus.evaluation.f;
                if f_plus - target < EQUALITY_TOL * target {
                    (search.plus.policy.into(), PolicyCase::Deterministic, search.theta_star, None)
                } else {
                    let formula = ((target - f_minus) / (f_plus - f_minus)).clamp(0.0, 1.0);
                    let mixture = calibrate_mixture(
                        l,
                        search.plus.policy.clone(),
                        search.minus.policy.clone(),
                        target,
                    )?;
                    (mixture.into(), PolicyCase::Mixture, search.theta_star, Some(formula))
                }
            }
            (None, None) => unreachable!("dual_at always returns one branch"),
        };
    let eval = evaluate_policy(l, &policy)?;
    Ok(ConstrainedReport {
        method: Method::ThreeLayer,
        h_star,
        lambda_star: h_star,
        theta_star,
        binding: case != PolicyCase::Unconstrained,
        policy,
        case,
        achieved_f: eval.f,
        achieved_cost: eval.cost_rate,
        eta_formula,
    })
}

/// Picks the per-epoch mixing weight so that the mixture's long-run epoch
/// length equals `target`.
///
/// The closed-form ratio of epoch lengths is exact for time-sharing between
/// the two policies; with an independent coin at every epoch the stationary
/// distribution moves with the weight, so the weight is found by bisection on
/// the exact evaluation instead.
pub fn calibrate_mixture(
    l: &LiftedMdp,
    phi_plus: DeterministicPolicy,
    phi_minus: DeterministicPolicy,
    target: f64,
) -> Result<MixturePolicy> {
    let mut mix = MixturePolicy {
        phi_plus,
        phi_minus,
        eta: 1.0,
    };
    let f_at = |m: &MixturePolicy| -> Result<f64> {
        Ok(evaluate_policy(l, &LiftedPolicy::Mixture(m.clone()))?.f)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        mix.eta = mid;
        if f_at(&mix)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mix.eta = hi;
    Ok(mix)
}

/// Occupancy measure with its LP value and the rate right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySolution {
    /// `x[g * |U| + u]`.
    pub x: Vec<f64>,
    pub value: f64,
}

/// Solves the occupancy-measure LP with mean epoch length pinned to `1/f_max`.
pub fn solve_occupancy_lp(l: &LiftedMdp, f_max: f64) -> Result<OccupancySolution> {
    let n = l.num_states();
    let nu = l.num_actions();
    let cols = n * nu;
    let r = l.reference();
    let rows = n + 1;
    let mut a = Matrix::zeros(rows, cols);
    let mut b = vec![0.0; rows];
    let mut c = vec![0.0; cols];
    // Row 0: rate; rows 1..n: balance (reference dropped); row n: normalization.
    b[0] = 1.0 / f_max;
    b[n] = 1.0;
    let balance_row = |g: usize| -> Option<usize> {
        match g.cmp(&r) {
            std::cmp::Ordering::Less => Some(g + 1),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(g),
        }
    };
    for g in 0..n {
        for u in 0..nu {
            let j = g * nu + u;
            c[j] = l.q(g, u);
            a[(0, j)] = l.f(u);
            a[(n, j)] = 1.0;
            if let Some(row) = balance_row(g) {
                a[(row, j)] += 1.0;
            }
            for (g2, p) in l.transition(g, u) {
                if let Some(row) = balance_row(g2) {
                    a[(row, j)] -= p;
                }
            }
        }
    }
    let sol = solve_lp(&LinearProgram::new(c, a, b)?)?;
    match sol.status {
        LpStatus::Optimal => Ok(OccupancySolution {
            x: sol.x,
            value: sol.value,
        }),
        LpStatus::Infeasible => Err(Error::LpInfeasible),
        LpStatus::Unbounded => Err(Error::LpUnbounded),
    }
}

/// Normalizes the occupancy measure per state; states with mass below
/// `1e-12` take the fallback action.
pub fn occupancy_to_policy(l: &LiftedMdp, x: &[f64], fallback: DeterministicPolicy) -> OccupancyPolicy {
    let nu = l.num_actions();
    let distributions = (0..l.num_states())
        .map(|g| {
            let row = &x[g * nu..(g + 1) * nu];
            let mass: f64 = row.iter().sum();
            if mass < 1e-12 {
                return Vec::new();
            }
            row.iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(u, &v)| (l.action(u), v / mass))
                .collect()
        })
        .collect();
    OccupancyPolicy {
        distributions,
        fallback,
    }
}

/// Two-stage solve: OnePDSI for `ρ*`; if the policy just left of `ρ*`
/// already samples slowly enough, `h* = ρ*`, otherwise the occupancy LP gives
/// `h* = f_max · Q*`.
pub fn quick_blp(l: &LiftedMdp, f_max: f64, cfg: &ConstrainedConfig) -> Result<ConstrainedReport> {
    check_f_max(f_max)?;
    let s = &cfg.solver;
    let stage1 = one_pdsi(l, s.kappa, s.k_max, s.tol)?;
    let rho = stage1.rho_star;
    let left = solve_at(l, rho - cfg.delta(rho), s)?;
    let target = 1.0 / f_max;
    let (h_star, policy, case): (f64, LiftedPolicy, PolicyCase) = if left.evaluation.f >= target {
        (rho, left.policy.into(), PolicyCase::Unconstrained)
    } else {
        check_reachable(l, f_max)?;
        let occ = solve_occupancy_lp(l, f_max)?;
        let policy = occupancy_to_policy(l, &occ.x, left.policy);
        (f_max * occ.value, policy.into(), PolicyCase::Occupancy)
    };
    let eval = evaluate_policy(l, &policy)?;
    Ok(ConstrainedReport {
        method: Method::QuickBlp,
        h_star,
        lambda_star: h_star,
        theta_star: 0.0,
        binding: case != PolicyCase::Unconstrained,
        policy,
        case,
        achieved_f: eval.f,
        achieved_cost: eval.cost_rate,
        eta_formula: None,
    })
}

/// `ρ*` together with the left-limit epoch length at `ρ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub rho_star: f64,
    pub f_left: f64,
    /// `1 / F^{ρ*-}`: budgets at or above this frequency do not improve the cost.
    pub f_max_threshold: f64,
}

pub fn sampling_threshold(l: &LiftedMdp, cfg: &ConstrainedConfig) -> Result<Threshold> {
    let s = &cfg.solver;
    let rho = one_pdsi(l, s.kappa, s.k_max, s.tol)?.rho_star;
    let left = solve_at(l, rho - cfg.delta(rho), s)?;
    Ok(Threshold {
        rho_star: rho,
        f_left: left.evaluation.f,
        f_max_threshold: 1.0 / left.evaluation.f,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    /// `dh*/df_max`.
    pub derivative: f64,
    /// Maximizer of `λ + f_max U(λ)`.
    pub lambda_star: f64,
    /// `λ* + f_max U(λ*)`, an independent value of `h*`.
    pub h_star: f64,
}

/// Derivative of `h*` in the frequency budget via the envelope
/// `h*(f) = max_λ {λ + f U(λ)}`, maximized by golden-section search.
pub fn sensitivity_derivative(l: &LiftedMdp, f_max: f64, cfg: &ConstrainedConfig) -> Result<Sensitivity> {
    check_f_max(f_max)?;
    let th = sampling_threshold(l, cfg)?;
    if f_max >= th.f_max_threshold {
        return Ok(Sensitivity {
            derivative: 0.0,
            lambda_star: th.rho_star,
            h_star: th.rho_star,
        });
    }
    check_reachable(l, f_max)?;
    let s = &cfg.solver;
    let target = 1.0 / f_max;
    let (_, high) = cost_bounds(l.primal())?;
    let mut lo = th.rho_star;
    let mut hi = high.max(lo + 1.0);
    let mut step = (hi - lo).max(1.0);
    for _ in 0..60 {
        if solve_at(l, hi, s)?.evaluation.f >= target {
            break;
        }
        hi += step;
        step *= 2.0;
    }
    let objective = |lam: f64| -> Result<(f64, f64)> {
        let u = solve_at(l, lam, s)?.u;
        Ok((lam + f_max * u, u))
    };
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut f1 = objective(x1)?.0;
    let mut f2 = objective(x2)?.0;
    while hi - lo > 1e-10 * (1.0 + hi.abs()) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = objective(x2)?.0;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = objective(x1)?.0;
        }
    }
    let lambda_star = 0.5 * (lo + hi);
    let (h_star, u) = objective(lambda_star)?;
    Ok(Sensitivity {
        derivative: u,
        lambda_star,
        h_star,
    })
}
