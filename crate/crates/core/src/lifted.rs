//! The lifted decision process over delivery epochs.
//!
//! At every delivery the controller sees `γ = (s, y, a_prev)`: the sampled
//! source state, the delay that packet suffered, and the action that was held
//! while it was in flight. It answers with an epoch action `(z, a)`, waits `z`
//! slots, samples, and holds `a` until the next delivery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{stationary_distribution, DelayDistribution, PrimalMdp};

/// Default cap on the number of `f64` entries held by the matrix-power table.
pub const DEFAULT_POWER_CAP: usize = 1 << 26;

/// Default budget for [`check_unichain_sufficient`] enumeration.
pub const DEFAULT_UNICHAIN_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LiftedState {
    pub s: usize,
    pub y: u32,
    pub a_prev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpochAction {
    pub z: u32,
    pub a: usize,
}

/// Lifted MDP with precomputed epoch kernel, epoch cost `q` and epoch length `f`.
///
/// States are enumerated as `((s * |Y|) + y_index) * |A| + a_prev` and epoch
/// actions as `z * |A| + a`, so iterating actions in index order visits
/// smaller waits first and, within a wait, smaller primal actions first.
#[derive(Debug, Clone)]
pub struct LiftedMdp {
    primal: PrimalMdp,
    delay: DelayDistribution,
    z_max: u32,
    states: Vec<LiftedState>,
    actions: Vec<EpochAction>,
    /// `next[(γ * |U| + u) * |S| + s']` = `[P_{a_prev}^y P_a^z]_{s,s'}`.
    next: Vec<f64>,
    q: Vec<f64>,
    f: Vec<f64>,
    mean_delay: f64,
    reference: usize,
}

/// Builds the lifted MDP with the default matrix-power memory cap.
pub fn build_lifted(m: &PrimalMdp, d: &DelayDistribution, z_max: u32) -> Result<LiftedMdp> {
    build_lifted_with_cap(m, d, z_max, DEFAULT_POWER_CAP)
}

pub fn build_lifted_with_cap(
    m: &PrimalMdp,
    d: &DelayDistribution,
    z_max: u32,
    cap: usize,
) -> Result<LiftedMdp> {
    let ns = m.num_states();
    let na = m.num_actions();
    let ny = d.len();
    let y_max = d.max_delay();
    let horizon = z_max as usize + y_max as usize;
    let required = na
        .saturating_mul(horizon + 1)
        .saturating_mul(ns)
        .saturating_mul(ns);
    if required > cap {
        return Err(Error::MemoryCap { required, cap });
    }
    let powers = PowerTable::new(m, z_max.max(y_max) as usize);

    let mut states = Vec::with_capacity(ns * ny * na);
    for s in 0..ns {
        for &y in d.support() {
            for a_prev in 0..na {
                states.push(LiftedState { s, y, a_prev });
            }
        }
    }
    let mut actions = Vec::with_capacity((z_max as usize + 1) * na);
    for z in 0..=z_max {
        for a in 0..na {
            actions.push(EpochAction { z, a });
        }
    }

    // acc[a][n] = sum_{t < n} P_a^t C(., a), built by acc(n) = C + P acc(n - 1).
    let acc: Vec<Vec<Vec<f64>>> = (0..na)
        .map(|a| {
            let c = m.cost_column(a);
            let p = m.transition(a);
            let mut out = vec![vec![0.0; ns]];
            for n in 1..=horizon {
                let prev = p.mul_vec(&out[n - 1]);
                out.push(prev.iter().zip(&c).map(|(x, ci)| x + ci).collect());
            }
            out
        })
        .collect();

    let mean_delay = d.mean();
    let nu = actions.len();
    let mut next = vec![0.0; states.len() * nu * ns];
    let mut q = vec![0.0; states.len() * nu];
    for (g, st) in states.iter().enumerate() {
        let base = powers.get(st.a_prev, st.y as usize).row(st.s).to_vec();
        for (u, act) in actions.iter().enumerate() {
            let row = powers.get(act.a, act.z as usize).left_mul(&base);
            let off = (g * nu + u) * ns;
            next[off..off + ns].copy_from_slice(&row);
            let mut cost = 0.0;
            for (&delta, &pd) in d.support().iter().zip(d.probs()) {
                let ca = &acc[act.a][act.z as usize + delta as usize];
                cost += pd * dot(&base, ca);
            }
            q[g * nu + u] = cost;
        }
    }
    let f = (0..=z_max).map(|z| mean_delay + z as f64).collect();

    Ok(LiftedMdp {
        primal: m.clone(),
        delay: d.clone(),
        z_max,
        states,
        actions,
        next,
        q,
        f,
        mean_delay,
        reference: 0,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Memoized `P_a^n` for `n = 0..=max_exp`.
struct PowerTable {
    table: Vec<Vec<Matrix>>,
}

impl PowerTable {
    fn new(m: &PrimalMdp, max_exp: usize) -> Self {
        let ns = m.num_states();
        let table = (0..m.num_actions())
            .map(|a| {
                let p = m.transition(a);
                let mut pows = vec![Matrix::identity(ns)];
                for n in 1..=max_exp {
                    let next = pows[n - 1].matmul(p);
                    pows.push(next);
                }
                pows
            })
            .collect();
        Self { table }
    }

    fn get(&self, a: usize, n: usize) -> &Matrix {
        &self.table[a][n]
    }
}

impl LiftedMdp {
    pub fn primal(&self) -> &PrimalMdp {
        &self.primal
    }

    pub fn delay(&self) -> &DelayDistribution {
        &self.delay
    }

    pub fn z_max(&self) -> u32 {
        self.z_max
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[LiftedState] {
        &self.states
    }

    pub fn actions(&self) -> &[EpochAction] {
        &self.actions
    }

    pub fn state(&self, g: usize) -> LiftedState {
        self.states[g]
    }

    pub fn action(&self, u: usize) -> EpochAction {
        self.actions[u]
    }

    pub fn mean_delay(&self) -> f64 {
        self.mean_delay
    }

    /// Index of the reference state `γ^r`.
    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Index of lifted state `(s, y, a_prev)`, or `None` if `y` is not in the delay support.
    pub fn state_index(&self, s: usize, y: u32, a_prev: usize) -> Option<usize> {
        let ny = self.delay.len();
        let na = self.primal.num_actions();
        if s >= self.primal.num_states() || a_prev >= na {
            return None;
        }
        let yi = self.delay.index_of(y)?;
        Some((s * ny + yi) * na + a_prev)
    }

    pub fn action_index(&self, z: u32, a: usize) -> Option<usize> {
        let na = self.primal.num_actions();
        (z <= self.z_max && a < na).then(|| z as usize * na + a)
    }

    /// Expected cumulative cost over the epoch started in `g` with action `u`.
    pub fn q(&self, g: usize, u: usize) -> f64 {
        self.q[g * self.actions.len() + u]
    }

    /// Expected epoch length `E[Y] + z` for action `u`.
    pub fn f(&self, u: usize) -> f64 {
        self.f[self.actions[u].z as usize]
    }

    /// Epoch length for wait `z`.
    pub fn f_of_wait(&self, z: u32) -> f64 {
        self.f[z as usize]
    }

    pub fn max_f(&self) -> f64 {
        self.f[self.z_max as usize]
    }

    /// Distribution of the primal state sampled at the end of the wait.
    pub fn sampled_state_distribution(&self, g: usize, u: usize) -> &[f64] {
        let ns = self.primal.num_states();
        let off = (g * self.actions.len() + u) * ns;
        &self.next[off..off + ns]
    }

    /// Sparse kernel row `p(. | γ, u)` as `(next state index, probability)` pairs.
    pub fn transition(&self, g: usize, u: usize) -> Vec<(usize, f64)> {
        let a = self.actions[u].a;
        let row = self.sampled_state_distribution(g, u);
        let mut out = Vec::with_capacity(row.len() * self.delay.len());
        for (s2, &ps) in row.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for (&delta, &pd) in self.delay.support().iter().zip(self.delay.probs()) {
                let idx = self.state_index(s2, delta, a).expect("support value");
                out.push((idx, ps * pd));
            }
        }
        out
    }

    /// Dense kernel row `p(. | γ, u)`.
    pub fn transition_dense(&self, g: usize, u: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.states.len()];
        for (j, p) in self.transition(g, u) {
            out[j] += p;
        }
        out
    }

    /// Delay-averaged values `V̄(s', a) = Σ_δ Pr(δ) V(s', δ, a)`, laid out `s' * |A| + a`.
    pub fn delay_averaged(&self, v: &[f64]) -> Vec<f64> {
        let ns = self.primal.num_states();
        let na = self.primal.num_actions();
        let ny = self.delay.len();
        let probs = self.delay.probs();
        let mut out = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                out[s * na + a] = (0..ny).map(|yi| probs[yi] * v[(s * ny + yi) * na + a]).sum();
            }
        }
        out
    }

    /// `E[V(γ') | γ, u]` given the output of [`LiftedMdp::delay_averaged`].
    pub fn expected_next(&self, g: usize, u: usize, vbar: &[f64]) -> f64 {
        let na = self.primal.num_actions();
        let a = self.actions[u].a;
        self.sampled_state_distribution(g, u)
            .iter()
            .enumerate()
            .map(|(s2, &p)| p * vbar[s2 * na + a])
            .sum()
    }
}

/// Outcome of [`check_unichain_sufficient`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnichainCheck {
    pub holds: bool,
    pub witness_state: Option<usize>,
    /// Largest column minimum over all enumerated products (a lower bound on
    /// entry probability into the witness when `holds`).
    pub margin: f64,
}

/// Exhaustively checks the entrance condition: some primal state `s*` is
/// entered with probability at least `eps` after every admissible length-`m`
/// sequence of (delay, wait, action), from every initial `(s, a)`.
pub fn check_unichain_sufficient(l: &LiftedMdp, m: usize, eps: f64) -> Result<UnichainCheck> {
    check_unichain_with_budget(l, m, eps, DEFAULT_UNICHAIN_BUDGET)
}

pub fn check_unichain_with_budget(
    l: &LiftedMdp,
    m: usize,
    eps: f64,
    budget: u128,
) -> Result<UnichainCheck> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    let p = l.primal();
    let ns = p.num_states();
    let na = p.num_actions();
    let branch = (na * (l.z_max as usize + 1) * l.delay.len()) as u128;
    let mut required: u128 = na as u128;
    for _ in 0..m {
        required = required.saturating_mul(branch);
    }
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let y_max = l.delay.max_delay() as usize;
    let powers = PowerTable::new(p, (l.z_max as usize).max(y_max));

    // Running minimum over every product and row, per candidate column.
    let mut col_min = vec![f64::INFINITY; ns];
    let mut search = Search {
        powers: &powers,
        delays: l.delay.support(),
        z_max: l.z_max,
        na,
        eps,
        col_min: &mut col_min,
    };
    'outer: for a in 0..na {
        if !search.descend(Matrix::identity(ns), a, m) {
            break 'outer;
        }
    }
    let (witness, margin) = col_min
        .iter()
        .enumerate()
        .fold((None, f64::NEG_INFINITY), |(w, best), (j, &v)| {
            if v > best {
                (Some(j), v)
            } else {
                (w, best)
            }
        });
    let holds = margin >= eps && margin > 0.0;
    Ok(UnichainCheck {
        holds,
        witness_state: if holds { witness } else { None },
        margin,
    })
}

struct Search<'a> {
    powers: &'a PowerTable,
    delays: &'a [u32],
    z_max: u32,
    na: usize,
    eps: f64,
    col_min: &'a mut [f64],
}

impl Search<'_> {
    /// Returns false once no column can still reach `eps`.
    fn descend(&mut self, prod: Matrix, held: usize, depth: usize) -> bool {
        for &delta in self.delays {
            let after_delay = prod.matmul(self.powers.get(held, delta as usize));
            for a in 0..self.na {
                for z in 0..=self.z_max {
                    let step = after_delay.matmul(self.powers.get(a, z as usize));
                    if depth == 1 {
                        for j in 0..step.cols() {
                            let col = (0..step.rows()).map(|i| step[(i, j)]).fold(f64::INFINITY, f64::min);
                            self.col_min[j] = self.col_min[j].min(col);
                        }
                        if self.col_min.iter().all(|&v| v < self.eps || v <= 0.0) {
                            return false;
                        }
                    } else if !self.descend(step, a, depth - 1) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Bracket `[min C, min_a π_a · C(., a)]` on the optimal cost rate.
pub fn cost_bounds(m: &PrimalMdp) -> Result<(f64, f64)> {
    let low = m.min_cost();
    let mut high = f64::INFINITY;
    for a in 0..m.num_actions() {
        let pi = stationary_distribution(m.transition(a))?;
        let c: f64 = pi.iter().zip(m.cost_column(a)).map(|(p, c)| p * c).sum();
        high = high.min(c);
    }
    Ok((low, high.max(low)))
}
