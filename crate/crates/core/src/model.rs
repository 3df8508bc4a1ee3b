//! Primal controlled Markov chain, delay channel, and basic stationary analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Finite controlled Markov chain: one row-stochastic matrix per action and a
/// per-slot cost table indexed `(state, action)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimalMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<Matrix>,
    cost: Matrix,
}

impl PrimalMdp {
    /// `transition[a][s][s']` and `cost[s][a]`.
    pub fn new(transition: Vec<Vec<Vec<f64>>>, cost: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = transition.len();
        if num_actions == 0 {
            return Err(Error::InvalidParameter("at least one action is required".into()));
        }
        let num_states = transition[0].len();
        if num_states == 0 {
            return Err(Error::InvalidParameter("at least one state is required".into()));
        }
        let mut mats = Vec::with_capacity(num_actions);
        for (a, rows) in transition.iter().enumerate() {
            let m = Matrix::from_rows(rows).ok_or_else(|| {
                Error::DimensionMismatch(format!("transition matrix of action {a} is ragged"))
            })?;
            if m.rows() != num_states || m.cols() != num_states {
                return Err(Error::DimensionMismatch(format!(
                    "transition matrix of action {a} is {}x{}, expected {num_states}x{num_states}",
                    m.rows(),
                    m.cols()
                )));
            }
            mats.push(m);
        }
        let cost = Matrix::from_rows(&cost)
            .ok_or_else(|| Error::DimensionMismatch("cost table is ragged".into()))?;
        if cost.rows() != num_states || cost.cols() != num_actions {
            return Err(Error::DimensionMismatch(format!(
                "cost table is {}x{}, expected {num_states}x{num_actions}",
                cost.rows(),
                cost.cols()
            )));
        }
        let m = Self {
            num_states,
            num_actions,
            transition: mats,
            cost,
        };
        validate_primal(&m)?;
        Ok(m)
    }

    /// Two-state, two-action benchmark used throughout the experiments
    /// (preset name `appendix-h`).
    pub fn benchmark_two_state() -> Self {
        Self::new(
            vec![
                vec![vec![0.9, 0.1], vec![0.1, 0.9]],
                vec![vec![0.6, 0.4], vec![0.01, 0.99]],
            ],
            vec![vec![40.0, 60.0], vec![0.0, 20.0]],
        )
        .expect("benchmark instance is valid")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn transition(&self, action: usize) -> &Matrix {
        &self.transition[action]
    }

    pub fn cost(&self, state: usize, action: usize) -> f64 {
        self.cost[(state, action)]
    }

    /// Column `C(., action)`.
    pub fn cost_column(&self, action: usize) -> Vec<f64> {
        (0..self.num_states).map(|s| self.cost[(s, action)]).collect()
    }

    pub fn min_cost(&self) -> f64 {
        (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.cost(s, a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_cost(&self) -> f64 {
        (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.cost(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Checks every [`PrimalMdp`] invariant.
pub fn validate_primal(m: &PrimalMdp) -> Result<()> {
    for (a, p) in m.transition.iter().enumerate() {
        check_stochastic(p, a)?;
    }
    for s in 0..m.num_states {
        for a in 0..m.num_actions {
            if !m.cost(s, a).is_finite() {
                return Err(Error::NonFiniteCost { state: s, action: a });
            }
        }
    }
    Ok(())
}

fn check_stochastic(p: &Matrix, action: usize) -> Result<()> {
    for row in 0..p.rows() {
        for (col, &value) in p.row(row).iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidProbability {
                    action,
                    row,
                    col,
                    value,
                });
            }
        }
        let sum: f64 = p.row(row).iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::RowSum { action, row, sum });
        }
    }
    Ok(())
}

/// How a delay distribution is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKind {
    /// `Pr(Y = 1) = p`, `Pr(Y = y_max) = 1 - p`.
    Binary { p: f64, y_max: u32 },
    /// `Pr(Y = y) ∝ q (1 - q)^(y - 1)` on `1..=y_max`.
    TruncatedGeometric { q: f64, y_max: u32 },
    Explicit { support: Vec<u32>, probs: Vec<f64> },
}

/// Finite-support distribution of the per-packet delivery delay, in slots.
///
/// Atoms are stored explicitly as (value, probability) pairs sorted by value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayDistribution {
    support: Vec<u32>,
    probs: Vec<f64>,
}

impl DelayDistribution {
    pub fn deterministic(y: u32) -> Result<Self> {
        make_delay(&DelayKind::Explicit {
            support: vec![y],
            probs: vec![1.0],
        })
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn max_delay(&self) -> u32 {
        *self.support.last().expect("support is non-empty")
    }

    pub fn min_delay(&self) -> u32 {
        self.support[0]
    }

    /// Position of `y` in the support.
    pub fn index_of(&self, y: u32) -> Option<usize> {
        self.support.binary_search(&y).ok()
    }

    pub fn mean(&self) -> f64 {
        delay_moments(self).0
    }

    /// Expectation of `g(Y)`.
    pub fn expect(&self, g: impl Fn(u32) -> f64) -> f64 {
        self.support.iter().zip(&self.probs).map(|(&y, &p)| p * g(y)).sum()
    }
}

/// Constructs a validated [`DelayDistribution`].
pub fn make_delay(kind: &DelayKind) -> Result<DelayDistribution> {
    match *kind {
        DelayKind::Binary { p, y_max } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDelay(format!("binary p = {p} outside [0, 1]")));
            }
            if y_max < 1 {
                return Err(Error::InvalidDelay("binary y_max must be >= 1".into()));
            }
            if y_max == 1 || p == 1.0 {
                finish(vec![1], vec![1.0])
            } else if p == 0.0 {
                finish(vec![y_max], vec![1.0])
            } else {
                finish(vec![1, y_max], vec![p, 1.0 - p])
            }
        }
        DelayKind::TruncatedGeometric { q, y_max } => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidDelay(format!("geometric q = {q} outside (0, 1)")));
            }
            if y_max < 1 {
                return Err(Error::InvalidDelay("geometric y_max must be >= 1".into()));
            }
            let norm = 1.0 - (1.0 - q).powi(y_max as i32);
            let mut probs: Vec<f64> = (1..=y_max)
                .map(|y| q * (1.0 - q).powi(y as i32 - 1) / norm)
                .collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            finish((1..=y_max).collect(), probs)
        }
        DelayKind::Explicit {
            ref support,
            ref probs,
        } => {
            if support.len() != probs.len() || support.is_empty() {
                return Err(Error::InvalidDelay(
                    "support and probabilities must be non-empty and equally long".into(),
                ));
            }
            if support.iter().any(|&y| y < 1) {
                return Err(Error::InvalidDelay("delay values must be >= 1".into()));
            }
            if support.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidDelay(
                    "support must be strictly ascending".into(),
                ));
            }
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidDelay("probabilities must lie in [0, 1]".into()));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDelay(format!("probabilities sum to {sum}")));
            }
            let (s, p): (Vec<u32>, Vec<f64>) = support
                .iter()
                .zip(probs)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&y, &p)| (y, p))
                .unzip();
            finish(s, p)
        }
    }
}

fn finish(support: Vec<u32>, probs: Vec<f64>) -> Result<DelayDistribution> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDelay(format!("probabilities sum to {sum}")));
    }
    Ok(DelayDistribution { support, probs })
}

/// Returns `(E[Y], E[Y^2])`.
pub fn delay_moments(d: &DelayDistribution) -> (f64, f64) {
    let mean = d.expect(|y| y as f64);
    let second = d.expect(|y| (y as f64) * (y as f64));
    (mean, second)
}

/// Unique stationary distribution of a row-stochastic matrix.
///
/// One balance equation is replaced by the normalization constraint and the
/// system is solved directly. Multichain or otherwise singular inputs are
/// reported as [`Error::NoUniqueStationary`].
pub fn stationary_distribution(p: &Matrix) -> Result<Vec<f64>> {
    let n = p.rows();
    if n == 0 || p.cols() != n {
        return Err(Error::DimensionMismatch("stationary_distribution needs a square matrix".into()));
    }
    for row in 0..n {
        let sum: f64 = p.row(row).iter().sum();
        if (sum - 1.0).abs() > 1e-9 || p.row(row).iter().any(|&v| !(-1e-15..=1.0 + 1e-15).contains(&v)) {
            return Err(Error::RowSum { action: 0, row, sum });
        }
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n {
            a[(i, j)] = p[(j, i)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let Some(mut pi) = linalg::solve(&a, &b, 1e-11) else {
        return Err(Error::NoUniqueStationary { residual: f64::INFINITY });
    };
    if pi.iter().any(|&v| v < -1e-9) {
        return Err(Error::NoUniqueStationary {
            residual: pi.iter().fold(0.0, |m: f64, &v| m.max(-v)),
        });
    }
    for v in pi.iter_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let residual = stationary_residual(p, &pi);
    if residual >= STATIONARY_RESIDUAL_TOL {
        return Err(Error::NoUniqueStationary { residual });
    }
    Ok(pi)
}

/// `max |pi P - pi|`.
pub fn stationary_residual(p: &Matrix, pi: &[f64]) -> f64 {
    linalg::max_abs_diff(&p.left_mul(pi), pi)
}

/// Pure per-state decision rule `state -> action` for the delay-free chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule(pub Vec<usize>);

impl DecisionRule {
    pub fn new(actions: Vec<usize>, m: &PrimalMdp) -> Result<Self> {
        if actions.len() != m.num_states() {
            return Err(Error::DimensionMismatch(format!(
                "decision rule has {} entries for {} states",
                actions.len(),
                m.num_states()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= m.num_actions()) {
            return Err(Error::InvalidParameter(format!("action {a} out of range")));
        }
        Ok(Self(actions))
    }

    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_delay() {
        let d = make_delay(&DelayKind::Binary { p: 0.3, y_max: 11 }).unwrap();
        assert_eq!(d.support(), &[1, 11]);
        assert_eq!(d.probs(), &[0.3, 0.7]);
        assert!((d.mean() - 8.0).abs() < 1e-12);

        let d = make_delay(&DelayKind::Binary { p: 0.0, y_max: 10 }).unwrap();
        assert_eq!(d.support(), &[10]);
        assert_eq!(delay_moments(&d), (10.0, 100.0));

        let d = make_delay(&DelayKind::Binary { p: 0.5, y_max: 3 }).unwrap();
        assert_eq!(delay_moments(&d), (2.0, 5.0));
    }

    #[test]
    fn geometric_delay() {
        let d = make_delay(&DelayKind::TruncatedGeometric { q: 0.3, y_max: 1 }).unwrap();
        assert_eq!(d.support(), &[1]);
        assert_eq!(d.probs(), &[1.0]);

        let d = make_delay(&DelayKind::TruncatedGeometric { q: 0.3, y_max: 8 }).unwrap();
        let norm = 1.0 - 0.7f64.powi(8);
        assert!((d.probs()[0] - 0.3 / norm).abs() < 1e-15);
        assert!((d.probs()[3] - 0.3 * 0.7f64.powi(3) / norm).abs() < 1e-15);
    }

    #[test]
    fn delay_errors() {
        assert!(make_delay(&DelayKind::Binary { p: 1.5, y_max: 3 }).is_err());
        assert!(make_delay(&DelayKind::Binary { p: 0.5, y_max: 0 }).is_err());
        assert!(make_delay(&DelayKind::TruncatedGeometric { q: 1.0, y_max: 3 }).is_err());
        assert!(make_delay(&DelayKind::Explicit {
            support: vec![1, 2],
            probs: vec![0.5, 0.6]
        })
        .is_err());
        assert!(make_delay(&DelayKind::Explicit {
            support: vec![2, 1],
            probs: vec![0.5, 0.5]
        })
        .is_err());
        assert!(make_delay(&DelayKind::Explicit {
            support: vec![0],
            probs: vec![1.0]
        })
        .is_err());
    }

    #[test]
    fn stationary_examples() {
        let p = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14);

        // 0.4 pi0 = 0.01 pi1
        let p = Matrix::from_rows(&[vec![0.6, 0.4], vec![0.01, 0.99]]).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert!((pi[0] - 1.0 / 41.0).abs() < 1e-14);
        assert!((pi[1] - 40.0 / 41.0).abs() < 1e-14);

        let p = Matrix::identity(1);
        assert_eq!(stationary_distribution(&p).unwrap(), vec![1.0]);
    }

    #[test]
    fn stationary_rejects_multichain() {
        let p = Matrix::identity(2);
        assert!(matches!(
            stationary_distribution(&p),
            Err(Error::NoUniqueStationary { .. })
        ));
        let p = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(stationary_distribution(&p), Err(Error::RowSum { .. })));
    }

    #[test]
    fn validate_examples() {
        let m = PrimalMdp::benchmark_two_state();
        assert!(validate_primal(&m).is_ok());

        let err = PrimalMdp::new(vec![vec![vec![0.5, 0.4], vec![0.5, 0.5]]], vec![vec![1.0], vec![1.0]]);
        assert!(matches!(err, Err(Error::RowSum { action: 0, row: 0, .. })));

        let err = PrimalMdp::new(vec![vec![vec![1.2, -0.2], vec![0.5, 0.5]]], vec![vec![1.0], vec![1.0]]);
        assert!(matches!(err, Err(Error::InvalidProbability { .. })));

        let err = PrimalMdp::new(vec![vec![vec![1.0]]], vec![vec![f64::NAN]]);
        assert!(matches!(err, Err(Error::NonFiniteCost { state: 0, action: 0 })));
    }

    #[test]
    fn decision_rule_range() {
        let m = PrimalMdp::benchmark_two_state();
        assert!(DecisionRule::new(vec![0, 1], &m).is_ok());
        assert!(DecisionRule::new(vec![0, 2], &m).is_err());
        assert!(DecisionRule::new(vec![0], &m).is_err());
    }
}
