#![allow(dead_code)]

use armdp::{build_lifted, make_delay, DelayDistribution, DelayKind, LiftedMdp, PrimalMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn benchmark_primal() -> PrimalMdp {
    PrimalMdp::benchmark_two_state()
}

pub fn deterministic(y: u32) -> DelayDistribution {
    DelayDistribution::deterministic(y).unwrap()
}

pub fn binary(p: f64, y_max: u32) -> DelayDistribution {
    make_delay(&DelayKind::Binary { p, y_max }).unwrap()
}

pub fn lifted(d: &DelayDistribution, z_max: u32) -> LiftedMdp {
    build_lifted(&benchmark_primal(), d, z_max).unwrap()
}

/// Random primal with strictly positive transitions and a random delay of
/// support size at most two, so every instance passes the one-step unichain check.
pub fn random_instance(seed: u64) -> (PrimalMdp, DelayDistribution, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(2..=3);
    let na = 2;
    let mut transition = Vec::new();
    for _ in 0..na {
        let mut rows = Vec::new();
        for _ in 0..ns {
            let raw: Vec<f64> = (0..ns).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            rows.push(raw.iter().map(|v| v / total).collect());
        }
        transition.push(rows);
    }
    let cost = (0..ns)
        .map(|_| (0..na).map(|_| rng.gen_range(0.0..50.0)).collect())
        .collect();
    let m = PrimalMdp::new(transition, cost).unwrap();
    let y1 = rng.gen_range(1..=3);
    let d = if rng.gen_bool(0.5) {
        DelayDistribution::deterministic(y1).unwrap()
    } else {
        let y2 = y1 + rng.gen_range(1..=4);
        let p = rng.gen_range(0.1..0.9);
        make_delay(&DelayKind::Explicit { support: vec![y1, y2], probs: vec![p, 1.0 - p] }).unwrap()
    };
    (m, d, rng.gen_range(2..=5))
}

/// Stationary vector by plain power iteration on a row-stochastic matrix given as rows.
pub fn power_iteration(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += x[i] * p[i][j];
            }
        }
        // Lazy step so periodic chains still converge.
        let next: Vec<f64> = next.iter().zip(&x).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        let diff: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if diff < 1e-15 {
            break;
        }
    }
    x
}
