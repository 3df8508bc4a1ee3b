//! Fixtures shared by the solver benchmarks.

use armdp::{build_lifted, make_delay, DelayKind, LiftedMdp, PrimalMdp};

/// Two-state benchmark with binary delay `(p, y_max)` and the given wait bound.
pub fn benchmark_instance(p: f64, y_max: u32, z_max: u32) -> LiftedMdp {
    let m = PrimalMdp::benchmark_two_state();
    let d = make_delay(&DelayKind::Binary { p, y_max }).expect("valid delay");
    build_lifted(&m, &d, z_max).expect("lifted MDP fits in memory")
}
