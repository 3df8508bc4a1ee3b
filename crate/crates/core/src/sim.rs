//! Slot-level Monte Carlo simulation of sampling, delivery and held actions.
//!
//! Three independent random streams are derived from the master seed: source
//! transitions, channel delays, and policy randomization. Two runs with the
//! same seed are bit-identical, and two policies compared under one seed see
//! the same source and channel randomness wherever their paths agree.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{sampling_rule_wait, SamplingRule};
use crate::error::{Error, Result};
use crate::lifted::EpochAction;
use crate::model::{DecisionRule, DelayDistribution, PrimalMdp};
use crate::policy::LiftedPolicy;

const BATCHES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of simulated slots.
    pub horizon: u64,
    /// Slots discarded before statistics are collected.
    pub burn_in: u64,
    pub seed: u64,
    pub initial_state: usize,
    /// Age before the first delivery; defaults to the smallest delay value.
    pub initial_age: Option<u32>,
    /// Keep the full per-slot trajectory in the returned stats.
    pub record_trajectory: bool,
    /// Assert the age recursion and epoch identity at every step.
    pub check_invariants: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            burn_in: 10_000,
            seed: 0,
            initial_state: 0,
            initial_age: None,
            record_trajectory: false,
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotEvent {
    None,
    Delivery,
    Sample,
    /// Delivery and a new sample in the same slot.
    DeliveryAndSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub x: usize,
    pub a: usize,
    pub aoi: u64,
    pub event: SlotEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    /// Regenerative ratio estimate over complete post-burn-in epochs.
    pub avg_cost_per_slot: f64,
    /// Batch-means standard error of `avg_cost_per_slot`.
    pub cost_se: f64,
    pub avg_epoch_length: f64,
    pub epoch_length_se: f64,
    pub avg_sampling_interval: f64,
    pub aoi_mean: f64,
    pub epochs_completed: u64,
    /// Empirical distribution of the lifted state `(s, y, a_prev)` at epoch
    /// starts, in lifted-state order.
    pub epoch_state_freq: Vec<f64>,
    pub max_queue_len: usize,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// What decides the epoch action at each delivery.
#[derive(Debug, Clone, PartialEq)]
pub enum SimPolicy {
    Lifted(LiftedPolicy),
    Baseline { rule: SamplingRule, decision: DecisionRule },
}

struct Streams {
    source: ChaCha8Rng,
    delay: ChaCha8Rng,
    policy: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            source: stream(0),
            delay: stream(1),
            policy: stream(2),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum short of 1; take the last positive atom.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn draw_delay(rng: &mut ChaCha8Rng, d: &DelayDistribution) -> u32 {
    d.support()[draw(rng, d.probs())]
}

/// Statistics shared by both simulators.
struct Recorder {
    burn_in: u64,
    states: usize,
    delays: usize,
    actions: usize,
    slot_count: u64,
    aoi_sum: f64,
    epoch_costs: Vec<f64>,
    epoch_lens: Vec<u64>,
    epoch_states: Vec<u64>,
    open_epoch: Option<(u64, f64, u64)>,
    sample_intervals: (f64, u64),
    last_sample: Option<u64>,
    trajectory: Option<Vec<TrajectoryRow>>,
}

impl Recorder {
    fn new(cfg: &SimConfig, m: &PrimalMdp, d: &DelayDistribution) -> Self {
        Self {
            burn_in: cfg.burn_in,
            states: m.num_states(),
            delays: d.len(),
            actions: m.num_actions(),
            slot_count: 0,
            aoi_sum: 0.0,
            epoch_costs: Vec::new(),
            epoch_lens: Vec::new(),
            epoch_states: vec![0; m.num_states() * d.len() * m.num_actions()],
            open_epoch: None,
            sample_intervals: (0.0, 0),
            last_sample: None,
            trajectory: cfg.record_trajectory.then(Vec::new),
        }
    }

    fn lifted_index(&self, s: usize, yi: usize, a_prev: usize) -> usize {
        debug_assert!(s < self.states && yi < self.delays && a_prev < self.actions);
        (s * self.delays + yi) * self.actions + a_prev
    }

    fn delivery(&mut self, t: u64, gamma: usize) {
        if let Some((start, cost, _)) = self.open_epoch.take() {
            self.epoch_costs.push(cost);
            self.epoch_lens.push(t - start);
        }
        if t >= self.burn_in {
            self.epoch_states[gamma] += 1;
            self.open_epoch = Some((t, 0.0, 0));
        }
    }

    fn sample(&mut self, t: u64) {
        if let Some(prev) = self.last_sample {
            if prev >= self.burn_in {
                self.sample_intervals.0 += (t - prev) as f64;
                self.sample_intervals.1 += 1;
            }
        }
        self.last_sample = Some(t);
    }

    fn slot(&mut self, t: u64, cost: f64, aoi: u64) {
        if t >= self.burn_in {
            self.slot_count += 1;
            self.aoi_sum += aoi as f64;
            if let Some(open) = self.open_epoch.as_mut() {
                open.1 += cost;
                open.2 += 1;
            }
        }
    }

    fn trace(&mut self, row: TrajectoryRow) {
        if let Some(tr) = self.trajectory.as_mut() {
            tr.push(row);
        }
    }

    fn finish(self, max_queue_len: usize) -> SimStats {
        let n = self.epoch_costs.len();
        let total_cost: f64 = self.epoch_costs.iter().sum();
        let total_len: u64 = self.epoch_lens.iter().sum();
        let avg_cost = if total_len > 0 { total_cost / total_len as f64 } else { f64::NAN };
        let avg_len = if n > 0 { total_len as f64 / n as f64 } else { f64::NAN };
        let (cost_se, len_se) = batch_errors(&self.epoch_costs, &self.epoch_lens);
        let visits: u64 = self.epoch_states.iter().sum();
        let freq = self
            .epoch_states
            .iter()
            .map(|&c| if visits > 0 { c as f64 / visits as f64 } else { 0.0 })
            .collect();
        SimStats {
            avg_cost_per_slot: avg_cost,
            cost_se,
            avg_epoch_length: avg_len,
            epoch_length_se: len_se,
            avg_sampling_interval: if self.sample_intervals.1 > 0 {
                self.sample_intervals.0 / self.sample_intervals.1 as f64
            } else {
                f64::NAN
            },
            aoi_mean: if self.slot_count > 0 { self.aoi_sum / self.slot_count as f64 } else { f64::NAN },
            epochs_completed: n as u64,
            epoch_state_freq: freq,
            max_queue_len,
            trajectory: self.trajectory,
        }
    }
}

/// Standard errors of the cost ratio and mean epoch length from
/// non-overlapping batches of consecutive epochs.
fn batch_errors(costs: &[f64], lens: &[u64]) -> (f64, f64) {
    let n = costs.len();
    if n < 2 * BATCHES {
        return (f64::NAN, f64::NAN);
    }
    let per = n / BATCHES;
    let mut ratios = Vec::with_capacity(BATCHES);
    let mut means = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES {
        let c: f64 = costs[b * per..(b + 1) * per].iter().sum();
        let l: u64 = lens[b * per..(b + 1) * per].iter().sum();
        ratios.push(c / l as f64);
        means.push(l as f64 / per as f64);
    }
    (std_error(&ratios), std_error(&means))
}

fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

fn check_config(m: &PrimalMdp, cfg: &SimConfig) -> Result<()> {
    if cfg.horizon <= cfg.burn_in {
        return Err(Error::InvalidParameter(format!(
            "horizon {} must exceed burn_in {}",
            cfg.horizon, cfg.burn_in
        )));
    }
    if cfg.initial_state >= m.num_states() {
        return Err(Error::InvalidParameter(format!("initial state {} out of range", cfg.initial_state)));
    }
    Ok(())
}

/// In-flight packet: sampled state, its delay, and its delivery slot.
#[derive(Clone, Copy)]
struct Packet {
    state: usize,
    delay: u32,
    generated: u64,
    delivery: u64,
}

/// Simulates the closed loop where every delivery triggers one decision
/// `(wait, action)` and the next sample is taken after the wait.
pub fn simulate_epochs(m: &PrimalMdp, d: &DelayDistribution, policy: &SimPolicy, cfg: &SimConfig) -> Result<SimStats> {
    check_config(m, cfg)?;
    let ny = d.len();
    let na = m.num_actions();
    let n_lifted = m.num_states() * ny * na;
    match policy {
        SimPolicy::Lifted(p) if p.num_states() != n_lifted => {
            return Err(Error::DimensionMismatch(format!(
                "policy covers {} lifted states, expected {n_lifted}",
                p.num_states()
            )))
        }
        SimPolicy::Baseline { rule, decision } => {
            if decision.0.len() != m.num_states() || decision.0.iter().any(|&a| a >= na) {
                return Err(Error::InvalidParameter("decision rule does not match the primal MDP".into()));
            }
            sampling_rule_wait(rule, d.min_delay())?;
        }
        _ => {}
    }
    let mut rng = Streams::new(cfg.seed);
    let mut rec = Recorder::new(cfg, m, d);

    let mut x = cfg.initial_state;
    let mut held = 0usize;
    let mut aoi = cfg.initial_age.unwrap_or(d.min_delay()) as u64;
    // S_0 = 0: the first sample is taken immediately.
    let y0 = draw_delay(&mut rng.delay, d);
    let mut packet = Packet {
        state: x,
        delay: y0,
        generated: 0,
        delivery: y0 as u64,
    };
    rec.sample(0);
    let mut next_sample: Option<u64> = None;
    let mut last_delivery: Option<(u64, u32)> = None;
    let age0 = aoi;
    let mut freshest: Option<u64> = None;

    for t in 0..cfg.horizon {
        let mut delivered = false;
        let mut sampled = t == 0;
        if t == packet.delivery {
            delivered = true;
            if cfg.check_invariants {
                if let Some((prev, z)) = last_delivery {
                    assert_eq!(t - prev, z as u64 + packet.delay as u64, "epoch identity");
                }
            }
            aoi = packet.delay as u64;
            freshest = Some(packet.generated);
            let yi = d.index_of(packet.delay).expect("delay drawn from support");
            let gamma = rec.lifted_index(packet.state, yi, held);
            let act = match policy {
                SimPolicy::Lifted(p) => p.sample(gamma, &mut rng.policy),
                SimPolicy::Baseline { rule, decision } => EpochAction {
                    z: sampling_rule_wait(rule, packet.delay)?,
                    a: decision.action(packet.state),
                },
            };
            rec.delivery(t, gamma);
            held = act.a;
            next_sample = Some(t + act.z as u64);
            last_delivery = Some((t, act.z));
        }
        if next_sample == Some(t) {
            sampled = true;
            let y = draw_delay(&mut rng.delay, d);
            packet = Packet {
                state: x,
                delay: y,
                generated: t,
                delivery: t + y as u64,
            };
            next_sample = None;
            rec.sample(t);
        }
        if cfg.check_invariants {
            let expected = freshest.map_or(age0 + t, |g| t - g);
            assert_eq!(aoi, expected, "age recursion at slot {t}");
        }
        rec.slot(t, m.cost(x, held), aoi);
        rec.trace(TrajectoryRow {
            t,
            x,
            a: held,
            aoi,
            event: event(delivered, sampled),
        });
        x = draw(&mut rng.source, m.transition(held).row(x));
        aoi += 1;
    }
    Ok(rec.finish(0))
}

fn event(delivered: bool, sampled: bool) -> SlotEvent {
    match (delivered, sampled) {
        (true, true) => SlotEvent::DeliveryAndSample,
        (true, false) => SlotEvent::Delivery,
        (false, true) => SlotEvent::Sample,
        (false, false) => SlotEvent::None,
    }
}

/// Simulates periodic sampling every `interval` slots into an unbounded FCFS
/// queue served by one channel whose service time is the packet delay. The
/// decision rule is applied to each delivered (possibly stale) state.
pub fn simulate_uniform_queue(
    m: &PrimalMdp,
    d: &DelayDistribution,
    interval: u32,
    decision: &DecisionRule,
    cfg: &SimConfig,
) -> Result<SimStats> {
    check_config(m, cfg)?;
    if interval < 1 {
        return Err(Error::InvalidParameter("sampling interval must be >= 1".into()));
    }
    if decision.0.len() != m.num_states() || decision.0.iter().any(|&a| a >= m.num_actions()) {
        return Err(Error::InvalidParameter("decision rule does not match the primal MDP".into()));
    }
    let mut rng = Streams::new(cfg.seed);
    let mut rec = Recorder::new(cfg, m, d);
    let mut x = cfg.initial_state;
    let mut held = 0usize;
    let mut aoi = cfg.initial_age.unwrap_or(d.min_delay()) as u64;
    // Waiting samples as (state, generation slot).
    let mut queue: VecDeque<(usize, u64)> = VecDeque::new();
    let mut in_service: Option<Packet> = None;
    let mut max_queue = 0usize;

    for t in 0..cfg.horizon {
        let mut delivered = false;
        if let Some(p) = in_service {
            if p.delivery == t {
                delivered = true;
                in_service = None;
                aoi = t - p.generated;
                let yi = d.index_of(p.delay).expect("delay drawn from support");
                rec.delivery(t, rec.lifted_index(p.state, yi, held));
                held = decision.action(p.state);
            }
        }
        let sampled = t % interval as u64 == 0;
        if sampled {
            queue.push_back((x, t));
            rec.sample(t);
        }
        if in_service.is_none() {
            if let Some((state, generated)) = queue.pop_front() {
                let y = draw_delay(&mut rng.delay, d);
                in_service = Some(Packet {
                    state,
                    delay: y,
                    generated,
                    delivery: t + y as u64,
                });
            }
        }
        max_queue = max_queue.max(queue.len());
        rec.slot(t, m.cost(x, held), aoi);
        rec.trace(TrajectoryRow {
            t,
            x,
            a: held,
            aoi,
            event: event(delivered, sampled),
        });
        x = draw(&mut rng.source, m.transition(held).row(x));
        aoi += 1;
    }
    Ok(rec.finish(max_queue))
}
