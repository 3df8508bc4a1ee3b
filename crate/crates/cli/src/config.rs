//! Experiment configuration: JSON schema, presets and validation.

use std::path::{Path, PathBuf};

use armdp::constrained::ConstrainedConfig;
use armdp::sim::SimConfig;
use armdp::{make_delay, DelayDistribution, DelayKind, PrimalMdp, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESET_APPENDIX_H: &str = "appendix-h";

/// Source MDP: a named preset or inline matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrimalSpec {
    Preset(String),
    Inline {
        /// `transition[a][s][s']`.
        transition: Vec<Vec<Vec<f64>>>,
        /// `cost[s][a]`.
        cost: Vec<Vec<f64>>,
    },
}

impl Default for PrimalSpec {
    fn default() -> Self {
        PrimalSpec::Preset(PRESET_APPENDIX_H.into())
    }
}

/// A single value or a sweep list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    OnePdsi,
    BisecTauRvi,
    Fpbi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    ThreeLayer,
    QuickBlp,
    Both,
}

/// Decision rule paired with the baseline sampling rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSpec {
    Longterm,
    Myopic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    GoalOriented,
    ZeroWait,
    AoiOptimal,
    ConstantWait(u32),
    /// Periodic sampling with the period set by the budget (or the smallest
    /// stable period when there is none).
    Uniform,
    UniformPeriod(u32),
    /// Zero-wait sampling with the myopic decision rule regardless of `decision`.
    MyopicZeroWait,
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::GoalOriented => "goal_oriented".into(),
            PolicySpec::ZeroWait => "zero_wait".into(),
            PolicySpec::AoiOptimal => "aoi_optimal".into(),
            PolicySpec::ConstantWait(z) => format!("constant_wait_{z}"),
            PolicySpec::Uniform => "uniform".into(),
            PolicySpec::UniformPeriod(d) => format!("uniform_{d}"),
            PolicySpec::MyopicZeroWait => "myopic_zero_wait".into(),
        }
    }
}

/// Tolerances of the constrained solvers; the unconstrained ones live in `solver`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstrainedParams {
    pub eps1: f64,
    pub eps2: f64,
    pub theta_cap: f64,
    pub delta: Option<f64>,
}

impl Default for ConstrainedParams {
    fn default() -> Self {
        let d = ConstrainedConfig::default();
        Self {
            eps1: d.eps1,
            eps2: d.eps2,
            theta_cap: d.theta_cap,
            delta: d.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceParams {
    /// Multiplier at which RVI and τ-RVI are traced.
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub primal: PrimalSpec,
    pub delay: DelayKind,
    /// Delay grid for `sweep-delay`.
    pub delay_sweep: Option<Vec<DelayKind>>,
    /// Largest waiting time; `None` means twice the largest delay.
    pub z_max: Option<u32>,
    pub solver: SolverConfig,
    pub constrained: ConstrainedParams,
    pub method: SolveMethod,
    pub rate_method: RateMethod,
    /// Sampling-frequency budget; a list for `sweep-rate` and `solve-rate`.
    pub f_max: Option<OneOrMany>,
    pub policies: Vec<PolicySpec>,
    pub decision: DecisionSpec,
    /// Run the Monte Carlo simulator alongside analytic values in sweeps.
    pub simulate: bool,
    pub sim: SimConfig,
    pub trace: TraceParams,
    /// Worker threads for sweeps; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            primal: PrimalSpec::default(),
            delay: DelayKind::Binary { p: 0.3, y_max: 11 },
            delay_sweep: None,
            z_max: None,
            solver: SolverConfig::default(),
            constrained: ConstrainedParams::default(),
            method: SolveMethod::OnePdsi,
            rate_method: RateMethod::Both,
            f_max: None,
            policies: vec![
                PolicySpec::GoalOriented,
                PolicySpec::ZeroWait,
                PolicySpec::AoiOptimal,
                PolicySpec::ConstantWait(2),
                PolicySpec::MyopicZeroWait,
            ],
            decision: DecisionSpec::Longterm,
            simulate: true,
            sim: SimConfig::default(),
            trace: TraceParams::default(),
            threads: None,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the line, column and field path of the first error.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!(
                "line {} column {}, field `{}`: {}",
                inner.line(),
                inner.column(),
                path,
                inner
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.policies.is_empty() {
            return Err(CliError::Config("field `policies`: must name at least one policy".into()));
        }
        self.primal()?;
        self.delay_distribution()?;
        if let Some(sweep) = &self.delay_sweep {
            if sweep.is_empty() {
                return Err(CliError::Config("field `delay_sweep`: must not be empty".into()));
            }
            for (i, k) in sweep.iter().enumerate() {
                make_delay(k).map_err(|e| CliError::Config(format!("field `delay_sweep[{i}]`: {e}")))?;
            }
        }
        if let Some(f) = &self.f_max {
            let values = f.values();
            if values.is_empty() {
                return Err(CliError::Config("field `f_max`: must not be empty".into()));
            }
            if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(CliError::Config(format!("field `f_max`: {bad} must be positive and finite")));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("field `threads`: must be at least 1".into()));
        }
        Ok(())
    }

    pub fn primal(&self) -> Result<PrimalMdp, CliError> {
        match &self.primal {
            PrimalSpec::Preset(name) if name == PRESET_APPENDIX_H => Ok(PrimalMdp::benchmark_two_state()),
            PrimalSpec::Preset(name) => Err(CliError::Config(format!("field `primal`: unknown preset `{name}`"))),
            PrimalSpec::Inline { transition, cost } => PrimalMdp::new(transition.clone(), cost.clone())
                .map_err(|e| CliError::Config(format!("field `primal`: {e}"))),
        }
    }

    pub fn delay_distribution(&self) -> Result<DelayDistribution, CliError> {
        make_delay(&self.delay).map_err(|e| CliError::Config(format!("field `delay`: {e}")))
    }

    pub fn z_max_for(&self, d: &DelayDistribution) -> u32 {
        self.z_max.unwrap_or(2 * d.max_delay())
    }

    pub fn constrained_config(&self) -> ConstrainedConfig {
        ConstrainedConfig {
            solver: self.solver.clone(),
            eps1: self.constrained.eps1,
            eps2: self.constrained.eps2,
            theta_cap: self.constrained.theta_cap,
            delta: self.constrained.delta,
        }
    }

    pub fn f_max_values(&self) -> Vec<f64> {
        self.f_max.as_ref().map(|f| f.values()).unwrap_or_default()
    }
}
