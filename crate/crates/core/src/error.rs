use thiserror::Error;

/// Errors produced by model construction, the solvers and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transition row {row} of action {action} sums to {sum} (expected 1)")]
    RowSum { action: usize, row: usize, sum: f64 },

    #[error("transition entry ({row}, {col}) of action {action} is {value}, outside [0, 1]")]
    InvalidProbability {
        action: usize,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("cost C({state}, {action}) is not finite")]
    NonFiniteCost { state: usize, action: usize },

    #[error("delay distribution invalid: {0}")]
    InvalidDelay(String),

    #[error("chain has no unique stationary distribution (residual {residual:e})")]
    NoUniqueStationary { residual: f64 },

    #[error("matrix-power table needs {required} entries, cap is {cap}")]
    MemoryCap { required: usize, cap: usize },

    #[error("enumeration needs {required} sequences, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("inner solver did not converge at lambda = {lambda} after {iterations} iterations")]
    InnerNotConverged { lambda: f64, iterations: usize },

    #[error("iteration did not converge within {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("numerical overflow at iteration {iteration}")]
    Overflow { iteration: usize },

    #[error("rate constraint cannot be met: need mean epoch length {required}, at most {achievable} is reachable")]
    InfeasibleRate { required: f64, achievable: f64 },

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("simplex exceeded its pivot limit of {0}")]
    LpCycling(usize),

    #[error("simplex solution failed verification: {0}")]
    LpNumerical(String),

    #[error("uniform sampling is not a waiting rule; run it with simulate_uniform_queue")]
    UniformNotWaitingRule,

    #[error("bracket expansion exceeded cap {cap}")]
    BracketExpansion { cap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
