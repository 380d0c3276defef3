use thiserror::Error;

/// Errors raised across the plant model, the learning routines and the runners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("accumulation {value} veh outside [0, {n_jam}]")]
    Domain { value: f64, n_jam: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("MFD curve has no interior maximum on (0, {n_jam})")]
    NoInteriorMaximum { n_jam: f64 },

    #[error("time step {dt} s does not divide the control interval {interval} s")]
    StepDoesNotDivide { dt: f64, interval: f64 },

    #[error("t = {t} s is outside the horizon [{start}, {end}]")]
    OutsideHorizon { t: f64, start: f64, end: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("infeasible set-point: equilibrium control ({u12:.4}, {u21:.4}) outside [{u_min}, {u_max}]")]
    InfeasibleSetpoint { u12: f64, u21: f64, u_min: f64, u_max: f64 },

    #[error("input matrix singular at the reference: transfer accumulation {value} veh below floor {floor}")]
    SingularInput { value: f64, floor: f64 },

    #[error("feedback {mu} outside the open saturation interval (-{lambda}, {lambda})")]
    SaturationDomain { mu: f64, lambda: f64 },

    #[error("insufficient excitation: regression condition number {condition:e} (rank {rank} of {columns})")]
    InsufficientExcitation { condition: f64, rank: usize, columns: usize },

    #[error("too few samples: {got} rows for {needed} required")]
    TooFewSamples { got: usize, needed: usize },

    #[error("policy iteration diverged at iteration {iteration}: weight norm {norm:e}")]
    Diverged { iteration: usize, norm: f64 },

    #[error("initial policy not admissible: {0}")]
    NotAdmissible(String),

    #[error("empty trace")]
    EmptyTrace,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures as opposed to bad input; the CLI maps these to exit code 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::InsufficientExcitation { .. }
                | Error::TooFewSamples { .. }
                | Error::Diverged { .. }
                | Error::NotAdmissible(_)
                | Error::SingularInput { .. }
                | Error::NoInteriorMaximum { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
