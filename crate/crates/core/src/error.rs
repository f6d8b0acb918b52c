//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("throughput is negative at t={t}: lambda={value}")]
    NegativeThroughput { t: f64, value: f64 },

    #[error("throughput rate violation at t={t}: lambda + lambda_dot = {value} < 0")]
    RateViolation { t: f64, value: f64 },

    #[error("integration bounds [{a}, {b}] outside [0, {horizon}]")]
    OutOfRange { a: f64, b: f64, horizon: f64 },

    #[error("ODE state became non-finite at t={t}")]
    NonFiniteState { t: f64 },

    #[error("link {link} has non-positive {what}: {value}")]
    NonPositiveGeometry {
        link: usize,
        what: &'static str,
        value: f64,
    },

    #[error("path preference component {path} is negative: {value}")]
    NegativePreference { path: usize, value: f64 },

    #[error("move decision with arrival {arrival} not after entry {entry}")]
    InvalidDecision { entry: f64, arrival: f64 },

    #[error("mass on link {link} reached {value} > rho_max={rho_max} at t={t}; scenario infeasible")]
    MassOverflow {
        link: usize,
        t: f64,
        value: f64,
        rho_max: f64,
    },

    #[error("epsilon-partition step {step} is below the base grid step {dt}; refine the base grid")]
    StepTooSmall { step: f64, dt: f64 },

    #[error("outer search budget must be at least 1")]
    InvalidBudget,

    #[error("no candidate produced a converged inner equilibrium")]
    NoConvergedCandidate,

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("scenario schema error: {0}")]
    Schema(String),

    #[error("scenario validation failed: {rule}")]
    Validation { rule: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
