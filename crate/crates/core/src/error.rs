use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration refused: kappa = {kappa} must be < 1")]
    KappaTooLarge { kappa: f64 },

    #[error("lower cutoff infeasible: ln(1/delta) = {log_inv_delta} must be < <M> = {mean_length}")]
    InfeasibleLowerCutoff { log_inv_delta: f64, mean_length: f64 },

    #[error(
        "Newton calibration did not converge after {iterations} iterations \
         (gamma = {gamma}, z2 = {z2}, residuals N: {residual_n:e}, M: {residual_m:e})"
    )]
    NoConvergence {
        iterations: usize,
        gamma: f64,
        z2: f64,
        residual_n: f64,
        residual_m: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("partition space is empty for q = {q}, n = {n}, m = {m}")]
    EmptySpace { q: u32, n: u64, m: u32 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
