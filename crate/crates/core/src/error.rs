//! Error vocabulary shared across the library.

use thiserror::Error;

/// Errors surfaced by grid construction, geometry operators, entropy solves,
/// flow integration and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration values (grid too small, nonpositive tolerances, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs outside the mathematical domain (degenerate metric, nonpositive u, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// API misuse such as mixing fields living on different grids.
    #[error("usage error: {0}")]
    Usage(String),

    /// A documented precondition was violated (constraint not normalized,
    /// probing the entropy Hessian away from a critical point, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("solver error: {0}")]
    Solver(String),

    /// Time stepping failed (step-size floor reached, state left the metric cone).
    #[error("stepper error: {0}")]
    Stepper(String),

    /// Gauge transfer lost monotonicity of the transported chart map.
    #[error("gauge transfer error: {0}")]
    Transfer(String),

    /// Not enough usable samples to perform a fit.
    #[error("fit error: {0}")]
    Fit(String),

    /// Trajectory data violates the assumptions of an analysis routine.
    #[error("data quality error: {0}")]
    Data(String),

    /// Serialization or file-format problems.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<V> = std::result::Result<V, Error>;
