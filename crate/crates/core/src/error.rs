use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("skew form is degenerate (|det| = {det:.3e})")]
    DegenerateForm { det: f64 },
    #[error("skew form is not exactly skew-symmetric at ({0}, {1})")]
    NotSkew(usize, usize),
    #[error("integral form has a non-integer entry at ({0}, {1})")]
    NotIntegral(usize, usize),
    #[error("exact integer arithmetic overflowed")]
    Overflow,
    #[error("lattice columns are R-dependent (condition number {cond:.3e})")]
    BadBasis { cond: f64 },
    #[error("lattice is not polarized by the given form: {0}")]
    NotPolarized(String),
    #[error("skew form is not in block normal form")]
    NotNormalForm,
    #[error("point lies outside the base domain")]
    OutOfDomain,
    #[error("rescaling parameter must lie in (0, 1], got {0}")]
    InvalidT(f64),
    #[error("reference form is not positive at node {node} (min eigenvalue {min_eig:.3e})")]
    NotKaehler { node: usize, min_eig: f64 },
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("damping could not keep the metric positive (step {iteration})")]
    LostPositivity { iteration: usize },
    #[error("density violates mass compatibility (relative defect {defect:.3e})")]
    MassIncompatible { defect: f64 },
    #[error("linear solver hit its iteration limit ({iterations} iterations, relative residual {residual:.3e})")]
    IterationLimit { iterations: usize, residual: f64 },
    #[error("comparison region contains no admissible nodes")]
    RegionEmpty,
    #[error("metric is not numerically Ricci-flat (log-det spread {spread:.3e})")]
    NotRicciFlat { spread: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
