//! Rescaled equivalence constants, Calabi's `S`, the Laplacian and Poisson
//! identities, weighted higher-order norms and the collapse experiment.

pub mod cover;
pub mod experiment;
pub mod measures;

pub use cover::{lift, CoverMetric, Node};
pub use experiment::{
    diagnose, run_collapse_experiment, DiagnosticsConfig, DiagnosticsReport, ExperimentConfig, MetricDiagnostics,
    ModelSpec, NormTrend, RefinementRow, RegionInfo, TRow, Verdict,
};
pub use measures::{
    aubin_yau_check, calabi_s, equivalence_constant, laplacian_identity_check, metric_equivalence_constants,
    pencil_eigenvalues, poisson_system_residual, rescaling_weights, weighted_norms, AubinYauReport, IdentityResidual,
    Region,
};
