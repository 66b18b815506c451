//! Period maps, semi-flat forms and a collapsing Calabi–Yau solver for
//! polarized holomorphic torus fibrations.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod collapse;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod period;
pub mod semiflat;

pub use error::{Error, Result};
pub use lattice::{
    frobenius_normal_form, lattice_frame_coefficients, symplectic_normalize, FiberTwoForm, FrobeniusData, SkewForm,
    SymplecticNormalizer,
};
pub use period::{
    compute_period, gtz_convert, gtz_convert_any, hermitian_metric, BaseBox, EntrywiseFamily, GtzData,
    HermitianMetric, HoloFn, HolomorphicLatticeFamily, LatticeBasis, PeriodData, PeriodJet, Polynomial,
};
pub use semiflat::{
    check_pluriharmonic, check_semipositive, eval_ddbar_eta, eval_eta, rescaling_identity, translation_defect,
    HermitianForm11, SemiFlatPotential,
};
pub use collapse::{
    assemble_density, assemble_reference, linear_inner_solve, newton_solve, CollapseProblem, Density, Grid,
    ManufacturedSolution, MetricField, ModelFibration, PotentialField, SolveReport, SolverConfig,
};
pub use diagnostics::{run_collapse_experiment, DiagnosticsConfig, DiagnosticsReport, ExperimentConfig, ModelSpec};
