//! The collapsing model: chart tables, reference metric and density on a
//! product grid, and the Monge-Ampère solver.

pub mod field_io;
pub mod grid;
pub mod linear;
pub mod model;
pub mod newton;

pub use field_io::{read_field, write_field, FieldHeader};
pub use grid::{chart_coefficients, Grid, HessianStencil, PeriodPoint, PAIRS};
pub use linear::{linear_inner_solve, LinearOperator, LinearSolveReport, Preconditioner};
pub use model::{
    assemble_density, assemble_reference, check_model, density_from_tables, density_with_constant, mass_defect,
    masses, reference_from_tables, ChartTables, Density, ManufacturedSolution, MetricField, ModelFibration,
    MASS_TOLERANCE, POLARIZATION_MARGIN,
};
pub use newton::{metric_from_potential, newton_solve, CollapseProblem, PotentialField, SolveReport, SolverConfig};
