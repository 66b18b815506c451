//! Damped inexact Newton iteration for the discrete complex Monge-Ampère
//! equation `det(g_ref + ∂∂̄φ) = e^F det g_ref` with `φ = 0` on the base
//! boundary.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::linear::{chart_stencil, linear_inner_solve, lookup, steps, LinearOperator};
use super::model::{
    check_model, density_from_tables, reference_from_tables, ChartTables, Density, ManufacturedSolution, MetricField,
    ModelFibration, MASS_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::linalg::Herm2;

/// Solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Base nodes per direction minus one.
    pub nb: usize,
    /// Fiber nodes per direction.
    pub nf: usize,
    /// Stopping tolerance on `sup |det g_φ / (e^F det g_ref) − 1|`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Floor of the relative tolerance handed to the linear solver.
    pub linear_tol: f64,
    pub max_linear: usize,
    /// Smallest admissible damping factor.
    pub min_step: f64,
    /// A trial step must keep `λ_min(g_φ) > ratio · λ_min(g_ref)` pointwise.
    pub positivity_ratio: f64,
    pub t_list: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nb: 24,
            nf: 24,
            newton_tol: 1e-10,
            max_newton: 40,
            linear_tol: 1e-11,
            max_linear: 2000,
            min_step: 1.0 / 4096.0,
            positivity_ratio: 0.1,
            t_list: vec![1.0, 0.3, 0.1, 0.03, 0.01],
        }
    }
}

impl SolverConfig {
    pub fn with_resolution(mut self, nb: usize, nf: usize) -> Self {
        self.nb = nb;
        self.nf = nf;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("solver config: {m}")));
        if self.nb < 4 || self.nf < 4 {
            return bad("nb and nf must be at least 4");
        }
        if !(self.newton_tol >= 1e-12) {
            return bad("newton_tol below 1e-12 is unreachable in double precision");
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return bad("linear_tol must lie in (0, 1)");
        }
        if self.max_newton == 0 || self.max_linear == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return bad("min_step must lie in (0, 1]");
        }
        if !(self.positivity_ratio > 0.0 && self.positivity_ratio < 1.0) {
            return bad("positivity_ratio must lie in (0, 1)");
        }
        for &t in &self.t_list {
            super::model::check_t(t)?;
        }
        Ok(())
    }
}

/// Chart tables, reference metric and density for one value of `t`.
#[derive(Debug, Clone)]
pub struct CollapseProblem {
    pub tables: ChartTables,
    pub reference: MetricField,
    pub density: Density,
}

impl CollapseProblem {
    /// The Ricci-flat problem `(ω₀ + tω_M + i∂∂̄φ)² = c_t · flat volume`.
    pub fn ricci_flat(model: &ModelFibration, grid: &Grid, t: f64) -> Result<Self> {
        let tables = ChartTables::new(model, grid)?;
        Self::ricci_flat_from_tables(tables, t)
    }

    pub fn ricci_flat_from_tables(tables: ChartTables, t: f64) -> Result<Self> {
        check_model(&tables)?;
        let reference = reference_from_tables(&tables, t)?;
        let density = density_from_tables(&tables, &reference);
        Ok(CollapseProblem { tables, reference, density })
    }

    /// Density manufactured so that `φ*` solves the continuous equation.
    pub fn manufactured(model: &ModelFibration, grid: &Grid, t: f64, exact: &ManufacturedSolution) -> Result<Self> {
        let tables = ChartTables::new(model, grid)?;
        check_model(&tables)?;
        let reference = reference_from_tables(&tables, t)?;
        let density = exact.density(&tables, &reference)?;
        Ok(CollapseProblem { tables, reference, density })
    }

    pub fn with_density(tables: ChartTables, reference: MetricField, density: Density) -> Result<Self> {
        if reference.grid != tables.grid || density.f.len() != tables.grid.len() {
            return Err(Error::Dimension("reference and density must live on the table grid".into()));
        }
        Ok(CollapseProblem { tables, reference, density })
    }

    pub fn grid(&self) -> Grid {
        self.tables.grid
    }

    pub fn t(&self) -> f64 {
        self.reference.t
    }
}

/// Convergence record of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub t: f64,
    pub nb: usize,
    pub nf: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Final `sup |e^R − 1|` over base-interior nodes.
    pub residual: f64,
    /// Residual before each Newton step, then the final one.
    pub history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub step_lengths: Vec<f64>,
    /// `min λ_min(g_φ) / λ_min(g_ref)` at the solution.
    pub positivity_ratio: f64,
    /// `max R − min R` of `R = log det g_φ − log det g_ref − F`.
    pub logdet_spread: f64,
    pub seconds: f64,
}

/// Discrete solution together with its solve record.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: Grid,
    pub t: f64,
    pub phi: Vec<f64>,
    pub report: SolveReport,
}

struct State {
    g: Vec<Herm2>,
    log_residual: Vec<f64>,
    sup: f64,
    min_ratio: f64,
}

/// `g_ref + ∂∂̄φ` at every node; boundary nodes carry `g_ref`.
pub fn metric_from_potential(tables: &ChartTables, reference: &MetricField, phi: &[f64]) -> MetricField {
    let grid = tables.grid;
    let h = steps(&grid);
    let g = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i1, i2, ja, jb) = grid.coords(idx);
            if !grid.is_base_interior(i1, i2) {
                return reference.g[idx];
            }
            let (d1, d2) = chart_stencil(lookup(&grid, phi, i1, i2, ja, jb), h);
            let m = tables.stencil[tables.slot(idx)].apply(&d1, &d2);
            reference.g[idx] + Herm2::new(m[0].re, m[1], m[2].re)
        })
        .collect();
    MetricField { grid, t: reference.t, g }
}

fn evaluate(problem: &CollapseProblem, phi: &[f64]) -> State {
    let grid = problem.grid();
    let g = metric_from_potential(&problem.tables, &problem.reference, phi).g;
    let rows: Vec<(f64, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i1, i2, _, _) = grid.coords(idx);
            if !grid.is_base_interior(i1, i2) {
                return (0.0, 0.0, f64::INFINITY);
            }
            let g_ref = problem.reference.g[idx];
            let ratio = g[idx].min_eigenvalue() / g_ref.min_eigenvalue();
            let det = g[idx].det();
            let r = if det > 0.0 { det.ln() - g_ref.det().ln() - problem.density.f[idx] } else { f64::INFINITY };
            (r, r.exp_m1().abs(), ratio)
        })
        .collect();
    let sup = rows.iter().fold(0.0f64, |m, r| if r.1.is_nan() { f64::INFINITY } else { m.max(r.1) });
    let min_ratio = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.2));
    State { g, log_residual: rows.iter().map(|r| r.0).collect(), sup, min_ratio }
}

fn spread(grid: &Grid, r: &[f64]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (idx, v) in r.iter().enumerate() {
        let (i1, i2, _, _) = grid.coords(idx);
        if grid.is_base_interior(i1, i2) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if hi >= lo { hi - lo } else { 0.0 }
}

/// Solves the Dirichlet problem by damped inexact Newton with positivity
/// safeguarding.
pub fn newton_solve(problem: &CollapseProblem, config: &SolverConfig) -> Result<PotentialField> {
    config.validate()?;
    if problem.density.mass_defect > MASS_TOLERANCE {
        return Err(Error::MassIncompatible { defect: problem.density.mass_defect });
    }
    let start = Instant::now();
    let grid = problem.grid();
    let mut phi = vec![0.0; grid.len()];
    let mut state = evaluate(problem, &phi);
    let mut report = SolveReport {
        t: problem.t(),
        nb: grid.nb,
        nf: grid.nf,
        converged: false,
        iterations: 0,
        residual: state.sup,
        history: vec![state.sup],
        linear_iterations: Vec::new(),
        step_lengths: Vec::new(),
        positivity_ratio: state.min_ratio,
        logdet_spread: spread(&grid, &state.log_residual),
        seconds: 0.0,
    };
    while state.sup > config.newton_tol {
        if report.iterations >= config.max_newton {
            return Err(Error::NonConvergence { iterations: report.iterations, residual: state.sup });
        }
        report.iterations += 1;
        let op = LinearOperator::from_metric(&problem.tables, &state.g);
        let rhs: Vec<f64> = state.log_residual.iter().map(|r| -r).collect();
        let forcing = (0.1 * state.sup).clamp(config.linear_tol, 0.1);
        let (delta, lin) = linear_inner_solve(&op, &rhs, forcing, config.max_linear)?;
        drop(op);
        report.linear_iterations.push(lin.iterations);
        let mut alpha = 1.0;
        let mut lost_positivity = false;
        let accepted = loop {
            let trial: Vec<f64> = phi.par_iter().zip(delta.par_iter()).map(|(p, d)| p + alpha * d).collect();
            let next = evaluate(problem, &trial);
            let positive = next.min_ratio > config.positivity_ratio;
            if positive && next.sup < state.sup {
                break Some((trial, next));
            }
            lost_positivity |= !positive;
            alpha *= 0.5;
            if alpha < config.min_step {
                break None;
            }
        };
        match accepted {
            Some((trial, next)) => {
                phi = trial;
                state = next;
                report.step_lengths.push(alpha);
                report.history.push(state.sup);
            }
            None if lost_positivity => return Err(Error::LostPositivity { iteration: report.iterations }),
            None => return Err(Error::NonConvergence { iterations: report.iterations, residual: state.sup }),
        }
    }
    report.converged = true;
    report.residual = state.sup;
    report.positivity_ratio = state.min_ratio;
    report.logdet_spread = spread(&grid, &state.log_residual);
    report.seconds = start.elapsed().as_secs_f64();
    Ok(PotentialField { grid, t: problem.t(), phi, report })
}

impl PotentialField {
    pub fn metric(&self, problem: &CollapseProblem) -> MetricField {
        metric_from_potential(&problem.tables, &problem.reference, &self.phi)
    }

    /// Maximum of `|φ|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
