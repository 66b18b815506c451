use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cover::CoverMetric;
use super::measures::{
    aubin_yau_check, calabi_s, laplacian_identity_check, metric_equivalence_constants, poisson_system_residual,
    weighted_norms, AubinYauReport, IdentityResidual, Region,
};
use crate::collapse::{newton_solve, ChartTables, CollapseProblem, ModelFibration, SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::io::FamilyFile;
use crate::semiflat::SemiFlatPotential;

/// Which local model to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// `Z(y) = i + α y²` on the square `|Re y|, |Im y| ≤ half`.
    Quadratic {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_half")]
        half: f64,
    },
    /// `Z ≡ τ`, with `tau = [re, im]`.
    Constant {
        tau: [f64; 2],
        #[serde(default = "default_half")]
        half: f64,
    },
    /// A one-dimensional family given by lattice or period entries.
    Family(FamilyFile),
}

fn default_alpha() -> f64 {
    0.1
}

fn default_half() -> f64 {
    0.5
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Quadratic { alpha: 0.1, half: 0.5 }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelFibration> {
        match self {
            ModelSpec::Quadratic { alpha, half } => ModelFibration::quadratic(*alpha, *half),
            ModelSpec::Constant { tau, half } => ModelFibration::constant(Complex64::new(tau[0], tau[1]), *half),
            ModelSpec::Family(file) => {
                let potential = SemiFlatPotential::new(Arc::new(file.family()?), &file.form()?)?;
                ModelFibration::new(potential)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Quadratic { alpha, half } => format!("Z = i + {alpha} y^2 on [-{half}, {half}]^2"),
            ModelSpec::Constant { tau, half } => format!("Z = {} + {}i on [-{half}, {half}]^2", tau[0], tau[1]),
            ModelSpec::Family(_) => "custom family".into(),
        }
    }
}

/// Diagnostics settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    /// Fractional distance of the region `K` from the base boundary.
    pub margin: f64,
    pub k_max: usize,
    /// Fiber subsampling for the identity checks.
    pub fiber_stride: usize,
    /// Fiber subsampling for the higher-order norms.
    pub norm_stride: usize,
    /// Largest log-det spread accepted as Ricci-flat.
    pub ricci_flat_tol: f64,
    /// Repeat the identity checks on the half-resolution grid.
    pub refine: bool,
    pub c_k_ratio_threshold: f64,
    pub s_ratio_threshold: f64,
    pub decay_threshold: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            margin: 0.25,
            k_max: 3,
            fiber_stride: 1,
            norm_stride: 2,
            ricci_flat_tol: 1e-8,
            refine: true,
            c_k_ratio_threshold: 2.0,
            s_ratio_threshold: 3.0,
            decay_threshold: 2.0,
        }
    }
}

/// Full experiment configuration (the CLI config file).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub solver: SolverConfig,
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub margin: f64,
    /// Inclusive base index bounds `[[i1_lo, i1_hi], [i2_lo, i2_hi]]`.
    pub base_bounds: [[usize; 2]; 2],
    pub base_nodes: usize,
    pub fiber_stride: usize,
}

impl RegionInfo {
    fn of(region: &Region) -> Self {
        RegionInfo {
            margin: region.margin,
            base_bounds: region.bounds(),
            base_nodes: region.base.len(),
            fiber_stride: region.fiber_stride,
        }
    }
}

/// Diagnostics of one solved metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDiagnostics {
    pub nb: usize,
    pub nf: usize,
    pub region: RegionInfo,
    pub c_k: f64,
    pub sup_s: f64,
    /// Largest relative gap between the two evaluations of `S`.
    pub s_cross_check: f64,
    pub laplacian_identity: Option<IdentityResidual>,
    pub poisson: IdentityResidual,
    pub aubin_yau: AubinYauReport,
    /// `sup_K |D^k g̃|` for `k = 0..=k_max`.
    pub norms: Vec<f64>,
    pub seconds: f64,
    /// Failure of an individual check (the others are still reported).
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TRow {
    pub t: f64,
    pub converged: bool,
    pub error: Option<String>,
    pub solve: Option<SolveReport>,
    pub diagnostics: Option<MetricDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub t: f64,
    pub coarse_nb: usize,
    pub coarse_nf: usize,
    pub laplacian_coarse: Option<f64>,
    pub laplacian_fine: Option<f64>,
    pub laplacian_factor: Option<f64>,
    pub poisson_coarse: Option<f64>,
    pub poisson_fine: Option<f64>,
    pub poisson_factor: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTrend {
    pub k: usize,
    pub values: Vec<f64>,
    /// Least-squares slope of `ln N_k` against `ln(1/t)`.
    pub slope: f64,
    pub flag: String,
}

/// A threshold comparison drawn from the sweep. The label is always
/// "evidence": these are desk-scale observations, not proofs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub holds: bool,
    pub label: String,
}

impl Verdict {
    fn new(name: &str, statistic: f64, threshold: f64, holds: bool) -> Self {
        Verdict { name: name.into(), statistic, threshold, holds, label: "evidence".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub model: String,
    pub nb: usize,
    pub nf: usize,
    pub t_list: Vec<f64>,
    pub config: DiagnosticsConfig,
    pub rows: Vec<TRow>,
    pub refinement: Vec<RefinementRow>,
    pub norm_trends: Vec<NormTrend>,
    pub verdicts: Vec<Verdict>,
    pub seconds: f64,
}

/// Runs all diagnostics on a solved metric.
pub fn diagnose(
    tables: &ChartTables,
    problem: &CollapseProblem,
    solve: &SolveReport,
    phi: &[f64],
    config: &DiagnosticsConfig,
) -> Result<MetricDiagnostics> {
    let start = Instant::now();
    let grid = tables.grid;
    let t = problem.t();
    let metric = crate::collapse::metric_from_potential(tables, &problem.reference, phi);
    let cover = CoverMetric::new(tables, &metric)?;
    let region = Region::new(&grid, config.margin, config.fiber_stride)?;
    let mut notes = Vec::new();
    let c_k = metric_equivalence_constants(&metric, &region)?;
    let (s, s_cross_check) = calabi_s(&cover, &region, t);
    let sup_s = s.iter().copied().fold(0.0, f64::max);
    let laplacian_identity = match laplacian_identity_check(&cover, &region, solve.logdet_spread, config.ricci_flat_tol) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("laplacian identity: {e}"));
            None
        }
    };
    let poisson = poisson_system_residual(&cover, &region, t)?;
    let aubin_yau = aubin_yau_check(&cover, &region, t, c_k)?;
    let norm_region = Region::new(&grid, config.margin, config.norm_stride)?;
    let norms = weighted_norms(&cover, &norm_region, t, config.k_max)?;
    Ok(MetricDiagnostics {
        nb: grid.nb,
        nf: grid.nf,
        region: RegionInfo::of(&region),
        c_k,
        sup_s,
        s_cross_check,
        laplacian_identity,
        poisson,
        aubin_yau,
        norms,
        seconds: start.elapsed().as_secs_f64(),
        notes,
    })
}

fn solve_and_diagnose(tables: &ChartTables, t: f64, solver: &SolverConfig, config: &DiagnosticsConfig) -> TRow {
    let attempt = || -> Result<(SolveReport, MetricDiagnostics)> {
        let problem = CollapseProblem::ricci_flat_from_tables(tables.clone(), t)?;
        let sol = newton_solve(&problem, solver)?;
        let diag = diagnose(tables, &problem, &sol.report, &sol.phi, config)?;
        Ok((sol.report, diag))
    };
    match attempt() {
        Ok((solve, diag)) => TRow { t, converged: true, error: None, solve: Some(solve), diagnostics: Some(diag) },
        Err(e) => TRow { t, converged: false, error: Some(e.to_string()), solve: None, diagnostics: None },
    }
}

fn ratio(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if hi <= 1e-300 {
        1.0
    } else {
        hi / lo
    }
}

fn decay(coarse: Option<f64>, fine: Option<f64>) -> Option<f64> {
    match (coarse, fine) {
        (Some(c), Some(f)) if f > 0.0 => Some(c / f),
        (Some(_), Some(_)) => Some(f64::INFINITY),
        _ => None,
    }
}

fn trend(k: usize, ts: &[f64], values: Vec<f64>) -> NormTrend {
    let pts: Vec<(f64, f64)> =
        ts.iter().zip(&values).filter(|(_, v)| **v > 1e-300).map(|(t, v)| ((1.0 / t).ln(), v.ln())).collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 { sxy / sxx } else { 0.0 }
    } else {
        0.0
    };
    let flag = if slope <= 0.1 { "bounded" } else { "growing" };
    NormTrend { k, values, slope, flag: flag.into() }
}

/// Solves and diagnoses every `t` in the solver's list; failures are recorded
/// per row without aborting the sweep.
pub fn run_collapse_experiment(model: &ModelFibration, config: &ExperimentConfig) -> Result<DiagnosticsReport> {
    run_labeled(model, config, config.model.label())
}

pub fn run_labeled(model: &ModelFibration, config: &ExperimentConfig, label: String) -> Result<DiagnosticsReport> {
    let start = Instant::now();
    let solver = &config.solver;
    let diag = &config.diagnostics;
    solver.validate()?;
    if diag.c_k_ratio_threshold <= 0.0 || diag.s_ratio_threshold <= 0.0 || diag.decay_threshold <= 0.0 {
        return Err(Error::InvalidInput("diagnostic thresholds must be positive".into()));
    }
    let grid = model.grid(solver.nb, solver.nf)?;
    let tables = ChartTables::new(model, &grid)?;
    crate::collapse::check_model(&tables)?;
    Region::new(&grid, diag.margin, diag.fiber_stride)?;

    let rows: Vec<TRow> = solver.t_list.iter().map(|&t| solve_and_diagnose(&tables, t, solver, diag)).collect();

    let mut refinement = Vec::new();
    if diag.refine {
        let (cnb, cnf) = (solver.nb / 2, solver.nf / 2);
        let coarse_solver = solver.clone().with_resolution(cnb, cnf);
        let coarse_grid = model.grid(cnb, cnf)?;
        let coarse_tables = ChartTables::new(model, &coarse_grid)?;
        let coarse_diag = DiagnosticsConfig { k_max: 0, ..diag.clone() };
        for row in &rows {
            let coarse = solve_and_diagnose(&coarse_tables, row.t, &coarse_solver, &coarse_diag);
            let lap = |r: &TRow| r.diagnostics.as_ref().and_then(|d| d.laplacian_identity.map(|l| l.relative));
            let poi = |r: &TRow| r.diagnostics.as_ref().map(|d| d.poisson.relative);
            refinement.push(RefinementRow {
                t: row.t,
                coarse_nb: cnb,
                coarse_nf: cnf,
                laplacian_coarse: lap(&coarse),
                laplacian_fine: lap(row),
                laplacian_factor: decay(lap(&coarse), lap(row)),
                poisson_coarse: poi(&coarse),
                poisson_fine: poi(row),
                poisson_factor: decay(poi(&coarse), poi(row)),
                error: coarse.error.or_else(|| row.error.clone()),
            });
        }
    }

    let ok: Vec<&MetricDiagnostics> = rows.iter().filter_map(|r| r.diagnostics.as_ref()).collect();
    let ok_t: Vec<f64> = rows.iter().filter(|r| r.diagnostics.is_some()).map(|r| r.t).collect();
    let norm_trends = (0..=diag.k_max)
        .map(|k| trend(k, &ok_t, ok.iter().map(|d| d.norms.get(k).copied().unwrap_or(f64::NAN)).collect()))
        .collect();

    let converged = rows.iter().filter(|r| r.converged).count();
    let mut verdicts = vec![Verdict::new(
        "all solves converged",
        converged as f64,
        rows.len() as f64,
        converged == rows.len(),
    )];
    if !ok.is_empty() {
        let c_ratio = ratio(&ok.iter().map(|d| d.c_k).collect::<Vec<_>>());
        verdicts.push(Verdict::new("C_K max/min over t", c_ratio, diag.c_k_ratio_threshold, c_ratio <= diag.c_k_ratio_threshold));
        let s_ratio = ratio(&ok.iter().map(|d| d.sup_s).collect::<Vec<_>>());
        verdicts.push(Verdict::new("sup S max/min over t", s_ratio, diag.s_ratio_threshold, s_ratio <= diag.s_ratio_threshold));
        let min_contraction = ok.iter().map(|d| d.aubin_yau.min_contraction).fold(f64::INFINITY, f64::min);
        verdicts.push(Verdict::new("Aubin-Yau contraction nonnegative", min_contraction, 0.0, min_contraction >= -1e-12));
    }
    if diag.refine {
        let worst = |f: fn(&RefinementRow) -> Option<f64>| {
            refinement.iter().map(|r| f(r).unwrap_or(f64::NAN)).fold(f64::INFINITY, |m, v| if v.is_nan() { f64::NAN } else { m.min(v) })
        };
        let lap = worst(|r| r.laplacian_factor);
        verdicts.push(Verdict::new("Laplacian identity decay factor", lap, diag.decay_threshold, lap >= diag.decay_threshold));
        let poi = worst(|r| r.poisson_factor);
        verdicts.push(Verdict::new("Poisson system decay factor", poi, diag.decay_threshold, poi >= diag.decay_threshold));
    }

    Ok(DiagnosticsReport {
        model: label,
        nb: solver.nb,
        nf: solver.nf,
        t_list: solver.t_list.clone(),
        config: diag.clone(),
        rows,
        refinement,
        norm_trends,
        verdicts,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// One row per `t`, one column per scalar diagnostic.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k_max = self.config.k_max;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "t", "nb", "nf", "converged", "newton_iterations", "ma_residual", "logdet_spread", "solve_seconds", "c_k",
            "sup_s", "s_cross_check", "laplacian_residual", "poisson_residual", "aubin_yau_residual", "min_contraction",
            "min_bound_margin",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..=k_max).map(|k| format!("norm_{k}")));
        header.extend(["laplacian_decay".to_string(), "poisson_decay".to_string(), "error".to_string()]);
        w.write_record(&header).map_err(csv_err)?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        for row in &self.rows {
            let s = row.solve.as_ref();
            let d = row.diagnostics.as_ref();
            let r = self.refinement.iter().find(|r| r.t == row.t);
            let mut rec = vec![
                format!("{}", row.t),
                self.nb.to_string(),
                self.nf.to_string(),
                row.converged.to_string(),
                s.map(|s| s.iterations.to_string()).unwrap_or_default(),
                fmt(s.map(|s| s.residual)),
                fmt(s.map(|s| s.logdet_spread)),
                fmt(s.map(|s| s.seconds)),
                fmt(d.map(|d| d.c_k)),
                fmt(d.map(|d| d.sup_s)),
                fmt(d.map(|d| d.s_cross_check)),
                fmt(d.and_then(|d| d.laplacian_identity.map(|l| l.relative))),
                fmt(d.map(|d| d.poisson.relative)),
                fmt(d.map(|d| d.aubin_yau.equality.relative)),
                fmt(d.map(|d| d.aubin_yau.min_contraction)),
                fmt(d.map(|d| d.aubin_yau.min_bound_margin)),
            ];
            rec.extend((0..=k_max).map(|k| fmt(d.and_then(|d| d.norms.get(k).copied()))));
            rec.push(fmt(r.and_then(|r| r.laplacian_factor)));
            rec.push(fmt(r.and_then(|r| r.poisson_factor)));
            rec.push(row.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}
