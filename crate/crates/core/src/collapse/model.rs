use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::grid::{Grid, HessianStencil, PeriodPoint, PAIRS};
use crate::error::{Error, Result};
use crate::lattice::SkewForm;
use crate::linalg::Herm2;
use crate::period::{BaseBox, EntrywiseFamily, HoloFn, HolomorphicLatticeFamily, Polynomial};
use crate::semiflat::{ddbar_from_jet, SemiFlatPotential};

/// Uniform lower bound on `Im Z` over the closed base box.
pub const POLARIZATION_MARGIN: f64 = 0.1;
/// Relative mismatch of the discrete masses above which a density is rejected.
pub const MASS_TOLERANCE: f64 = 1e-3;

/// Local elliptic fibration over a box in ℂ with fibers `ℂ/(ℤ + Z(y)ℤ)`.
#[derive(Debug, Clone)]
pub struct ModelFibration {
    potential: SemiFlatPotential,
    base: [[f64; 2]; 2],
}

impl ModelFibration {
    pub fn new(potential: SemiFlatPotential) -> Result<Self> {
        if potential.n() != 1 || potential.m() != 1 {
            return Err(Error::Dimension("the collapse model needs n = m = 1".into()));
        }
        let iv = &potential.family().base().intervals;
        let base = [iv[0], iv[1]];
        Ok(ModelFibration { potential, base })
    }

    pub fn from_family(family: Arc<dyn HolomorphicLatticeFamily>) -> Result<Self> {
        Self::new(SemiFlatPotential::new(family, &SkewForm::standard(1))?)
    }

    /// `Z(y) = i + α y²` on `|Re y|, |Im y| ≤ half`.
    pub fn quadratic(alpha: f64, half: f64) -> Result<Self> {
        let z = HoloFn::Poly(Polynomial::from_terms([
            (Complex64::new(0.0, 1.0), vec![0]),
            (Complex64::new(alpha, 0.0), vec![2]),
        ]));
        Self::from_family(Arc::new(EntrywiseFamily::from_period(1, BaseBox::centered(1, half), vec![z])?))
    }

    /// The default experiment model `Z(y) = i + y²/10` on the unit square.
    pub fn default_model() -> Result<Self> {
        Self::quadratic(0.1, 0.5)
    }

    /// Constant period `Z ≡ τ`.
    pub fn constant(tau: Complex64, half: f64) -> Result<Self> {
        let z = HoloFn::constant(1, tau);
        Self::from_family(Arc::new(EntrywiseFamily::from_period(1, BaseBox::centered(1, half), vec![z])?))
    }

    pub fn potential(&self) -> &SemiFlatPotential {
        &self.potential
    }

    pub fn base(&self) -> [[f64; 2]; 2] {
        self.base
    }

    pub fn grid(&self, nb: usize, nf: usize) -> Result<Grid> {
        Grid::new(nb, nf, self.base)
    }

    pub fn period(&self, y: Complex64) -> Result<PeriodPoint> {
        let jet = self.potential.jet(&[y])?;
        Ok(PeriodPoint {
            z: jet.period.z[(0, 0)],
            dz: jet.period.dz[0][(0, 0)],
            d2z: jet.period.d2z[0][0][(0, 0)],
        })
    }

    /// `i∂∂̄η` at base point `y`, fiber coordinate `b` (independent of `a`).
    pub fn omega_sf(&self, y: Complex64, b: f64) -> Result<Herm2> {
        let jet = self.potential.jet(&[y])?;
        let z = jet.period.z[(0, 0)] * b;
        let form = ddbar_from_jet(&jet, &[z]);
        Ok(Herm2::new(form.coeffs[(0, 0)].re, form.coeffs[(0, 1)], form.coeffs[(1, 1)].re))
    }

    /// `ω₀ + t ω_M` with `ω_M = ω₀ + ω_SF` and `ω₀ = i dy ∧ dȳ`.
    pub fn reference_at(&self, y: Complex64, b: f64, t: f64) -> Result<Herm2> {
        let sf = self.omega_sf(y, b)?;
        Ok(Herm2::diag(1.0 + t, 0.0) + sf.scale(t))
    }
}

/// Per-grid tables depending only on `(y, b)`.
#[derive(Debug, Clone)]
pub struct ChartTables {
    pub grid: Grid,
    /// Indexed by base node.
    pub period: Vec<PeriodPoint>,
    /// Indexed by `base · N_F + j_b`.
    pub stencil: Vec<HessianStencil>,
    /// `ω_SF` indexed like `stencil`.
    pub omega_sf: Vec<Herm2>,
}

impl ChartTables {
    pub fn new(model: &ModelFibration, grid: &Grid) -> Result<Self> {
        let nbase = grid.nbase();
        let period: Vec<PeriodPoint> = (0..nbase * nbase)
            .into_par_iter()
            .map(|k| model.period(grid.y(k / nbase, k % nbase)))
            .collect::<Result<_>>()?;
        let nf = grid.nf;
        let rows: Vec<(HessianStencil, Herm2)> = (0..nbase * nbase * nf)
            .into_par_iter()
            .map(|k| {
                let base = k / nf;
                let b = grid.b((k % nf) as isize);
                let y = grid.y(base / nbase, base % nbase);
                Ok((HessianStencil::new(&period[base], b), model.omega_sf(y, b)?))
            })
            .collect::<Result<_>>()?;
        let (stencil, omega_sf) = rows.into_iter().unzip();
        Ok(ChartTables { grid: *grid, period, stencil, omega_sf })
    }

    /// Table slot of node `idx`.
    pub fn slot(&self, idx: usize) -> usize {
        let nf = self.grid.nf;
        (idx / (nf * nf)) * nf + idx % nf
    }

    pub fn reference(&self, slot: usize, t: f64) -> Herm2 {
        Herm2::diag(1.0 + t, 0.0) + self.omega_sf[slot].scale(t)
    }
}

/// A Hermitian 2×2 metric at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub grid: Grid,
    pub t: f64,
    pub g: Vec<Herm2>,
}

impl MetricField {
    pub fn min_eigenvalue(&self) -> f64 {
        self.g.par_iter().map(|g| g.min_eigenvalue()).reduce(|| f64::INFINITY, f64::min)
    }
}

pub(crate) fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidT(t))
    }
}

/// Checks the model invariants on the grid: `Im Z ≥ 0.1` and `ω_M > 0`.
pub fn check_model(tables: &ChartTables) -> Result<()> {
    for (k, p) in tables.period.iter().enumerate() {
        if p.z.im < POLARIZATION_MARGIN {
            return Err(Error::NotPolarized(format!("Im Z = {:.3e} < {POLARIZATION_MARGIN} at base node {k}", p.z.im)));
        }
    }
    for (slot, sf) in tables.omega_sf.iter().enumerate() {
        let omega_m = Herm2::diag(1.0, 0.0) + *sf;
        let e = omega_m.min_eigenvalue();
        if !(e > 0.0) {
            return Err(Error::NotKaehler { node: slot, min_eig: e });
        }
    }
    Ok(())
}

/// Samples `ω₀ + t ω_M` at every node.
pub fn assemble_reference(model: &ModelFibration, grid: &Grid, t: f64) -> Result<MetricField> {
    check_t(t)?;
    let tables = ChartTables::new(model, grid)?;
    check_model(&tables)?;
    reference_from_tables(&tables, t)
}

pub fn reference_from_tables(tables: &ChartTables, t: f64) -> Result<MetricField> {
    check_t(t)?;
    let grid = tables.grid;
    let g: Vec<Herm2> = (0..grid.len()).into_par_iter().map(|idx| tables.reference(tables.slot(idx), t)).collect();
    if let Some((node, e)) = g
        .iter()
        .enumerate()
        .map(|(i, g)| (i, g.min_eigenvalue()))
        .find(|(_, e)| !(*e > 0.0))
    {
        return Err(Error::NotKaehler { node, min_eig: e });
    }
    Ok(MetricField { grid, t, g })
}

/// Target volume density of the Ricci-flat problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    #[serde(skip)]
    pub f: Vec<f64>,
    /// Normalizing constant of the flat volume form (absent for manufactured data).
    pub c_t: Option<f64>,
    pub sup_abs: f64,
    /// `|∫ e^F ω² − ∫ ω²| / ∫ ω²` by the trapezoid rule.
    pub mass_defect: f64,
}

/// Trapezoid masses `(∫ e^F ω², ∫ ω²)`, with the fiber Jacobian `Im Z`.
pub fn masses(tables: &ChartTables, reference: &MetricField, f: &[f64]) -> (f64, f64) {
    let grid = tables.grid;
    let nbase = grid.nbase();
    let per_base: Vec<(f64, f64)> = (0..nbase * nbase)
        .into_par_iter()
        .map(|base| {
            let (i1, i2) = (base / nbase, base % nbase);
            let w = grid.trapezoid_weight(i1, i2) * tables.period[base].z.im;
            let mut acc = (0.0, 0.0);
            for k in 0..grid.fiber_len() {
                let idx = base * grid.fiber_len() + k;
                let vol = reference.g[idx].det() * w;
                acc.0 += f[idx].exp() * vol;
                acc.1 += vol;
            }
            acc
        })
        .collect();
    per_base.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
}

pub fn mass_defect(tables: &ChartTables, reference: &MetricField, f: &[f64]) -> f64 {
    let (with_f, plain) = masses(tables, reference, f);
    (with_f - plain).abs() / plain
}

/// `F = log(c_t / det g_ref)` with `c_t` fixed by discrete mass compatibility.
pub fn assemble_density(model: &ModelFibration, grid: &Grid, t: f64) -> Result<Density> {
    let tables = ChartTables::new(model, grid)?;
    let reference = reference_from_tables(&tables, t)?;
    Ok(density_from_tables(&tables, &reference))
}

pub fn density_from_tables(tables: &ChartTables, reference: &MetricField) -> Density {
    let zeros = vec![0.0; reference.g.len()];
    let (_, mass) = masses(tables, reference, &zeros);
    let grid = tables.grid;
    let nbase = grid.nbase();
    let flat: f64 = (0..nbase * nbase)
        .map(|base| grid.trapezoid_weight(base / nbase, base % nbase) * tables.period[base].z.im * grid.fiber_len() as f64)
        .sum();
    let c_t = mass / flat;
    density_with_constant(tables, reference, c_t)
}

/// Density for a prescribed normalizing constant (used to build deliberately
/// incompatible data).
pub fn density_with_constant(tables: &ChartTables, reference: &MetricField, c_t: f64) -> Density {
    let f: Vec<f64> = reference.g.par_iter().map(|g| (c_t / g.det()).ln()).collect();
    let sup_abs = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mass_defect = mass_defect(tables, reference, &f);
    Density { f, c_t: Some(c_t), sup_abs, mass_defect }
}

/// `φ* = ε P(y₁) P(y₂) (1 + κ cos 2πa sin 2πb)` with `P = sin⁴` of the
/// rescaled base coordinate; `φ*` and its first three derivatives vanish on
/// the base boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManufacturedSolution {
    pub epsilon: f64,
    pub kappa: f64,
}

impl Default for ManufacturedSolution {
    fn default() -> Self {
        ManufacturedSolution { epsilon: 0.02, kappa: 0.5 }
    }
}

/// `(P, P′, P″)` of `sin⁴(π (s − lo)/L)`.
fn profile(s: f64, lo: f64, len: f64) -> [f64; 3] {
    let k = PI / len;
    let (sn, cs) = (k * (s - lo)).sin_cos();
    [sn.powi(4), 4.0 * k * sn.powi(3) * cs, k * k * (12.0 * sn * sn * cs * cs - 4.0 * sn.powi(4))]
}

impl ManufacturedSolution {
    /// Value and exact chart derivatives at a node.
    pub fn jet(&self, grid: &Grid, i1: usize, i2: usize, ja: usize, jb: usize) -> (f64, [f64; 4], [f64; 10]) {
        let y = grid.y(i1, i2);
        let [p1, q1, r1] = profile(y.re, grid.base[0][0], grid.base[0][1] - grid.base[0][0]);
        let [p2, q2, r2] = profile(y.im, grid.base[1][0], grid.base[1][1] - grid.base[1][0]);
        let tau = 2.0 * PI;
        let (sa, ca) = (tau * grid.a(ja)).sin_cos();
        let (sb, cb) = (tau * grid.b(jb as isize)).sin_cos();
        let k = self.kappa;
        let f = 1.0 + k * ca * sb;
        let fa = -k * tau * sa * sb;
        let fb = k * tau * ca * cb;
        let faa = -k * tau * tau * ca * sb;
        let fbb = -k * tau * tau * ca * sb;
        let fab = -k * tau * tau * sa * cb;
        let e = self.epsilon;
        let value = e * p1 * p2 * f;
        let d1 = [e * q1 * p2 * f, e * p1 * q2 * f, e * p1 * p2 * fa, e * p1 * p2 * fb];
        let d2 = [
            e * r1 * p2 * f,
            e * p1 * r2 * f,
            e * p1 * p2 * faa,
            e * p1 * p2 * fbb,
            e * q1 * q2 * f,
            e * q1 * p2 * fa,
            e * q1 * p2 * fb,
            e * p1 * q2 * fa,
            e * p1 * q2 * fb,
            e * p1 * p2 * fab,
        ];
        debug_assert_eq!(PAIRS[9], (2, 3));
        (value, d1, d2)
    }

    pub fn field(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i1, i2, ja, jb) = grid.coords(idx);
                self.jet(grid, i1, i2, ja, jb).0
            })
            .collect()
    }

    /// `F* = log det(g_ref + ∂∂̄φ*) − log det g_ref` from the exact Hessian.
    pub fn density(&self, tables: &ChartTables, reference: &MetricField) -> Result<Density> {
        let grid = tables.grid;
        let f: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i1, i2, ja, jb) = grid.coords(idx);
                let (_, d1, d2) = self.jet(&grid, i1, i2, ja, jb);
                let m = tables.stencil[tables.slot(idx)].apply(&d1, &d2);
                let g_ref = reference.g[idx];
                let g = g_ref + Herm2::new(m[0].re, m[1], m[2].re);
                if !(g.min_eigenvalue() > 0.0) {
                    return Err(Error::NotKaehler { node: idx, min_eig: g.min_eigenvalue() });
                }
                Ok((g.det() / g_ref.det()).ln())
            })
            .collect::<Result<_>>()?;
        let sup_abs = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let defect = mass_defect(tables, reference, &f);
        Ok(Density { f, c_t: None, sup_abs, mass_defect: defect })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_reference_is_diagonal() {
        let model = ModelFibration::constant(Complex64::new(0.0, 1.0), 0.5).unwrap();
        let grid = model.grid(4, 4).unwrap();
        let r = assemble_reference(&model, &grid, 1.0).unwrap();
        for g in &r.g {
            assert!(g.max_abs_diff(&Herm2::diag(2.0, 0.5)) < 1e-15);
        }
        let d = assemble_density(&model, &grid, 0.3).unwrap();
        assert!(d.sup_abs < 1e-14);
    }

    #[test]
    fn reference_base_block_on_zero_section() {
        let model = ModelFibration::default_model().unwrap();
        let grid = model.grid(6, 4).unwrap();
        for t in [1.0, 0.1] {
            let r = assemble_reference(&model, &grid, t).unwrap();
            let idx = grid.index(2, 3, 1, 0);
            assert!((r.g[idx].a - (1.0 + t)).abs() < 1e-15);
            assert!(r.g[idx].b.norm() < 1e-15);
        }
    }

    #[test]
    fn fiber_block_scales_linearly() {
        let model = ModelFibration::default_model().unwrap();
        let grid = model.grid(4, 4).unwrap();
        let r1 = assemble_reference(&model, &grid, 1.0).unwrap();
        let r2 = assemble_reference(&model, &grid, 0.25).unwrap();
        for (a, b) in r1.g.iter().zip(&r2.g) {
            assert!((a.d * 0.25 - b.d).abs() < 1e-15);
        }
    }

    #[test]
    fn density_is_mass_compatible() {
        let model = ModelFibration::default_model().unwrap();
        let grid = model.grid(8, 4).unwrap();
        let d = assemble_density(&model, &grid, 0.1).unwrap();
        assert!(d.mass_defect < 1e-14);
        assert!(d.sup_abs > 1e-4 && d.sup_abs < 0.1);
    }

    #[test]
    fn invalid_t_is_rejected() {
        let model = ModelFibration::default_model().unwrap();
        let grid = model.grid(4, 4).unwrap();
        assert!(matches!(assemble_reference(&model, &grid, 0.0), Err(Error::InvalidT(_))));
        assert!(matches!(assemble_reference(&model, &grid, 1.5), Err(Error::InvalidT(_))));
    }

    #[test]
    fn low_polarization_margin_is_rejected() {
        let model = ModelFibration::constant(Complex64::new(0.0, 0.05), 0.5).unwrap();
        let grid = model.grid(4, 4).unwrap();
        assert!(matches!(assemble_reference(&model, &grid, 1.0), Err(Error::NotPolarized(_))));
    }

    #[test]
    fn manufactured_derivatives_match_differences() {
        let grid = Grid::new(16, 16, [[-0.5, 0.5], [-0.5, 0.5]]).unwrap();
        let m = ManufacturedSolution::default();
        let fine = Grid::new(1600, 1600, grid.base).unwrap();
        // compare ∂_{y₁} at a shared node via a fine-grid central difference
        let (_, d1, _) = m.jet(&grid, 5, 7, 3, 2);
        let (p, _, _) = m.jet(&fine, 501, 700, 300, 200);
        let (q, _, _) = m.jet(&fine, 499, 700, 300, 200);
        assert!(((p - q) / (2.0 * fine.h1()) - d1[0]).abs() < 1e-6);
    }
}
