//! The semi-flat potential `η(y, z) = Im zᵀ (Im Z(y))⁻¹ Im z` and its complex
//! Hessian.
//!
//! Coordinates are ordered `(y₁ … y_m, z₁ … z_n)`, with `z` the fiber
//! coordinate in the frame where the lattice is spanned by the columns of
//! `(1, Z(y)) S⁻¹`. A [`HermitianForm11`] stores `M_{pq̄} = ∂_p ∂̄_q f`, so the
//! form itself is `i Σ M_{pq̄} dw_p ∧ dw̄_q`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{symplectic_normalize, SkewForm, SymplecticNormalizer};
use crate::linalg::{hermitian_eigenvalues, im_part, max_abs_c, to_complex, CMat, RMat, I};
use crate::period::{HolomorphicLatticeFamily, PeriodJet};

/// A holomorphic lattice family in a fixed symplectic frame.
#[derive(Clone)]
pub struct SemiFlatPotential {
    family: Arc<dyn HolomorphicLatticeFamily>,
    normalizer: SymplecticNormalizer,
}

impl std::fmt::Debug for SemiFlatPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemiFlatPotential")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("normalizer", &self.normalizer)
            .finish()
    }
}

/// Pointwise data needed for `η` and its derivatives.
#[derive(Debug, Clone)]
pub struct PotentialJet {
    pub period: PeriodJet,
    /// `W = (Im Z)⁻¹`.
    pub w: RMat,
}

impl SemiFlatPotential {
    pub fn new(family: Arc<dyn HolomorphicLatticeFamily>, q: &SkewForm) -> Result<Self> {
        if q.n() != family.n() {
            return Err(Error::Dimension(format!("form has n = {}, family has n = {}", q.n(), family.n())));
        }
        Ok(SemiFlatPotential { family, normalizer: symplectic_normalize(q)? })
    }

    pub fn with_normalizer(family: Arc<dyn HolomorphicLatticeFamily>, normalizer: SymplecticNormalizer) -> Result<Self> {
        if normalizer.n() != family.n() {
            return Err(Error::Dimension("normalizer and family disagree on n".into()));
        }
        Ok(SemiFlatPotential { family, normalizer })
    }

    pub fn n(&self) -> usize {
        self.family.n()
    }

    pub fn m(&self) -> usize {
        self.family.m()
    }

    pub fn family(&self) -> &dyn HolomorphicLatticeFamily {
        self.family.as_ref()
    }

    pub fn normalizer(&self) -> &SymplecticNormalizer {
        &self.normalizer
    }

    pub fn jet(&self, y: &[Complex64]) -> Result<PotentialJet> {
        let period = self.family.period_jet(&self.normalizer, y)?;
        let im = im_part(&period.z);
        let im = (&im + im.transpose()) * 0.5;
        let w = im
            .cholesky()
            .ok_or_else(|| Error::NotPolarized("Im Z is not positive definite".into()))?
            .inverse();
        let w = (&w + w.transpose()) * 0.5;
        Ok(PotentialJet { period, w })
    }

    /// Lattice generators in the normalized frame, `(1, Z(y)) S⁻¹`.
    pub fn normalized_lattice(&self, y: &[Complex64]) -> Result<CMat> {
        let z = self.family.period_jet(&self.normalizer, y)?.z;
        let n = self.n();
        let mut left = CMat::zeros(n, 2 * n);
        left.view_mut((0, 0), (n, n)).copy_from(&CMat::identity(n, n));
        left.view_mut((0, n), (n, n)).copy_from(&z);
        Ok(left * to_complex(&self.normalizer.inverse()))
    }
}

fn check_fiber(pot: &SemiFlatPotential, z: &[Complex64]) -> Result<()> {
    if z.len() != pot.n() {
        return Err(Error::Dimension(format!("fiber point has {} coordinates, expected {}", z.len(), pot.n())));
    }
    Ok(())
}

fn quadratic(w: &RMat, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for l in 0..n {
        for k in 0..n {
            acc += v[l] * w[(l, k)] * v[k];
        }
    }
    acc
}

fn im_vec(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|c| c.im).collect()
}

/// `η(y, z)`.
pub fn eval_eta(pot: &SemiFlatPotential, y: &[Complex64], z: &[Complex64]) -> Result<f64> {
    check_fiber(pot, z)?;
    let jet = pot.jet(y)?;
    Ok(eta_from_jet(&jet, z))
}

pub fn eta_from_jet(jet: &PotentialJet, z: &[Complex64]) -> f64 {
    quadratic(&jet.w, &im_vec(z))
}

/// Hermitian coefficient matrix of a real (1,1)-form on ℂ^{m+n}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermitianForm11 {
    pub m: usize,
    pub n: usize,
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub coeffs: CMat,
}

impl HermitianForm11 {
    /// Builds the form from its upper triangle (diagonal real parts kept).
    pub fn from_upper(m: usize, n: usize, upper: &CMat) -> Self {
        let d = m + n;
        let mut coeffs = CMat::zeros(d, d);
        for p in 0..d {
            coeffs[(p, p)] = Complex64::new(upper[(p, p)].re, 0.0);
            for q in p + 1..d {
                coeffs[(p, q)] = upper[(p, q)];
                coeffs[(q, p)] = upper[(p, q)].conj();
            }
        }
        HermitianForm11 { m, n, coeffs }
    }

    pub fn base_block(&self) -> CMat {
        self.coeffs.view((0, 0), (self.m, self.m)).into_owned()
    }

    /// `M_{y z̄}` block (m×n).
    pub fn mixed_block(&self) -> CMat {
        self.coeffs.view((0, self.m), (self.m, self.n)).into_owned()
    }

    pub fn fiber_block(&self) -> CMat {
        self.coeffs.view((self.m, self.m), (self.n, self.n)).into_owned()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.coeffs)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Pullback `Jᵀ M J̄` along a holomorphic map with Jacobian `J`
    /// (`J[p][a] = ∂w_p/∂u_a`).
    pub fn pullback(&self, jacobian: &CMat) -> HermitianForm11 {
        let pulled = jacobian.transpose() * &self.coeffs * jacobian.conjugate();
        HermitianForm11::from_upper(self.m, self.n, &pulled)
    }

    pub fn max_abs_diff(&self, other: &HermitianForm11) -> f64 {
        max_abs_c(&(&self.coeffs - &other.coeffs))
    }
}

/// Wirtinger derivatives of `W = (Im Z)⁻¹`: `∂_j W` and `∂_j ∂̄_k W`.
fn w_derivatives(jet: &PotentialJet) -> (Vec<CMat>, Vec<Vec<CMat>>) {
    let m = jet.period.m();
    let w = to_complex(&jet.w);
    // ∂_j Im Z = Z_j / (2i),  ∂̄_k Im Z = conj(Z_k) · i/2
    let y: Vec<CMat> = jet.period.dz.iter().map(|d| d * (-0.5 * I)).collect();
    let ybar: Vec<CMat> = jet.period.dz.iter().map(|d| d.conjugate() * (0.5 * I)).collect();
    let dw: Vec<CMat> = y.iter().map(|yj| -(&w * yj * &w)).collect();
    let ddw = (0..m)
        .map(|j| {
            (0..m)
                .map(|k| {
                    let a = &w * &ybar[k] * &w * &y[j] * &w;
                    let b = &w * &y[j] * &w * &ybar[k] * &w;
                    a + b
                })
                .collect()
        })
        .collect();
    (dw, ddw)
}

/// Closed-form `∂∂̄η` at `(y, z)`.
pub fn eval_ddbar_eta(pot: &SemiFlatPotential, y: &[Complex64], z: &[Complex64]) -> Result<HermitianForm11> {
    check_fiber(pot, z)?;
    let jet = pot.jet(y)?;
    Ok(ddbar_from_jet(&jet, z))
}

pub fn ddbar_from_jet(jet: &PotentialJet, z: &[Complex64]) -> HermitianForm11 {
    let m = jet.period.m();
    let n = jet.period.n();
    let v = CMat::from_iterator(n, 1, z.iter().map(|c| Complex64::new(c.im, 0.0)));
    let (dw, ddw) = w_derivatives(jet);
    let mut upper = CMat::zeros(m + n, m + n);
    for j in 0..m {
        for k in j..m {
            upper[(j, k)] = (v.transpose() * &ddw[j][k] * &v)[(0, 0)];
        }
        let dwv = &dw[j] * &v;
        for l in 0..n {
            upper[(j, m + l)] = I * dwv[(l, 0)];
        }
    }
    for l in 0..n {
        for k in l..n {
            upper[(m + l, m + k)] = Complex64::new(0.5 * jet.w[(l, k)], 0.0);
        }
    }
    HermitianForm11::from_upper(m, n, &upper)
}

/// Centered finite-difference `∂∂̄f` of a real function on ℂᴺ:
/// `∂_a ∂̄_b f = ¼[f_{x_a x_b} + f_{y_a y_b} + i(f_{x_a y_b} − f_{y_a x_b})]`.
pub fn ddbar_fd<F>(f: &F, p: &[Complex64], h: f64) -> CMat
where
    F: Fn(&[Complex64]) -> f64 + ?Sized,
{
    let dim = p.len();
    let real = 2 * dim;
    let shifted = |moves: &[(usize, f64)]| {
        let mut q = p.to_vec();
        for &(r, s) in moves {
            if r % 2 == 0 {
                q[r / 2].re += s;
            } else {
                q[r / 2].im += s;
            }
        }
        f(&q)
    };
    let f0 = f(p);
    let mut hess = RMat::zeros(real, real);
    for r in 0..real {
        hess[(r, r)] = (shifted(&[(r, h)]) - 2.0 * f0 + shifted(&[(r, -h)])) / (h * h);
        for s in r + 1..real {
            let v = (shifted(&[(r, h), (s, h)]) - shifted(&[(r, h), (s, -h)]) - shifted(&[(r, -h), (s, h)])
                + shifted(&[(r, -h), (s, -h)]))
                / (4.0 * h * h);
            hess[(r, s)] = v;
            hess[(s, r)] = v;
        }
    }
    CMat::from_fn(dim, dim, |a, b| {
        let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
        Complex64::new(0.25 * (hess[(xa, xb)] + hess[(ya, yb)]), 0.25 * (hess[(xa, yb)] - hess[(ya, xb)]))
    })
}

fn join(y: &[Complex64], z: &[Complex64]) -> Vec<Complex64> {
    y.iter().chain(z).copied().collect()
}

/// Finite-difference `∂∂̄η` for cross-checking the closed form. The
/// stencil must stay inside the base box.
pub fn ddbar_eta_fd(pot: &SemiFlatPotential, y: &[Complex64], z: &[Complex64], h: f64) -> Result<CMat> {
    check_fiber(pot, z)?;
    let m = pot.m();
    let lo: Vec<Complex64> = y.iter().map(|c| c - Complex64::new(h, h)).collect();
    let hi: Vec<Complex64> = y.iter().map(|c| c + Complex64::new(h, h)).collect();
    if !pot.family().base().contains(&lo) || !pot.family().base().contains(&hi) {
        return Err(Error::OutOfDomain);
    }
    let f = |p: &[Complex64]| eval_eta(pot, &p[..m], &p[m..]).unwrap_or(f64::NAN);
    Ok(ddbar_fd(&f, &join(y, z), h))
}

/// Both evaluations of `η(y, z + σ(y)) − η(y, z)` for `σ = Σ λᵢ vᵢ(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TranslationDefect {
    pub direct: f64,
    pub closed_form: f64,
}

impl TranslationDefect {
    pub fn gap(&self) -> f64 {
        (self.direct - self.closed_form).abs()
    }
}

/// `μ = C λ' + D λ''` from the lower blocks of `S⁻¹`.
fn defect_mu(pot: &SemiFlatPotential, lambda: &[f64]) -> Result<Vec<f64>> {
    let n = pot.n();
    if lambda.len() != 2 * n {
        return Err(Error::Dimension(format!("λ must have {} entries", 2 * n)));
    }
    let u = pot.normalizer.inverse() * DMatrix::from_column_slice(2 * n, 1, lambda);
    Ok((0..n).map(|l| u[(n + l, 0)]).collect())
}

/// Lattice section `σ(y) = (1, Z) S⁻¹ λ` and its `y`-derivatives `Z_j μ`.
pub fn lattice_section(pot: &SemiFlatPotential, lambda: &[f64], jet: &PotentialJet) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let n = pot.n();
    if lambda.len() != 2 * n {
        return Err(Error::Dimension(format!("λ must have {} entries", 2 * n)));
    }
    let u = pot.normalizer.inverse() * DMatrix::from_column_slice(2 * n, 1, lambda);
    let mu = CMat::from_fn(n, 1, |l, _| Complex64::new(u[(n + l, 0)], 0.0));
    let zmu = &jet.period.z * &mu;
    let sigma = (0..n).map(|l| Complex64::new(u[(l, 0)], 0.0) + zmu[(l, 0)]).collect();
    let dsigma = jet.period.dz.iter().map(|d| (d * &mu).iter().copied().collect()).collect();
    Ok((sigma, dsigma))
}

pub fn translation_defect(pot: &SemiFlatPotential, lambda: &[f64], y: &[Complex64], z: &[Complex64]) -> Result<TranslationDefect> {
    check_fiber(pot, z)?;
    let jet = pot.jet(y)?;
    let (sigma, _) = lattice_section(pot, lambda, &jet)?;
    let moved: Vec<Complex64> = z.iter().zip(&sigma).map(|(a, b)| a + b).collect();
    let direct = eta_from_jet(&jet, &moved) - eta_from_jet(&jet, z);
    Ok(TranslationDefect { direct, closed_form: closed_form_defect(pot, &jet, lambda, z)? })
}

/// `2 μ·Im z + μᵀ (Im Z) μ`.
fn closed_form_defect(pot: &SemiFlatPotential, jet: &PotentialJet, lambda: &[f64], z: &[Complex64]) -> Result<f64> {
    let mu = defect_mu(pot, lambda)?;
    let v = im_vec(z);
    let im = im_part(&jet.period.z);
    let linear: f64 = mu.iter().zip(&v).map(|(a, b)| 2.0 * a * b).sum();
    Ok(linear + quadratic(&im, &mu))
}

/// The closed-form defect as a function of the joint point `(y, z)`.
pub fn defect_field<'a>(pot: &'a SemiFlatPotential, lambda: &'a [f64]) -> impl Fn(&[Complex64]) -> f64 + Sync + 'a {
    let m = pot.m();
    move |p: &[Complex64]| {
        pot.jet(&p[..m])
            .and_then(|jet| closed_form_defect(pot, &jet, lambda, &p[m..]))
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PluriharmonicReport {
    /// `max |∂∂̄f|` over the grid.
    pub max_residual: f64,
    pub h: f64,
    /// `max_residual / h²`.
    pub constant: f64,
    pub points: usize,
}

/// Largest finite-difference `∂∂̄f` entry over a grid of joint points.
/// NaN evaluations propagate into the residual.
pub fn check_pluriharmonic<F>(f: &F, grid: &[Vec<Complex64>], h: f64) -> PluriharmonicReport
where
    F: Fn(&[Complex64]) -> f64 + Sync + ?Sized,
{
    let residuals: Vec<f64> = grid.par_iter().map(|p| {
        let hess = ddbar_fd(f, p, h);
        if hess.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            f64::NAN
        } else {
            max_abs_c(&hess)
        }
    }).collect();
    let max_residual = residuals.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) });
    PluriharmonicReport { max_residual, h, constant: max_residual / (h * h), points: grid.len() }
}

/// Observed order `log(r₁/r₂) / log(h₁/h₂)` between two step sizes.
pub fn observed_order(r1: f64, h1: f64, r2: f64, h2: f64) -> f64 {
    (r1 / r2).ln() / (h1 / h2).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemipositivityReport {
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of the fiber block `W/2` over the grid.
    pub min_fiber_eigenvalue: f64,
    /// Largest base or mixed entry at the zero section.
    pub zero_section_offdiag: f64,
    /// Smallest rank of `∂∂̄η` at the zero section.
    pub zero_section_rank: usize,
    pub points: usize,
}

impl SemipositivityReport {
    pub fn passes(&self, n: usize) -> bool {
        self.min_eigenvalue >= -1e-9 && self.zero_section_offdiag <= 1e-12 && self.zero_section_rank == n
    }
}

/// Sweeps `∂∂̄η` over the grid of `(y, z)` points; for every base point also
/// evaluates the zero section.
pub fn check_semipositive(pot: &SemiFlatPotential, grid: &[(Vec<Complex64>, Vec<Complex64>)]) -> Result<SemipositivityReport> {
    let n = pot.n();
    let rows: Vec<(f64, f64, f64, usize)> = grid
        .par_iter()
        .map(|(y, z)| {
            let jet = pot.jet(y)?;
            let form = ddbar_from_jet(&jet, z);
            let zero = ddbar_from_jet(&jet, &vec![Complex64::new(0.0, 0.0); n]);
            let fiber_min = hermitian_eigenvalues(&form.fiber_block())[0];
            let offdiag = max_abs_c(&zero.base_block()).max(max_abs_c(&zero.mixed_block()));
            let eig = zero.eigenvalues();
            let scale = eig.last().copied().unwrap_or(0.0).abs().max(1e-300);
            let rank = eig.iter().filter(|&&e| e > 1e-12 * scale).count();
            Ok((form.min_eigenvalue(), fiber_min, offdiag, rank))
        })
        .collect::<Result<_>>()?;
    let mut report = SemipositivityReport {
        min_eigenvalue: f64::INFINITY,
        min_fiber_eigenvalue: f64::INFINITY,
        zero_section_offdiag: 0.0,
        zero_section_rank: usize::MAX,
        points: rows.len(),
    };
    for (e, f, o, r) in rows {
        report.min_eigenvalue = report.min_eigenvalue.min(e);
        report.min_fiber_eigenvalue = report.min_fiber_eigenvalue.min(f);
        report.zero_section_offdiag = report.zero_section_offdiag.max(o);
        report.zero_section_rank = report.zero_section_rank.min(r);
    }
    Ok(report)
}

/// `‖T_σ^*(∂∂̄η) − ∂∂̄η‖_max` at `(y, z)` for the translation by `σ = Σλᵢvᵢ`.
pub fn deck_invariance(pot: &SemiFlatPotential, lambda: &[f64], y: &[Complex64], z: &[Complex64]) -> Result<f64> {
    check_fiber(pot, z)?;
    let (m, n) = (pot.m(), pot.n());
    let jet = pot.jet(y)?;
    let (sigma, dsigma) = lattice_section(pot, lambda, &jet)?;
    let moved: Vec<Complex64> = z.iter().zip(&sigma).map(|(a, b)| a + b).collect();
    let here = ddbar_from_jet(&jet, z);
    let there = ddbar_from_jet(&jet, &moved);
    let mut jac = CMat::identity(m + n, m + n);
    for (j, ds) in dsigma.iter().enumerate() {
        for l in 0..n {
            jac[(m + l, j)] = ds[l];
        }
    }
    Ok(there.pullback(&jac).max_abs_diff(&here))
}

/// `|t·η(y, z/√t) − η(y, z)|`.
pub fn rescaling_identity(pot: &SemiFlatPotential, t: f64, y: &[Complex64], z: &[Complex64]) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidT(t));
    }
    check_fiber(pot, z)?;
    let jet = pot.jet(y)?;
    let s = t.sqrt();
    let scaled: Vec<Complex64> = z.iter().map(|c| c / s).collect();
    Ok((t * eta_from_jet(&jet, &scaled) - eta_from_jet(&jet, z)).abs())
}

/// Checks selectable in [`verify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Scaling,
    Rescaling,
    FiberBlock,
    ZeroSection,
    FiniteDifference,
    Pluriharmonic,
    Semipositive,
    Deck,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::Scaling,
        Check::Rescaling,
        Check::FiberBlock,
        Check::ZeroSection,
        Check::FiniteDifference,
        Check::Pluriharmonic,
        Check::Semipositive,
        Check::Deck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Scaling => "scaling",
            Check::Rescaling => "rescaling",
            Check::FiberBlock => "fiber-block",
            Check::ZeroSection => "zero-section",
            Check::FiniteDifference => "finite-difference",
            Check::Pluriharmonic => "pluriharmonic",
            Check::Semipositive => "semipositive",
            Check::Deck => "deck",
        }
    }
}

impl std::str::FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown check `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub checks: Vec<Check>,
    /// Points per real dimension.
    pub grid: usize,
    /// Finite-difference step.
    pub h: f64,
    /// Upper bound on joint sample points; larger tensor grids are subsampled.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { checks: Check::ALL.to_vec(), grid: 9, h: 1e-3, max_points: 6561, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub n: usize,
    pub m: usize,
    pub points: usize,
    pub outcomes: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

/// Joint sample points: base grid shrunk away from the boundary so that
/// finite-difference stencils stay inside, times a fiber grid
/// `z = a + Z(y) b` over the unit cell.
pub fn sample_points(pot: &SemiFlatPotential, k: usize, margin: f64, max_points: usize, seed: u64) -> Result<Vec<(Vec<Complex64>, Vec<Complex64>)>> {
    let n = pot.n();
    let base = pot.family().base();
    let shrunk = crate::period::BaseBox::new(
        base.intervals.iter().map(|&[lo, hi]| {
            let pad = margin.min(0.25 * (hi - lo));
            [lo + pad, hi - pad]
        }).collect(),
    )?;
    let ys = shrunk.grid(k);
    let cell: Vec<f64> = if k <= 1 { vec![0.5] } else { (0..k).map(|i| i as f64 / (k - 1) as f64).collect() };
    let fiber_count = cell.len().pow(2 * n as u32);
    let total = ys.len() * fiber_count;
    let index_of = |idx: usize| -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let y = ys[idx / fiber_count].clone();
        let mut f = idx % fiber_count;
        let mut coords = Vec::with_capacity(2 * n);
        for _ in 0..2 * n {
            coords.push(cell[f % cell.len()]);
            f /= cell.len();
        }
        let zmat = pot.family().period_jet(pot.normalizer(), &y)?.z;
        let z = (0..n)
            .map(|l| {
                let mut acc = Complex64::new(coords[l], 0.0);
                for k in 0..n {
                    acc += zmat[(l, k)] * coords[n + k];
                }
                acc
            })
            .collect();
        Ok((y, z))
    };
    if total <= max_points {
        (0..total).map(index_of).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks: Vec<usize> = (0..max_points).map(|_| rng.random_range(0..total)).collect();
        picks.sort_unstable();
        picks.dedup();
        picks.into_iter().map(index_of).collect()
    }
}

fn outcome(check: Check, value: f64, tolerance: f64, detail: String) -> CheckOutcome {
    CheckOutcome { check, passed: value <= tolerance, value, tolerance, detail }
}

/// Runs the selected identity and invariance checks on a sample grid.
pub fn verify(pot: &SemiFlatPotential, opts: &VerifyOptions) -> Result<VerifyReport> {
    let (m, n) = (pot.m(), pot.n());
    let margin = 4.0 * opts.h.max(1e-4);
    let points = sample_points(pot, opts.grid, margin, opts.max_points, opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut outcomes = Vec::new();
    for &check in &opts.checks {
        let o = match check {
            Check::Scaling => {
                let lambdas: Vec<f64> = (0..8).map(|_| rng.random_range(-4.0..4.0)).collect();
                let worst = points
                    .par_iter()
                    .map(|(y, z)| -> Result<f64> {
                        let jet = pot.jet(y)?;
                        let e = eta_from_jet(&jet, z);
                        Ok(lambdas.iter().map(|&l| {
                            let zl: Vec<Complex64> = z.iter().map(|c| c * l).collect();
                            (eta_from_jet(&jet, &zl) - l * l * e).abs() / (l * l * e).abs().max(1e-300)
                        }).fold(0.0, f64::max))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                outcome(check, worst, 1e-13, "max relative |η(y,λz) − λ²η(y,z)|".into())
            }
            Check::Rescaling => {
                let ts = [1.0, 0.3, 0.1, 0.03, 0.01];
                let worst = points
                    .par_iter()
                    .map(|(y, z)| -> Result<f64> {
                        let e = eval_eta(pot, y, z)?.abs().max(1e-300);
                        let mut w: f64 = 0.0;
                        for &t in &ts {
                            w = w.max(rescaling_identity(pot, t, y, z)? / e);
                        }
                        Ok(w)
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                outcome(check, worst, 1e-13, "max relative |tη(y,z/√t) − η(y,z)|".into())
            }
            Check::FiberBlock => {
                let worst = points
                    .par_iter()
                    .map(|(y, z)| -> Result<f64> {
                        let jet = pot.jet(y)?;
                        let f = ddbar_from_jet(&jet, z).fiber_block();
                        Ok(max_abs_c(&(f - to_complex(&(&jet.w * 0.5)))))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                outcome(check, worst, 0.0, "max |fiber block − W/2|".into())
            }
            Check::ZeroSection => {
                let r = check_semipositive(pot, &points)?;
                let rank_gap = if r.zero_section_rank == n { 0.0 } else { f64::INFINITY };
                outcome(check, r.zero_section_offdiag + rank_gap, 1e-12, format!("rank at zero section {}", r.zero_section_rank))
            }
            Check::FiniteDifference => {
                let mut worst = [0.0f64; 2];
                for (slot, h) in [opts.h, opts.h / 10.0].into_iter().enumerate() {
                    worst[slot] = points
                        .par_iter()
                        .map(|(y, z)| -> Result<f64> {
                            let closed = eval_ddbar_eta(pot, y, z)?;
                            let fd = ddbar_eta_fd(pot, y, z, h)?;
                            let scale = 1.0 + max_abs_c(&closed.coeffs);
                            Ok(max_abs_c(&(fd - &closed.coeffs)) / scale)
                        })
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                }
                outcome(check, worst[0].max(worst[1]), 1e-5, format!("relative FD gap {:.3e} at h, {:.3e} at h/10", worst[0], worst[1]))
            }
            Check::Pluriharmonic => {
                let lambdas: Vec<Vec<f64>> = (0..4).map(|_| (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
                let joint: Vec<Vec<Complex64>> = points.iter().map(|(y, z)| join(y, z)).collect();
                let mut worst: f64 = 0.0;
                for lambda in &lambdas {
                    let field = defect_field(pot, lambda);
                    let r = check_pluriharmonic(&field, &joint, opts.h);
                    worst = if r.max_residual.is_nan() { f64::NAN } else { worst.max(r.max_residual) };
                }
                outcome(check, worst, 1e-6, format!("max |∂∂̄(η∘T_σ − η)| at h = {}", opts.h))
            }
            Check::Semipositive => {
                let r = check_semipositive(pot, &points)?;
                outcome(check, -r.min_eigenvalue, 1e-9, format!("min eigenvalue {:.3e}", r.min_eigenvalue))
            }
            Check::Deck => {
                let worst = points
                    .par_iter()
                    .map(|(y, z)| -> Result<f64> {
                        let mut w: f64 = 0.0;
                        for i in 0..2 * n {
                            let mut lambda = vec![0.0; 2 * n];
                            lambda[i] = 1.0;
                            w = w.max(deck_invariance(pot, &lambda, y, z)?);
                        }
                        Ok(w)
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                outcome(check, worst, 1e-9, "max |T*∂∂̄η − ∂∂̄η| over generators".into())
            }
        };
        outcomes.push(o);
    }
    Ok(VerifyReport { n, m, points: points.len(), outcomes })
}
