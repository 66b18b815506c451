//! Period map into the Siegel upper half-space.
//!
//! For lattice generators `T = (v₁ … v₂ₙ)` and a symplectic frame `S` of the
//! polarization, `TS = R(1, Z)` with `Z` in the Siegel upper half-space. The
//! flat fiber metric is `ω = i Σ H dz ∧ dz̄` with
//! `H⁻¹ = 2 R̄ (Im Z) Rᵀ = i T̄ Q⁻¹ Tᵀ`.

mod family;
mod gauss_manin;

pub use family::{
    holomorphy_audit, BaseBox, EntrywiseFamily, HoloFn, HolomorphicLatticeFamily, HolomorphyAudit,
    LatticeJet, PeriodJet, Polynomial,
};
pub use gauss_manin::{gauss_manin_constancy, semiflat_fiber_forms, GaussManinReport};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{symplectic_normalize, SkewForm, SymplecticNormalizer};
use crate::linalg::{condition_number, im_part, max_abs_c, realify_columns, symmetric_eigenvalues, to_complex, CMat, RMat};

/// Largest accepted condition number of the realified lattice basis.
pub const MAX_BASIS_CONDITION: f64 = 1e12;
/// Symmetry tolerance for Siegel membership.
pub const SIEGEL_SYMMETRY_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of `Im Z`.
pub const SIEGEL_MIN_EIGENVALUE: f64 = 1e-12;
/// Agreement required between the two closed forms of `H⁻¹`.
pub const METRIC_FORMULA_TOL: f64 = 1e-9;

/// Generators of a full lattice in ℂⁿ, stored as the columns of an n×2n matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBasis {
    t: CMat,
    condition: f64,
}

impl LatticeBasis {
    pub fn new(t: CMat) -> Result<Self> {
        let (n, cols) = t.shape();
        if n == 0 || cols != 2 * n {
            return Err(Error::Dimension(format!("lattice basis must be n×2n, got {n}×{cols}")));
        }
        let condition = condition_number(&realify_columns(&t));
        if !(condition <= MAX_BASIS_CONDITION) {
            return Err(Error::BadBasis { cond: condition });
        }
        Ok(LatticeBasis { t, condition })
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.t
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn columns(&self) -> Vec<Vec<Complex64>> {
        (0..self.t.ncols()).map(|j| self.t.column(j).iter().copied().collect()).collect()
    }

    /// `T·A` for an integral change of basis.
    pub fn rebased(&self, a: &nalgebra::DMatrix<i64>) -> Result<Self> {
        LatticeBasis::new(&self.t * to_complex(&a.map(|x| x as f64)))
    }
}

/// `(R, Z)` with `TS = R(1, Z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodData {
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub r: CMat,
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub z: CMat,
    /// `‖TS − R(1, Z)‖_max`.
    pub factorization_residual: f64,
}

/// Checks `Z = Zᵀ` and `Im Z ≻ 0` with the module tolerances.
pub fn check_siegel(z: &CMat) -> Result<()> {
    let scale = max_abs_c(z).max(1.0);
    let asym = max_abs_c(&(z - z.transpose()));
    if asym > SIEGEL_SYMMETRY_TOL * scale {
        return Err(Error::NotPolarized(format!("period matrix is not symmetric (gap {asym:.3e})")));
    }
    let ev = symmetric_eigenvalues(&im_part(z));
    if !(ev[0] > SIEGEL_MIN_EIGENVALUE) {
        return Err(Error::NotPolarized(format!("Im Z is not positive definite (λ_min = {:.3e})", ev[0])));
    }
    Ok(())
}

pub fn is_in_siegel_space(z: &CMat) -> bool {
    check_siegel(z).is_ok()
}

/// Splits `TS` into `R(1, Z)` and validates Siegel membership.
pub fn compute_period(t: &LatticeBasis, s: &SymplecticNormalizer) -> Result<PeriodData> {
    let n = t.n();
    if s.n() != n {
        return Err(Error::Dimension("normalizer and lattice have different ranks".into()));
    }
    let ts = t.matrix() * to_complex(s.matrix());
    let r = ts.columns(0, n).into_owned();
    let x2 = ts.columns(n, n).into_owned();
    let cond = complex_independence_condition(&r);
    if !(cond <= MAX_BASIS_CONDITION) {
        return Err(Error::NotPolarized("first n columns of TS are C-linearly dependent".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPolarized("first n columns of TS are C-linearly dependent".into()))?;
    let z = &r_inv * x2;
    check_siegel(&z)?;
    let mut one_z = CMat::zeros(n, 2 * n);
    for i in 0..n {
        one_z[(i, i)] = Complex64::new(1.0, 0.0);
    }
    one_z.columns_mut(n, n).copy_from(&z);
    let factorization_residual = max_abs_c(&(ts - &r * one_z));
    Ok(PeriodData { r, z, factorization_residual })
}

/// Condition number of the realified columns of `(R, iR)`; finite iff the
/// columns of `R` are ℂ-linearly independent.
fn complex_independence_condition(r: &CMat) -> f64 {
    let n = r.nrows();
    let ir = r.map(|z| z * Complex64::new(0.0, 1.0));
    let mut out = RMat::zeros(2 * n, 2 * n);
    out.columns_mut(0, n).copy_from(&realify_columns(r));
    out.columns_mut(n, n).copy_from(&realify_columns(&ir));
    condition_number(&out)
}

/// Flat fiber metric `H` together with both closed forms of `H⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermitianMetric {
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub h: CMat,
    /// `2 R̄ (Im Z) Rᵀ`.
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub h_inv_period: CMat,
    /// `i T̄ Q⁻¹ Tᵀ`.
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub h_inv_lattice: CMat,
    pub formula_gap: f64,
}

/// `2 R̄ (Im Z) Rᵀ`.
pub fn inverse_metric_from_period(p: &PeriodData) -> CMat {
    let y = to_complex(&im_part(&p.z));
    p.r.map(|z| z.conj()) * y * p.r.transpose() * Complex64::new(2.0, 0.0)
}

/// `i T̄ Q⁻¹ Tᵀ`.
pub fn inverse_metric_from_lattice(t: &LatticeBasis, q: &SkewForm) -> CMat {
    let q_inv = q.matrix().clone().try_inverse().expect("skew form is nondegenerate");
    t.matrix().map(|z| z.conj()) * to_complex(&q_inv) * t.matrix().transpose() * Complex64::new(0.0, 1.0)
}

/// Hermitian matrix of the flat fiber form determined by `(T, Q)`.
pub fn hermitian_metric(t: &LatticeBasis, q: &SkewForm) -> Result<HermitianMetric> {
    let s = symplectic_normalize(q)?;
    let period = compute_period(t, &s)?;
    hermitian_metric_with(t, q, &period)
}

/// Same as [`hermitian_metric`] for an already computed period.
pub fn hermitian_metric_with(t: &LatticeBasis, q: &SkewForm, period: &PeriodData) -> Result<HermitianMetric> {
    let h_inv_period = inverse_metric_from_period(period);
    let h_inv_lattice = inverse_metric_from_lattice(t, q);
    let scale = max_abs_c(&h_inv_period).max(1.0);
    let formula_gap = max_abs_c(&(&h_inv_period - &h_inv_lattice));
    if formula_gap > METRIC_FORMULA_TOL * scale {
        return Err(Error::NotPolarized(format!(
            "closed forms of H⁻¹ disagree by {formula_gap:.3e}; Q does not polarize T"
        )));
    }
    let herm = (&h_inv_period + h_inv_period.adjoint()) * Complex64::new(0.5, 0.0);
    let h = herm
        .try_inverse()
        .ok_or_else(|| Error::NotPolarized("H⁻¹ is singular".into()))?;
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(HermitianMetric { h, h_inv_period, h_inv_lattice, formula_gap })
}

/// Lattice data in the convention `T = R₀(Δ, Z₀)` for integral block-form `Q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GtzData {
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub r0: CMat,
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub z0: CMat,
    pub divisors: Vec<i64>,
    /// `R = R₀Σ`.
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub r: CMat,
    /// `Z = Σ⁻¹ Z₀ Σ⁻¹`.
    #[serde(serialize_with = "crate::io::ser_cmat")]
    pub z: CMat,
    /// `‖T − R₀(Δ, Z₀)‖_max`.
    pub residual: f64,
    /// Distance between `(R, Z)` and the period computed with `S = diag(Σ⁻¹, Σ⁻¹)`.
    pub roundtrip_residual: f64,
}

/// Converts to the `(R₀, Z₀, Δ)` convention. `Q` must already be in block form.
pub fn gtz_convert(t: &LatticeBasis, q: &SkewForm) -> Result<GtzData> {
    let divisors = q.block_divisors().ok_or(Error::NotNormalForm)?;
    let n = t.n();
    if divisors.len() != n {
        return Err(Error::Dimension("lattice and form ranks differ".into()));
    }
    let sigma: Vec<f64> = divisors.iter().map(|&d| (d as f64).sqrt()).collect();
    let delta_inv = CMat::from_fn(n, n, |i, j| if i == j { Complex64::new(1.0 / divisors[i] as f64, 0.0) } else { Complex64::new(0.0, 0.0) });
    let r0 = t.matrix().columns(0, n) * delta_inv;
    let r0_inv = r0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPolarized("first n lattice vectors are C-dependent".into()))?;
    let z0 = &r0_inv * t.matrix().columns(n, n);
    check_siegel(&z0)?;

    let mut delta_z0 = CMat::zeros(n, 2 * n);
    for i in 0..n {
        delta_z0[(i, i)] = Complex64::new(divisors[i] as f64, 0.0);
    }
    delta_z0.columns_mut(n, n).copy_from(&z0);
    let residual = max_abs_c(&(t.matrix() - &r0 * delta_z0));

    let sig = CMat::from_fn(n, n, |i, j| if i == j { Complex64::new(sigma[i], 0.0) } else { Complex64::new(0.0, 0.0) });
    let sig_inv = CMat::from_fn(n, n, |i, j| if i == j { Complex64::new(1.0 / sigma[i], 0.0) } else { Complex64::new(0.0, 0.0) });
    let r = &r0 * &sig;
    let z = &sig_inv * &z0 * &sig_inv;

    let mut s = RMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        s[(k, k)] = 1.0 / sigma[k];
        s[(n + k, n + k)] = 1.0 / sigma[k];
    }
    let normalizer = SymplecticNormalizer::new(s, q)?;
    let direct = compute_period(t, &normalizer)?;
    let roundtrip_residual = max_abs_c(&(&direct.r - &r)).max(max_abs_c(&(&direct.z - &z)));
    Ok(GtzData { r0, z0, divisors, r, z, residual, roundtrip_residual })
}

/// Applies the elementary-divisor change of basis first, so any integral
/// polarization can be converted. Returns the rebased lattice alongside.
pub fn gtz_convert_any(t: &LatticeBasis, q: &SkewForm) -> Result<(GtzData, LatticeBasis, SkewForm)> {
    let fr = crate::lattice::frobenius_normal_form(q)?;
    let rebased = t.rebased(&fr.a)?;
    let block = fr.block_form();
    let data = gtz_convert(&rebased, &block)?;
    Ok((data, rebased, block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn tau_lattice(tau: Complex64) -> LatticeBasis {
        LatticeBasis::new(CMat::from_row_slice(1, 2, &[c(1.0, 0.0), tau])).unwrap()
    }

    #[test]
    fn elliptic_curve_period_is_tau() {
        let tau = c(0.3, 1.7);
        let p = compute_period(&tau_lattice(tau), &SymplecticNormalizer::identity(1)).unwrap();
        assert!((p.r[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((p.z[(0, 0)] - tau).norm() < 1e-15);
        assert!(p.factorization_residual < 1e-15);
    }

    #[test]
    fn diagonal_period_in_dimension_two() {
        let t = CMat::from_row_slice(2, 4, &[
            c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0),
            c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 2.0),
        ]);
        let p = compute_period(&LatticeBasis::new(t).unwrap(), &SymplecticNormalizer::identity(2)).unwrap();
        assert!(max_abs_c(&(&p.r - CMat::identity(2, 2))) < 1e-15);
        let z0 = CMat::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 2.0)]);
        assert!(max_abs_c(&(&p.z - z0)) < 1e-15);
    }

    #[test]
    fn negative_orientation_is_not_polarized() {
        let err = compute_period(&tau_lattice(c(0.3, -1.7)), &SymplecticNormalizer::identity(1)).unwrap_err();
        assert!(matches!(err, Error::NotPolarized(_)));
        let err = hermitian_metric(&tau_lattice(c(0.3, -1.7)), &SkewForm::standard(1)).unwrap_err();
        assert!(matches!(err, Error::NotPolarized(_)));
    }

    #[test]
    fn dependent_columns_rejected() {
        let t = CMat::from_row_slice(1, 2, &[c(1.0, 0.0), c(2.0, 0.0)]);
        assert!(matches!(LatticeBasis::new(t), Err(Error::BadBasis { .. })));
    }

    #[test]
    fn elliptic_metric_closed_form() {
        // iT̄Q⁻¹Tᵀ = i(1, τ̄)(−τ, 1)ᵀ = i(τ̄ − τ) = 2 Im τ
        let tau = c(0.3, 1.7);
        let m = hermitian_metric(&tau_lattice(tau), &SkewForm::standard(1)).unwrap();
        let want = 1.0 / (2.0 * 1.7);
        assert!((m.h[(0, 0)] - c(want, 0.0)).norm() < 1e-14);
        assert!((m.h[(0, 0)].re - 0.2941176).abs() < 1e-7);

        let m = hermitian_metric(&tau_lattice(c(0.0, 1.0)), &SkewForm::standard(1)).unwrap();
        assert!((m.h[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gtz_trivial_and_scaled() {
        let tau = c(0.3, 1.7);
        let g = gtz_convert(&tau_lattice(tau), &SkewForm::standard(1)).unwrap();
        assert!((g.z0[(0, 0)] - tau).norm() < 1e-15);
        assert!((g.z[(0, 0)] - tau).norm() < 1e-15);
        assert!((g.r0[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);

        // T = R₀(Δ, Z₀) with Δ = 4, R₀ = 0.5 + 0.2i, Z₀ = 0.4 + 3i.
        let (r0, z0) = (c(0.5, 0.2), c(0.4, 3.0));
        let t = LatticeBasis::new(CMat::from_row_slice(1, 2, &[r0 * 4.0, r0 * z0])).unwrap();
        let g = gtz_convert(&t, &SkewForm::block(&[4]).unwrap()).unwrap();
        assert!((g.r0[(0, 0)] - r0).norm() < 1e-14);
        assert!((g.z0[(0, 0)] - z0).norm() < 1e-14);
        assert!((g.z[(0, 0)] - z0 / 4.0).norm() < 1e-14);
        assert!(g.roundtrip_residual < 1e-12);
    }

    #[test]
    fn gtz_requires_block_form() {
        let q = SkewForm::new(RMat::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0])).unwrap();
        assert!(matches!(gtz_convert(&tau_lattice(c(0.0, 1.0)), &q), Err(Error::NotNormalForm)));
    }
}
