//! Holomorphic families of lattices over a box in ℂᵐ.
//!
//! Entries are polynomials or rational functions of `y`, so first and
//! second complex derivatives are available in closed form.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_siegel, LatticeBasis, MAX_BASIS_CONDITION};
use crate::error::{Error, Result};
use crate::lattice::SymplecticNormalizer;
use crate::linalg::{condition_number, max_abs_c, realify_columns, to_complex, CMat};

/// Axis-aligned box in ℂᵐ, stored as real intervals in the order
/// `(Re y₁, Im y₁, Re y₂, Im y₂, …)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseBox {
    pub intervals: Vec<[f64; 2]>,
}

impl BaseBox {
    pub fn new(intervals: Vec<[f64; 2]>) -> Result<Self> {
        if intervals.is_empty() || !intervals.len().is_multiple_of(2) || intervals.len() > 4 {
            return Err(Error::Dimension("base box must have 2m real intervals with m ∈ {1, 2}".into()));
        }
        if intervals.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::InvalidInput("base interval with lo ≥ hi".into()));
        }
        Ok(BaseBox { intervals })
    }

    /// Square `|Re y|, |Im y| ≤ half` in each of `m` complex coordinates.
    pub fn centered(m: usize, half: f64) -> Self {
        BaseBox { intervals: vec![[-half, half]; 2 * m] }
    }

    pub fn m(&self) -> usize {
        self.intervals.len() / 2
    }

    pub fn contains(&self, y: &[Complex64]) -> bool {
        y.len() == self.m()
            && y.iter().enumerate().all(|(k, v)| {
                let [a, b] = self.intervals[2 * k];
                let [c, d] = self.intervals[2 * k + 1];
                // small slack so that grid endpoints computed in floating point pass
                let sa = 1e-12 * (b - a);
                let sc = 1e-12 * (d - c);
                v.re >= a - sa && v.re <= b + sa && v.im >= c - sc && v.im <= d + sc
            })
    }

    /// Tensor grid with `k` points per real dimension (endpoints included;
    /// the center when `k == 1`).
    pub fn grid(&self, k: usize) -> Vec<Vec<Complex64>> {
        let axes: Vec<Vec<f64>> = self
            .intervals
            .iter()
            .map(|&[lo, hi]| {
                if k <= 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
                }
            })
            .collect();
        let mut points = vec![Vec::new()];
        for pair in axes.chunks(2) {
            let mut next = Vec::with_capacity(points.len() * pair[0].len() * pair[1].len());
            for p in &points {
                for &re in &pair[0] {
                    for &im in &pair[1] {
                        let mut q = p.clone();
                        q.push(Complex64::new(re, im));
                        next.push(q);
                    }
                }
            }
            points = next;
        }
        points
    }
}

/// Polynomial in `m` complex variables: `Σ c · y^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    /// Coefficient as `[re, im]`.
    pub c: [f64; 2],
    /// Exponent per base variable.
    pub p: Vec<u32>,
}

fn powi(y: Complex64, k: i64) -> Complex64 {
    if k < 0 {
        Complex64::new(0.0, 0.0)
    } else {
        y.powu(k as u32)
    }
}

impl Polynomial {
    pub fn constant(m: usize, value: Complex64) -> Self {
        Polynomial { terms: vec![Term { c: [value.re, value.im], p: vec![0; m] }] }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Complex64, Vec<u32>)>) -> Self {
        Polynomial {
            terms: terms.into_iter().map(|(c, p)| Term { c: [c.re, c.im], p }).collect(),
        }
    }

    /// Single-variable polynomial from coefficients of `1, y, y², …`.
    pub fn univariate(coeffs: &[Complex64]) -> Self {
        Self::from_terms(coeffs.iter().enumerate().map(|(k, &c)| (c, vec![k as u32])))
    }

    /// Value, gradient and Hessian with respect to the complex variables.
    pub fn jet(&self, y: &[Complex64]) -> (Complex64, Vec<Complex64>, Vec<Vec<Complex64>>) {
        let m = y.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut v = zero;
        let mut g = vec![zero; m];
        let mut h = vec![vec![zero; m]; m];
        for term in &self.terms {
            let c = Complex64::new(term.c[0], term.c[1]);
            // derivative of the monomial along the multiset `skip`
            let pw = |skip: &[usize]| -> Complex64 {
                let mut acc = c;
                for k in 0..m {
                    let r = skip.iter().filter(|&&s| s == k).count() as i64;
                    let pk = term.p[k] as i64;
                    let falling: i64 = (0..r).map(|d| pk - d).product();
                    acc *= falling as f64 * powi(y[k], pk - r);
                }
                acc
            };
            v += pw(&[]);
            for j in 0..m {
                g[j] += pw(&[j]);
                for k in 0..m {
                    h[j][k] += pw(&[j, k]);
                }
            }
        }
        (v, g, h)
    }
}

/// Holomorphic scalar entry of a lattice family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HoloFn {
    Poly(Polynomial),
    Rational { num: Polynomial, den: Polynomial },
}

impl HoloFn {
    pub fn constant(m: usize, value: Complex64) -> Self {
        HoloFn::Poly(Polynomial::constant(m, value))
    }

    pub fn jet(&self, y: &[Complex64]) -> (Complex64, Vec<Complex64>, Vec<Vec<Complex64>>) {
        match self {
            HoloFn::Poly(p) => p.jet(y),
            HoloFn::Rational { num, den } => {
                let (p, pg, ph) = num.jet(y);
                let (q, qg, qh) = den.jet(y);
                let m = y.len();
                let f = p / q;
                let g: Vec<Complex64> = (0..m).map(|j| (pg[j] - f * qg[j]) / q).collect();
                let h = (0..m)
                    .map(|j| {
                        (0..m)
                            .map(|k| (ph[j][k] - f * qh[j][k] - g[j] * qg[k] - g[k] * qg[j]) / q)
                            .collect()
                    })
                    .collect();
                (f, g, h)
            }
        }
    }
}

/// `T(y)` with its first and second complex derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeJet {
    pub value: CMat,
    pub d1: Vec<CMat>,
    pub d2: Vec<Vec<CMat>>,
}

/// `Z(y)` in the frame `TS = R(1, Z)` with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodJet {
    pub r: CMat,
    pub z: CMat,
    pub dz: Vec<CMat>,
    pub d2z: Vec<Vec<CMat>>,
}

impl PeriodJet {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn m(&self) -> usize {
        self.dz.len()
    }
}

/// A lattice `Λ_y` depending holomorphically on `y` in a base box.
pub trait HolomorphicLatticeFamily: Send + Sync {
    fn n(&self) -> usize;
    fn base(&self) -> &BaseBox;
    fn jet(&self, y: &[Complex64]) -> LatticeJet;

    fn m(&self) -> usize {
        self.base().m()
    }

    fn basis(&self, y: &[Complex64]) -> Result<LatticeBasis> {
        if !self.base().contains(y) {
            return Err(Error::OutOfDomain);
        }
        LatticeBasis::new(self.jet(y).value)
    }

    /// Normalized period `Z(y)` and its derivatives by differentiating
    /// `R Z = X₂`, where `(R, X₂)` are the column blocks of `T S`.
    fn period_jet(&self, s: &SymplecticNormalizer, y: &[Complex64]) -> Result<PeriodJet> {
        if !self.base().contains(y) {
            return Err(Error::OutOfDomain);
        }
        let n = self.n();
        let m = self.m();
        let jet = self.jet(y);
        let sc = to_complex(s.matrix());
        let split = |t: &CMat| {
            let ts = t * &sc;
            (ts.columns(0, n).into_owned(), ts.columns(n, n).into_owned())
        };
        let (r, x2) = split(&jet.value);
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotPolarized("first n columns of TS are C-dependent".into()))?;
        let z = &r_inv * &x2;
        check_siegel(&z)?;
        let d1: Vec<(CMat, CMat)> = jet.d1.iter().map(split).collect();
        let dz: Vec<CMat> = (0..m).map(|j| &r_inv * (&d1[j].1 - &d1[j].0 * &z)).collect();
        let d2z = (0..m)
            .map(|j| {
                (0..m)
                    .map(|k| {
                        let (rjk, xjk) = split(&jet.d2[j][k]);
                        &r_inv * (xjk - rjk * &z - &d1[j].0 * &dz[k] - &d1[k].0 * &dz[j])
                    })
                    .collect()
            })
            .collect();
        Ok(PeriodJet { r, z, dz, d2z })
    }
}

/// Lattice family whose n×2n entries are independent holomorphic functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrywiseFamily {
    pub n: usize,
    pub base: BaseBox,
    /// Row-major n×2n entries.
    pub entries: Vec<HoloFn>,
}

impl EntrywiseFamily {
    pub fn new(n: usize, base: BaseBox, entries: Vec<HoloFn>) -> Result<Self> {
        if entries.len() != 2 * n * n {
            return Err(Error::Dimension(format!("expected {} lattice entries, got {}", 2 * n * n, entries.len())));
        }
        Ok(EntrywiseFamily { n, base, entries })
    }

    /// `T(y) = (1, Z(y))` from row-major n×n entries of `Z`.
    pub fn from_period(n: usize, base: BaseBox, z_entries: Vec<HoloFn>) -> Result<Self> {
        if z_entries.len() != n * n {
            return Err(Error::Dimension("period family needs n×n entries".into()));
        }
        let m = base.m();
        let mut entries = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                let v = if i == j { 1.0 } else { 0.0 };
                entries.push(HoloFn::constant(m, Complex64::new(v, 0.0)));
            }
            for j in 0..n {
                entries.push(z_entries[i * n + j].clone());
            }
        }
        Self::new(n, base, entries)
    }

    pub fn constant(t: &CMat, base: BaseBox) -> Result<Self> {
        let m = base.m();
        let n = t.nrows();
        let entries = (0..n)
            .flat_map(|i| (0..2 * n).map(move |j| (i, j)))
            .map(|(i, j)| HoloFn::constant(m, t[(i, j)]))
            .collect();
        Self::new(n, base, entries)
    }
}

impl HolomorphicLatticeFamily for EntrywiseFamily {
    fn n(&self) -> usize {
        self.n
    }

    fn base(&self) -> &BaseBox {
        &self.base
    }

    fn jet(&self, y: &[Complex64]) -> LatticeJet {
        let n = self.n;
        let m = y.len();
        let mut value = CMat::zeros(n, 2 * n);
        let mut d1 = vec![CMat::zeros(n, 2 * n); m];
        let mut d2 = vec![vec![CMat::zeros(n, 2 * n); m]; m];
        for i in 0..n {
            for j in 0..2 * n {
                let (v, g, h) = self.entries[i * 2 * n + j].jet(y);
                value[(i, j)] = v;
                for a in 0..m {
                    d1[a][(i, j)] = g[a];
                    for b in 0..m {
                        d2[a][b][(i, j)] = h[a][b];
                    }
                }
            }
        }
        LatticeJet { value, d1, d2 }
    }
}

/// Result of sampling a family for holomorphy and lattice validity.
#[derive(Debug, Clone, Serialize)]
pub struct HolomorphyAudit {
    /// Largest `|∂f/∂ȳ|` (centered differences) relative to `max(1, |T|)`.
    pub max_cauchy_riemann: f64,
    /// Largest gap between the analytic `∂f/∂y` and its difference quotient.
    pub max_derivative_error: f64,
    pub max_basis_condition: f64,
    pub points: usize,
}

impl HolomorphyAudit {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_cauchy_riemann <= tol && self.max_derivative_error <= tol && self.max_basis_condition <= MAX_BASIS_CONDITION
    }
}

/// Samples `k` points per real base dimension and checks the Cauchy–Riemann
/// equations of every entry with step `1e-6`.
pub fn holomorphy_audit(family: &dyn HolomorphicLatticeFamily, k: usize) -> HolomorphyAudit {
    const H: f64 = 1e-6;
    let grid = family.base().grid(k);
    let per_point: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|y| {
            let jet = family.jet(y);
            let scale = max_abs_c(&jet.value).max(1.0);
            let cond = condition_number(&realify_columns(&jet.value));
            let mut cr: f64 = 0.0;
            let mut der: f64 = 0.0;
            for a in 0..y.len() {
                let shifted = |delta: Complex64| {
                    let mut p = y.clone();
                    p[a] += delta;
                    family.jet(&p).value
                };
                let dx = (shifted(Complex64::new(H, 0.0)) - shifted(Complex64::new(-H, 0.0))) / Complex64::new(2.0 * H, 0.0);
                let dy = (shifted(Complex64::new(0.0, H)) - shifted(Complex64::new(0.0, -H))) / Complex64::new(2.0 * H, 0.0);
                let i = Complex64::new(0.0, 1.0);
                let dbar = (&dx + &dy * i) * Complex64::new(0.5, 0.0);
                let d = (&dx - &dy * i) * Complex64::new(0.5, 0.0);
                cr = cr.max(max_abs_c(&dbar) / scale);
                der = der.max(max_abs_c(&(d - &jet.d1[a])) / scale);
            }
            (cr, der, cond)
        })
        .collect();
    let fold = |sel: fn(&(f64, f64, f64)) -> f64| per_point.iter().map(sel).fold(0.0, f64::max);
    HolomorphyAudit {
        max_cauchy_riemann: fold(|p| p.0),
        max_derivative_error: fold(|p| p.1),
        max_basis_condition: fold(|p| p.2),
        points: grid.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn polynomial_jet_matches_hand_derivatives() {
        // f = 2 y₁² y₂ + i y₂³
        let p = Polynomial::from_terms([(c(2.0, 0.0), vec![2, 1]), (c(0.0, 1.0), vec![0, 3])]);
        let y = [c(0.3, -0.2), c(-0.1, 0.4)];
        let (v, g, h) = p.jet(&y);
        let (a, b) = (y[0], y[1]);
        let i = c(0.0, 1.0);
        assert!((v - (2.0 * a * a * b + i * b * b * b)).norm() < 1e-15);
        assert!((g[0] - 4.0 * a * b).norm() < 1e-15);
        assert!((g[1] - (2.0 * a * a + 3.0 * i * b * b)).norm() < 1e-15);
        assert!((h[0][0] - 4.0 * b).norm() < 1e-15);
        assert!((h[0][1] - 4.0 * a).norm() < 1e-15);
        assert!((h[1][1] - 6.0 * i * b).norm() < 1e-15);
    }

    #[test]
    fn rational_jet_matches_hand_derivatives() {
        // f = 1 / (2 − y)
        let f = HoloFn::Rational {
            num: Polynomial::constant(1, c(1.0, 0.0)),
            den: Polynomial::univariate(&[c(2.0, 0.0), c(-1.0, 0.0)]),
        };
        let y = [c(0.2, 0.1)];
        let (v, g, h) = f.jet(&y);
        let w = c(2.0, 0.0) - y[0];
        assert!((v - 1.0 / w).norm() < 1e-15);
        assert!((g[0] - 1.0 / (w * w)).norm() < 1e-14);
        assert!((h[0][0] - 2.0 / (w * w * w)).norm() < 1e-14);
    }

    #[test]
    fn grid_counts_and_bounds() {
        let b = BaseBox::centered(2, 0.5);
        let g = b.grid(3);
        assert_eq!(g.len(), 81);
        assert!(g.iter().all(|y| b.contains(y)));
        assert!(!b.contains(&[c(0.6, 0.0), c(0.0, 0.0)]));
    }

    #[test]
    fn audit_passes_for_polynomial_family() {
        let z = HoloFn::Poly(Polynomial::univariate(&[c(0.0, 1.0), c(0.0, 0.0), c(0.1, 0.0)]));
        let fam = EntrywiseFamily::from_period(1, BaseBox::centered(1, 0.5), vec![z]).unwrap();
        let audit = holomorphy_audit(&fam, 9);
        assert!(audit.passes(1e-8), "{audit:?}");
        assert_eq!(audit.points, 81);
    }

    #[test]
    fn period_jet_chain_rule_matches_differences() {
        // T(y) = (1 + y, (i + y²)(1 + y)) so that R = 1 + y and Z = i + y².
        let m = 1;
        let one_plus_y = Polynomial::univariate(&[c(1.0, 0.0), c(1.0, 0.0)]);
        let prod = Polynomial::univariate(&[c(0.0, 1.0), c(0.0, 1.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let fam = EntrywiseFamily::new(1, BaseBox::centered(m, 0.5), vec![HoloFn::Poly(one_plus_y), HoloFn::Poly(prod)]).unwrap();
        let s = SymplecticNormalizer::identity(1);
        let y = [c(0.1, 0.2)];
        let pj = fam.period_jet(&s, &y).unwrap();
        let want_z = c(0.0, 1.0) + y[0] * y[0];
        assert!((pj.z[(0, 0)] - want_z).norm() < 1e-14);
        assert!((pj.dz[0][(0, 0)] - 2.0 * y[0]).norm() < 1e-14);
        assert!((pj.d2z[0][0][(0, 0)] - c(2.0, 0.0)).norm() < 1e-13);
    }
}
