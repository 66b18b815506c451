//! Product grid over the base box and the fiber chart, plus the coefficients
//! of the holomorphic coordinate fields in chart coordinates.
//!
//! Chart coordinates are `x = (y₁, y₂, a, b)` with `y = y₁ + i y₂` and
//! `z = a + Z(y) b`, periodic with period one in `a` and `b`. The holomorphic
//! fields are `∂_p = Σ cₚᵢ ∂/∂xᵢ` with
//!
//! ```text
//! c_z = (0, 0, −Z̄/(2iY), 1/(2iY))
//! c_y = (½, −i/2, 0, 0) − b Z′ c_z
//! ```
//!
//! where `Y = Im Z`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Node layout `((i₁ (N_B+1) + i₂) N_F + j_a) N_F + j_b`: each base node owns
/// a contiguous `N_F × N_F` fiber block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Base intervals per real direction.
    pub nb: usize,
    /// Fiber points per period.
    pub nf: usize,
    /// `[[y₁ lo, y₁ hi], [y₂ lo, y₂ hi]]`.
    pub base: [[f64; 2]; 2],
}

impl Grid {
    pub fn new(nb: usize, nf: usize, base: [[f64; 2]; 2]) -> Result<Self> {
        if nb < 4 || nf < 4 {
            return Err(Error::InvalidInput(format!("grid needs nb, nf ≥ 4 (got {nb}, {nf})")));
        }
        if base.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::InvalidInput("empty base interval".into()));
        }
        Ok(Grid { nb, nf, base })
    }

    pub fn nbase(&self) -> usize {
        self.nb + 1
    }

    pub fn len(&self) -> usize {
        self.nbase() * self.nbase() * self.nf * self.nf
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fiber_len(&self) -> usize {
        self.nf * self.nf
    }

    pub fn h1(&self) -> f64 {
        (self.base[0][1] - self.base[0][0]) / self.nb as f64
    }

    pub fn h2(&self) -> f64 {
        (self.base[1][1] - self.base[1][0]) / self.nb as f64
    }

    pub fn hf(&self) -> f64 {
        1.0 / self.nf as f64
    }

    /// Step in chart direction `i`.
    pub fn step(&self, i: usize) -> f64 {
        match i {
            0 => self.h1(),
            1 => self.h2(),
            _ => self.hf(),
        }
    }

    pub fn base_index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.nbase() + i2
    }

    pub fn index(&self, i1: usize, i2: usize, ja: usize, jb: usize) -> usize {
        (self.base_index(i1, i2) * self.nf + ja) * self.nf + jb
    }

    /// Inverse of [`Grid::index`].
    pub fn coords(&self, idx: usize) -> (usize, usize, usize, usize) {
        let jb = idx % self.nf;
        let ja = (idx / self.nf) % self.nf;
        let base = idx / self.fiber_len();
        (base / self.nbase(), base % self.nbase(), ja, jb)
    }

    pub fn y(&self, i1: usize, i2: usize) -> Complex64 {
        Complex64::new(self.base[0][0] + i1 as f64 * self.h1(), self.base[1][0] + i2 as f64 * self.h2())
    }

    pub fn a(&self, ja: usize) -> f64 {
        ja as f64 * self.hf()
    }

    /// Fiber coordinate `b` for an unwrapped index (any integer).
    pub fn b(&self, jb: isize) -> f64 {
        jb as f64 * self.hf()
    }

    pub fn is_base_interior(&self, i1: usize, i2: usize) -> bool {
        i1 > 0 && i2 > 0 && i1 < self.nb && i2 < self.nb
    }

    /// Trapezoid weight of base node `(i1, i2)` (fiber weights are uniform).
    pub fn trapezoid_weight(&self, i1: usize, i2: usize) -> f64 {
        let w = |i: usize| if i == 0 || i == self.nb { 0.5 } else { 1.0 };
        w(i1) * w(i2) * self.h1() * self.h2() * self.hf() * self.hf()
    }

    pub fn base_area(&self) -> f64 {
        (self.base[0][1] - self.base[0][0]) * (self.base[1][1] - self.base[1][0])
    }

    /// Base nodes at least `margin` (fraction of the side) away from the boundary.
    pub fn region(&self, margin: f64) -> Vec<(usize, usize)> {
        let lo = |k: usize| -> f64 {
            let [l, h] = self.base[k];
            l + margin * (h - l)
        };
        let hi = |k: usize| -> f64 {
            let [l, h] = self.base[k];
            h - margin * (h - l)
        };
        let slack = 1e-9;
        let mut out = Vec::new();
        for i1 in 0..=self.nb {
            for i2 in 0..=self.nb {
                let y = self.y(i1, i2);
                if y.re >= lo(0) - slack * self.h1()
                    && y.re <= hi(0) + slack * self.h1()
                    && y.im >= lo(1) - slack * self.h2()
                    && y.im <= hi(1) + slack * self.h2()
                {
                    out.push((i1, i2));
                }
            }
        }
        out
    }
}

/// Complex value with first partials in `(y₁, y₂, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dual {
    pub v: Complex64,
    pub d: [Complex64; 3],
}

impl Dual {
    pub fn constant(v: Complex64) -> Self {
        Dual { v, d: [ZERO; 3] }
    }

    pub fn conj(self) -> Self {
        Dual { v: self.v.conj(), d: self.d.map(|x| x.conj()) }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]] }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]] }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut d = [ZERO; 3];
        for k in 0..3 {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let mut d = [ZERO; 3];
        for k in 0..3 {
            d[k] = (self.d[k] * o.v - self.v * o.d[k]) * inv * inv;
        }
        Dual { v: self.v * inv, d }
    }
}

/// Index pairs `(i, j)`, `i ≤ j`, in the order used for second derivatives.
pub const PAIRS: [(usize, usize); 10] =
    [(0, 0), (1, 1), (2, 2), (3, 3), (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Period data `(Z, Z′, Z″)` at one base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodPoint {
    pub z: Complex64,
    pub dz: Complex64,
    pub d2z: Complex64,
}

/// Coefficients turning chart derivatives into complex Hessian entries:
/// `∂_p ∂̄_q f = Σ_k second[p][q][k] f_{PAIRS[k]} + Σ_j first[p][q][j] f_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianStencil {
    pub second: [[[Complex64; 10]; 2]; 2],
    pub first: [[[Complex64; 4]; 2]; 2],
    /// `c_y` and `c_z` themselves.
    pub c: [[Complex64; 4]; 2],
}

/// Coordinate-field coefficients as duals in `(y₁, y₂, b)`.
pub(crate) fn coefficient_duals(p: &PeriodPoint, b: f64) -> [[Dual; 4]; 2] {
    let i = Complex64::new(0.0, 1.0);
    let zd = Dual { v: p.z, d: [p.dz, i * p.dz, ZERO] };
    let zpd = Dual { v: p.dz, d: [p.d2z, i * p.d2z, ZERO] };
    let bd = Dual { v: Complex64::new(b, 0.0), d: [ZERO, ZERO, Complex64::new(1.0, 0.0)] };
    let two_i_y = zd - zd.conj();
    let one = Dual::constant(Complex64::new(1.0, 0.0));
    let cza = -(zd.conj() / two_i_y);
    let czb = one / two_i_y;
    let bz = bd * zpd;
    let cz = [Dual::constant(ZERO), Dual::constant(ZERO), cza, czb];
    let cy = [
        Dual::constant(Complex64::new(0.5, 0.0)),
        Dual::constant(Complex64::new(0.0, -0.5)),
        -(bz * cza),
        -(bz * czb),
    ];
    [cy, cz]
}

/// `c[p][i]` with `∂_p = Σ c_pi ∂_i` in the chart `(y₁, y₂, a, b)`.
pub fn chart_coefficients(p: &PeriodPoint, b: f64) -> [[Complex64; 4]; 2] {
    let duals = coefficient_duals(p, b);
    [duals[0].map(|d| d.v), duals[1].map(|d| d.v)]
}

impl HessianStencil {
    pub fn new(p: &PeriodPoint, b: f64) -> Self {
        let duals = coefficient_duals(p, b);
        let c = [duals[0].map(|d| d.v), duals[1].map(|d| d.v)];
        let mut second = [[[ZERO; 10]; 2]; 2];
        let mut first = [[[ZERO; 4]; 2]; 2];
        for pp in 0..2 {
            for qq in 0..2 {
                for (k, &(i, j)) in PAIRS.iter().enumerate() {
                    second[pp][qq][k] = if i == j {
                        c[pp][i] * c[qq][j].conj()
                    } else {
                        c[pp][i] * c[qq][j].conj() + c[pp][j] * c[qq][i].conj()
                    };
                }
                for j in 0..4 {
                    let conj_q = duals[qq][j].conj();
                    // chart slots y₁, y₂, b carry dual partials 0, 1, 2; nothing depends on a
                    first[pp][qq][j] = c[pp][0] * conj_q.d[0] + c[pp][1] * conj_q.d[1] + c[pp][3] * conj_q.d[2];
                }
            }
        }
        HessianStencil { second, first, c }
    }

    fn entry<T: Copy>(&self, pp: usize, qq: usize, d1: &[T; 4], d2: &[T; 10]) -> Complex64
    where
        Complex64: Mul<T, Output = Complex64>,
    {
        let mut acc = ZERO;
        for k in 0..10 {
            acc += self.second[pp][qq][k] * d2[k];
        }
        for j in 0..4 {
            acc += self.first[pp][qq][j] * d1[j];
        }
        acc
    }

    /// `(M_{yȳ}, M_{yz̄}, M_{zz̄})` of a real function from its chart derivatives.
    pub fn apply(&self, d1: &[f64; 4], d2: &[f64; 10]) -> [Complex64; 3] {
        [self.entry(0, 0, d1, d2), self.entry(0, 1, d1, d2), self.entry(1, 1, d1, d2)]
    }

    /// Full `[p][q]` matrix of `∂_p ∂̄_q f` for complex-valued `f`.
    pub fn apply_complex(&self, d1: &[Complex64; 4], d2: &[Complex64; 10]) -> [[Complex64; 2]; 2] {
        let mut out = [[ZERO; 2]; 2];
        for (pp, row) in out.iter_mut().enumerate() {
            for (qq, o) in row.iter_mut().enumerate() {
                *o = self.entry(pp, qq, d1, d2);
            }
        }
        out
    }

    /// `∂_p f = Σ c_pi f_i`.
    pub fn holomorphic(&self, p: usize, d1: &[Complex64; 4]) -> Complex64 {
        (0..4).map(|i| self.c[p][i] * d1[i]).sum()
    }

    /// `∂̄_p f = Σ conj(c_pi) f_i`.
    pub fn antiholomorphic(&self, p: usize, d1: &[Complex64; 4]) -> Complex64 {
        (0..4).map(|i| self.c[p][i].conj() * d1[i]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_period() -> PeriodPoint {
        let y = Complex64::new(0.2, -0.15);
        PeriodPoint { z: Complex64::new(0.0, 1.0) + y * y * 0.1, dz: y * 0.2, d2z: Complex64::new(0.2, 0.0) }
    }

    #[test]
    fn layout_roundtrip() {
        let g = Grid::new(6, 5, [[-0.5, 0.5], [-0.5, 0.5]]).unwrap();
        for idx in [0, 17, 444, g.len() - 1] {
            let (i1, i2, ja, jb) = g.coords(idx);
            assert_eq!(g.index(i1, i2, ja, jb), idx);
        }
        assert_eq!(g.region(0.25).len(), 9);
    }

    #[test]
    fn trapezoid_weights_integrate_constants() {
        let g = Grid::new(8, 6, [[-0.5, 0.5], [0.0, 2.0]]).unwrap();
        let mut total = 0.0;
        for i1 in 0..=g.nb {
            for i2 in 0..=g.nb {
                total += g.trapezoid_weight(i1, i2) * g.fiber_len() as f64;
            }
        }
        assert!((total - 2.0).abs() < 1e-14);
    }

    /// Applies the chart-coordinate Hessian to `f = |z|²` written in chart
    /// coordinates and compares with `∂∂̄|z|² = e_z ⊗ e_z̄`.
    #[test]
    fn hessian_of_fiber_norm() {
        let p = sample_period();
        let (a, b) = (0.3, 0.7);
        let st = HessianStencil::new(&p, b);
        // f(x) = |a + Z(y) b|², derivatives by hand with Z′ = dz.
        let z = p.z;
        let w = Complex64::new(a, 0.0) + z * b;
        let zy1 = p.dz;
        let zy2 = Complex64::new(0.0, 1.0) * p.dz;
        let zy1y1 = p.d2z;
        let zy2y2 = -p.d2z;
        let zy1y2 = Complex64::new(0.0, 1.0) * p.d2z;
        let re = |c: Complex64| c.re;
        let d = |dw1: Complex64, dw2: Complex64, ddw: Complex64| re(ddw * w.conj() + dw1 * dw2.conj() + dw2 * dw1.conj() + w * ddw.conj());
        // first derivatives of w along chart directions
        let dw = [zy1 * b, zy2 * b, Complex64::new(1.0, 0.0), z];
        let ddw = |i: usize, j: usize| -> Complex64 {
            match (i.min(j), i.max(j)) {
                (0, 0) => zy1y1 * b,
                (1, 1) => zy2y2 * b,
                (0, 1) => zy1y2 * b,
                (0, 3) => zy1,
                (1, 3) => zy2,
                _ => Complex64::new(0.0, 0.0),
            }
        };
        let d1: [f64; 4] = std::array::from_fn(|i| 2.0 * re(dw[i] * w.conj()));
        let d2: [f64; 10] = std::array::from_fn(|k| {
            let (i, j) = PAIRS[k];
            d(dw[i], dw[j], ddw(i, j))
        });
        let m = st.apply(&d1, &d2);
        assert!(m[0].norm() < 1e-13, "{:?}", m);
        assert!(m[1].norm() < 1e-13, "{:?}", m);
        assert!((m[2] - 1.0).norm() < 1e-13, "{:?}", m);
    }
}
