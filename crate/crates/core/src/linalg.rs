//! Small dense helpers shared by the lattice, period and semi-flat modules.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Standard symplectic block matrix `[[0, 1], [-1, 0]]` of size 2n.
pub fn standard_j(n: usize) -> RMat {
    let mut j = RMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = 1.0;
        j[(n + k, k)] = -1.0;
    }
    j
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn re_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn im_part(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

/// Eigenvalues (ascending) of a Hermitian matrix. Only the lower triangle is trusted.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn symmetric_eigenvalues(m: &RMat) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Real 2n×2n matrix stacking Re T over Im T.
pub fn realify_columns(t: &CMat) -> RMat {
    let (n, cols) = t.shape();
    RMat::from_fn(2 * n, cols, |r, col| {
        if r < n {
            t[(r, col)].re
        } else {
            t[(r - n, col)].im
        }
    })
}

/// 2-norm condition number via singular values; infinite when singular.
pub fn condition_number(m: &RMat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Closed-form 2×2 Hermitian helpers used by the grid kernels, where going
/// through nalgebra per node would dominate the runtime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Herm2 {
    pub a: f64,
    pub b: Complex64,
    pub d: f64,
}

impl Herm2 {
    pub const ZERO: Herm2 = Herm2 { a: 0.0, b: Complex64::new(0.0, 0.0), d: 0.0 };

    pub fn new(a: f64, b: Complex64, d: f64) -> Self {
        Herm2 { a, b, d }
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Herm2 { a, b: Complex64::new(0.0, 0.0), d }
    }

    /// Entry (row, col) with `b` at (0, 1) and its conjugate at (1, 0).
    pub fn at(&self, r: usize, col: usize) -> Complex64 {
        match (r, col) {
            (0, 0) => Complex64::new(self.a, 0.0),
            (0, 1) => self.b,
            (1, 0) => self.b.conj(),
            _ => Complex64::new(self.d, 0.0),
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b.norm_sqr()
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Herm2 {
        let det = self.det();
        Herm2 { a: self.d / det, b: -self.b / det, d: self.a / det }
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a + self.d);
        let half = 0.5 * (self.a - self.d);
        let rad = (half * half + self.b.norm_sqr()).sqrt();
        (mean - rad, mean + rad)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().0
    }

    pub fn scale(&self, s: f64) -> Herm2 {
        Herm2 { a: self.a * s, b: self.b * s, d: self.d * s }
    }

    /// `W H W` for the diagonal weight `W = diag(w0, w1)`.
    pub fn weighted(&self, w0: f64, w1: f64) -> Herm2 {
        Herm2 { a: self.a * w0 * w0, b: self.b * (w0 * w1), d: self.d * w1 * w1 }
    }

    pub fn max_abs_diff(&self, other: &Herm2) -> f64 {
        (self.a - other.a)
            .abs()
            .max((self.b - other.b).norm())
            .max((self.d - other.d).abs())
    }
}

impl std::ops::Add for Herm2 {
    type Output = Herm2;
    fn add(self, o: Herm2) -> Herm2 {
        Herm2 { a: self.a + o.a, b: self.b + o.b, d: self.d + o.d }
    }
}

impl std::ops::Sub for Herm2 {
    type Output = Herm2;
    fn sub(self, o: Herm2) -> Herm2 {
        Herm2 { a: self.a - o.a, b: self.b - o.b, d: self.d - o.d }
    }
}
