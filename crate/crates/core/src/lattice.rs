//! Linear algebra of skew-symmetric polarization forms.
//!
//! A polarization on a lattice of rank 2n is recorded as a real skew
//! matrix `Q`. Two normal forms are provided: a real symplectic frame `S`
//! with `SᵀQS = J`, and for integral `Q` the elementary-divisor form
//! `AᵀQA = [[0, Δ], [-Δ, 0]]` with `A` unimodular and `d₁ | d₂ | … | dₙ`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, standard_j, CMat, RMat};
use crate::period::LatticeBasis;

/// Largest supported fiber dimension.
pub const MAX_FIBER_DIM: usize = 4;

/// Residual allowed in `SᵀQS = J`.
pub const NORMALIZER_TOL: f64 = 1e-10;

const DEGENERACY_TOL: f64 = 1e-12;

/// Nondegenerate skew-symmetric form on ℝ²ⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewForm {
    n: usize,
    entries: RMat,
    integral: bool,
}

impl SkewForm {
    /// Validates exact skew-symmetry and nondegeneracy.
    pub fn new(entries: RMat) -> Result<Self> {
        Self::build(entries, false)
    }

    /// Integral form; every entry must be an integer.
    pub fn integral(entries: &DMatrix<i64>) -> Result<Self> {
        Self::build(entries.map(|x| x as f64), true)
    }

    /// Accepts a real matrix and flags it integral when all entries are whole numbers.
    pub fn detect(entries: RMat) -> Result<Self> {
        let integral = entries.iter().all(|x| x.fract() == 0.0 && x.abs() < 2f64.powi(53));
        Self::build(entries, integral)
    }

    /// Builds the unique skew matrix whose strict upper triangle is `upper`.
    pub fn from_upper(upper: &RMat) -> Result<Self> {
        let dim = upper.nrows();
        let entries = RMat::from_fn(dim, dim, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => upper[(i, j)],
            std::cmp::Ordering::Greater => -upper[(j, i)],
            std::cmp::Ordering::Equal => 0.0,
        });
        Self::new(entries)
    }

    /// `J` in dimension 2n.
    pub fn standard(n: usize) -> Self {
        SkewForm { n, entries: standard_j(n), integral: true }
    }

    /// `[[0, Δ], [-Δ, 0]]` with `Δ = diag(divisors)`.
    pub fn block(divisors: &[i64]) -> Result<Self> {
        let n = divisors.len();
        let mut q = DMatrix::<i64>::zeros(2 * n, 2 * n);
        for (k, &d) in divisors.iter().enumerate() {
            q[(k, n + k)] = d;
            q[(n + k, k)] = -d;
        }
        Self::integral(&q)
    }

    fn build(entries: RMat, integral: bool) -> Result<Self> {
        let dim = entries.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || entries.ncols() != dim {
            return Err(Error::Dimension(format!(
                "skew form must be 2n×2n, got {}×{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let n = dim / 2;
        if n > MAX_FIBER_DIM {
            return Err(Error::Dimension(format!("fiber dimension {n} exceeds {MAX_FIBER_DIM}")));
        }
        for i in 0..dim {
            for j in 0..dim {
                if entries[(i, j)] != -entries[(j, i)] {
                    return Err(Error::NotSkew(i, j));
                }
                if integral && entries[(i, j)].fract() != 0.0 {
                    return Err(Error::NotIntegral(i, j));
                }
            }
        }
        if integral {
            // exact test; a relative threshold would reject wide divisor chains
            if integer_determinant(&entries.map(|x| x as i128))? == 0 {
                return Err(Error::DegenerateForm { det: 0.0 });
            }
        } else {
            let scale = max_abs(&entries);
            let det = entries.determinant();
            if scale == 0.0 || det.abs() <= DEGENERACY_TOL * scale.powi(dim as i32) {
                return Err(Error::DegenerateForm { det });
            }
        }
        Ok(SkewForm { n, entries, integral })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &RMat {
        &self.entries
    }

    pub fn is_integral(&self) -> bool {
        self.integral
    }

    /// `uᵀ Q w`.
    pub fn pair(&self, u: &[f64], w: &[f64]) -> f64 {
        let dim = 2 * self.n;
        let mut acc = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                acc += u[i] * self.entries[(i, j)] * w[j];
            }
        }
        acc
    }

    /// Entries as exact integers, when the form is integral.
    pub fn integer_entries(&self) -> Option<DMatrix<i128>> {
        self.integral.then(|| self.entries.map(|x| x as i128))
    }

    /// Divisors when the form is already `[[0, Δ], [-Δ, 0]]` with a positive
    /// diagonal Δ; `None` otherwise.
    pub fn block_divisors(&self) -> Option<Vec<i64>> {
        if !self.integral {
            return None;
        }
        let n = self.n;
        let mut divisors = Vec::with_capacity(n);
        for i in 0..2 * n {
            for j in 0..2 * n {
                let v = self.entries[(i, j)];
                let expected_slot = (i < n && j == i + n) || (i >= n && i == j + n);
                if !expected_slot && v != 0.0 {
                    return None;
                }
            }
        }
        for k in 0..n {
            let d = self.entries[(k, n + k)];
            if d <= 0.0 {
                return None;
            }
            divisors.push(d as i64);
        }
        Some(divisors)
    }
}

/// Real frame `S` with `SᵀQS = J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticNormalizer {
    s: RMat,
}

impl SymplecticNormalizer {
    /// Wraps a user-supplied `S`, checking it against `q`. The tolerance is
    /// scaled by ‖S‖²‖Q‖ so composed frames such as `S·σ` are accepted.
    pub fn new(s: RMat, q: &SkewForm) -> Result<Self> {
        let dim = 2 * q.n();
        if s.shape() != (dim, dim) {
            return Err(Error::Dimension(format!("normalizer must be {dim}×{dim}")));
        }
        let scale = max_abs(&s).powi(2) * max_abs(q.matrix()) * dim as f64;
        let out = SymplecticNormalizer { s };
        let res = out.residual(q);
        if res > NORMALIZER_TOL * scale.max(1.0) {
            return Err(Error::InvalidInput(format!("SᵀQS differs from J by {res:.3e}")));
        }
        Ok(out)
    }

    pub fn identity(n: usize) -> Self {
        SymplecticNormalizer { s: RMat::identity(2 * n, 2 * n) }
    }

    pub fn matrix(&self) -> &RMat {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.s.nrows() / 2
    }

    /// `‖SᵀQS − J‖_max`.
    pub fn residual(&self, q: &SkewForm) -> f64 {
        let prod = self.s.transpose() * q.matrix() * &self.s;
        max_abs(&(prod - standard_j(q.n())))
    }

    pub fn inverse(&self) -> RMat {
        self.s.clone().try_inverse().expect("normalizer is invertible by construction")
    }

    /// Right-multiplies by `σ` (no check that `σ` is symplectic).
    pub fn compose(&self, sigma: &RMat) -> Self {
        SymplecticNormalizer { s: &self.s * sigma }
    }
}

/// Skew Gram–Schmidt with largest-pivot selection.
///
/// Builds pairs `(e_k, f_k)` with `Q(e_k, f_k) = 1` that are Q-orthogonal to
/// all other pairs; `S = (e_1 … e_n, f_1 … f_n)`. Each pair is scaled by
/// `|Q(e, f)|^{-1/2}` on both vectors. Pivot ties resolve to the first
/// index pair in row-major order, so the output is deterministic.
pub fn symplectic_normalize(q: &SkewForm) -> Result<SymplecticNormalizer> {
    let n = q.n();
    let dim = 2 * n;
    let scale = max_abs(q.matrix());
    let mut pool: Vec<Vec<f64>> = (0..dim)
        .map(|k| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            v
        })
        .collect();
    let mut es = Vec::with_capacity(n);
    let mut fs = Vec::with_capacity(n);

    for _ in 0..n {
        let mut best = (0, 1, 0.0f64);
        for a in 0..pool.len() {
            for b in a + 1..pool.len() {
                let w = q.pair(&pool[a], &pool[b]);
                if w.abs() > best.2.abs() {
                    best = (a, b, w);
                }
            }
        }
        let (a, b, w) = best;
        if w.abs() <= 1e-12 * scale {
            return Err(Error::DegenerateForm { det: q.matrix().determinant() });
        }
        let norm = w.abs().sqrt();
        let (ia, ib) = if w > 0.0 { (a, b) } else { (b, a) };
        let e: Vec<f64> = pool[ia].iter().map(|x| x / norm).collect();
        let f: Vec<f64> = pool[ib].iter().map(|x| x / norm).collect();
        // remove the larger index first
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        pool.remove(hi);
        pool.remove(lo);
        for w in pool.iter_mut() {
            let wf = q.pair(w, &f);
            let we = q.pair(w, &e);
            for k in 0..dim {
                w[k] += -wf * e[k] + we * f[k];
            }
        }
        es.push(e);
        fs.push(f);
    }

    let s = RMat::from_fn(dim, dim, |r, col| if col < n { es[col][r] } else { fs[col - n][r] });
    let out = SymplecticNormalizer { s };
    let res = out.residual(q);
    if res > NORMALIZER_TOL * scale.max(1.0) {
        return Err(Error::DegenerateForm { det: q.matrix().determinant() });
    }
    Ok(out)
}

/// Integral elementary-divisor normal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusData {
    /// Unimodular change of basis, columns `(e_1 … e_n, f_1 … f_n)`.
    pub a: DMatrix<i64>,
    pub divisors: Vec<i64>,
}

impl FrobeniusData {
    /// `AᵀQA` in exact integer arithmetic.
    pub fn transformed(&self, q: &SkewForm) -> Result<DMatrix<i128>> {
        let qi = q.integer_entries().ok_or(Error::NotIntegral(0, 0))?;
        let a = self.a.map(|x| x as i128);
        let aq = checked_matmul(&a.transpose(), &qi)?;
        checked_matmul(&aq, &a)
    }

    pub fn block_form(&self) -> SkewForm {
        SkewForm::block(&self.divisors).expect("divisors are positive")
    }
}

fn checked_matmul(a: &DMatrix<i128>, b: &DMatrix<i128>) -> Result<DMatrix<i128>> {
    let mut out = DMatrix::<i128>::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut acc: i128 = 0;
            for k in 0..a.ncols() {
                let p = a[(i, k)].checked_mul(b[(k, j)]).ok_or(Error::Overflow)?;
                acc = acc.checked_add(p).ok_or(Error::Overflow)?;
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn integer_determinant(m: &DMatrix<i128>) -> Result<i128> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[(k, k)] == 0 {
            match (k + 1..n).find(|&r| a[(r, k)] != 0) {
                Some(r) => {
                    a.swap_rows(k, r);
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let x = a[(i, j)].checked_mul(a[(k, k)]).ok_or(Error::Overflow)?;
                let y = a[(i, k)].checked_mul(a[(k, j)]).ok_or(Error::Overflow)?;
                a[(i, j)] = x.checked_sub(y).ok_or(Error::Overflow)? / prev;
            }
        }
        prev = a[(k, k)];
    }
    Ok(sign * a[(n - 1, n - 1)])
}

/// Working state for the alternating reduction: basis vectors as columns
/// of `basis` and their Gram matrix `gram = basisᵀ Q basis`.
struct AltReduction {
    basis: Vec<Vec<i128>>,
    q: DMatrix<i128>,
}

impl AltReduction {
    fn pair(&self, u: &[i128], w: &[i128]) -> Result<i128> {
        let dim = u.len();
        let mut acc: i128 = 0;
        for i in 0..dim {
            if u[i] == 0 {
                continue;
            }
            for j in 0..dim {
                if w[j] == 0 || self.q[(i, j)] == 0 {
                    continue;
                }
                let p = u[i]
                    .checked_mul(self.q[(i, j)])
                    .and_then(|x| x.checked_mul(w[j]))
                    .ok_or(Error::Overflow)?;
                acc = acc.checked_add(p).ok_or(Error::Overflow)?;
            }
        }
        Ok(acc)
    }

    /// `u += c·w`, overflow-checked.
    fn axpy(u: &mut [i128], c: i128, w: &[i128]) -> Result<()> {
        if c == 0 {
            return Ok(());
        }
        for (x, y) in u.iter_mut().zip(w) {
            let p = c.checked_mul(*y).ok_or(Error::Overflow)?;
            *x = x.checked_add(p).ok_or(Error::Overflow)?;
        }
        Ok(())
    }
}

/// Elementary-divisor reduction of an integral alternating form.
///
/// Repeatedly picks the nonzero pairing of least absolute value among the
/// remaining basis vectors, reduces every other vector against that pair by
/// Euclidean division, and restarts with a smaller pivot whenever a nonzero
/// remainder or a non-divisible pairing appears. All arithmetic is checked
/// `i128`.
pub fn frobenius_normal_form(q: &SkewForm) -> Result<FrobeniusData> {
    let qi = q.integer_entries().ok_or_else(|| {
        Error::InvalidInput("Frobenius normal form requires an integral form".into())
    })?;
    let n = q.n();
    let dim = 2 * n;
    let mut red = AltReduction {
        basis: (0..dim)
            .map(|k| {
                let mut v = vec![0i128; dim];
                v[k] = 1;
                v
            })
            .collect(),
        q: qi.clone(),
    };
    let mut es: Vec<Vec<i128>> = Vec::with_capacity(n);
    let mut fs: Vec<Vec<i128>> = Vec::with_capacity(n);
    let mut divisors = Vec::with_capacity(n);

    while !red.basis.is_empty() {
        'pivot: loop {
            let m = red.basis.len();
            let mut best: Option<(usize, usize, i128)> = None;
            for a in 0..m {
                for b in a + 1..m {
                    let w = red.pair(&red.basis[a], &red.basis[b])?;
                    if w != 0 && best.is_none_or(|(_, _, bw)| w.abs() < bw.abs()) {
                        best = Some((a, b, w));
                    }
                }
            }
            let (a, b, w) = best.ok_or(Error::DegenerateForm { det: 0.0 })?;
            let (ia, ib) = if w > 0 { (a, b) } else { (b, a) };
            let d = w.abs();
            let e = red.basis[ia].clone();
            let f = red.basis[ib].clone();

            // Reduce every other vector against (e, f): ω(w', e), ω(w', f) become
            // remainders modulo d.
            for k in 0..m {
                if k == ia || k == ib {
                    continue;
                }
                let we = red.pair(&red.basis[k], &e)?;
                let wf = red.pair(&red.basis[k], &f)?;
                let beta = we.div_euclid(d);
                let alpha = -wf.div_euclid(d);
                let mut v = red.basis[k].clone();
                AltReduction::axpy(&mut v, alpha, &e)?;
                AltReduction::axpy(&mut v, beta, &f)?;
                red.basis[k] = v;
            }
            for k in 0..m {
                if k == ia || k == ib {
                    continue;
                }
                if red.pair(&red.basis[k], &e)? != 0 || red.pair(&red.basis[k], &f)? != 0 {
                    // a smaller nonzero remainder exists; pick it up next round
                    continue 'pivot;
                }
            }
            // Divisibility of the remaining block by d.
            for k in 0..m {
                for l in k + 1..m {
                    if [ia, ib].contains(&k) || [ia, ib].contains(&l) {
                        continue;
                    }
                    let kl = red.pair(&red.basis[k], &red.basis[l])?;
                    if kl % d != 0 {
                        let wk = red.basis[k].clone();
                        AltReduction::axpy(&mut red.basis[ia], 1, &wk)?;
                        continue 'pivot;
                    }
                }
            }
            es.push(e);
            fs.push(f);
            divisors.push(d);
            let (hi, lo) = if ia > ib { (ia, ib) } else { (ib, ia) };
            red.basis.remove(hi);
            red.basis.remove(lo);
            break;
        }
    }

    let mut a = DMatrix::<i64>::zeros(dim, dim);
    for k in 0..n {
        for r in 0..dim {
            a[(r, k)] = i64::try_from(es[k][r]).map_err(|_| Error::Overflow)?;
            a[(r, n + k)] = i64::try_from(fs[k][r]).map_err(|_| Error::Overflow)?;
        }
    }
    let divisors = divisors
        .into_iter()
        .map(|d| i64::try_from(d).map_err(|_| Error::Overflow))
        .collect::<Result<Vec<_>>>()?;
    let out = FrobeniusData { a, divisors };

    debug_assert!(out.divisors.windows(2).all(|w| w[1] % w[0] == 0));
    let check = out.transformed(q)?;
    let block = out.block_form();
    if check != block.integer_entries().expect("block form is integral") {
        return Err(Error::Overflow);
    }
    Ok(out)
}

/// Translation-invariant real 2-form on ℂⁿ:
/// `ω = i Σ H_{ℓm} dz_ℓ ∧ dz̄_m + (½ Σ G_{ℓm} dz_ℓ ∧ dz_m + conj)`,
/// with `H` Hermitian and `G` complex skew.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberTwoForm {
    pub h: CMat,
    pub g: CMat,
}

impl FiberTwoForm {
    pub fn from_hermitian(h: CMat) -> Self {
        let n = h.nrows();
        FiberTwoForm { h, g: CMat::zeros(n, n) }
    }

    pub fn zero(n: usize) -> Self {
        FiberTwoForm { h: CMat::zeros(n, n), g: CMat::zeros(n, n) }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let k = Complex64::new(s, 0.0);
        FiberTwoForm { h: &self.h * k, g: &self.g * k }
    }

    /// `ω(u, w) = −2 Im(uᵀ H w̄) + 2 Re(uᵀ G w)` for real tangent vectors
    /// given as complex n-vectors.
    pub fn pair(&self, u: &[Complex64], w: &[Complex64]) -> f64 {
        let n = self.h.nrows();
        let mut herm = Complex64::new(0.0, 0.0);
        let mut hol = Complex64::new(0.0, 0.0);
        for l in 0..n {
            for m in 0..n {
                herm += u[l] * self.h[(l, m)] * w[m].conj();
                hol += u[l] * self.g[(l, m)] * w[m];
            }
        }
        -2.0 * herm.im + 2.0 * hol.re
    }
}

/// `P_ij = ω(v_i, v_j)` for the lattice generators `v_i` (columns of `T`).
pub fn lattice_frame_coefficients(form: &FiberTwoForm, t: &LatticeBasis) -> RMat {
    let cols = t.columns();
    let dim = cols.len();
    let mut p = RMat::zeros(dim, dim);
    for i in 0..dim {
        for j in i + 1..dim {
            let v = form.pair(&cols[i], &cols[j]);
            p[(i, j)] = v;
            p[(j, i)] = -v;
        }
    }
    p
}
