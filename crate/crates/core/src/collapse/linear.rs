//! Linearized Monge-Ampère operator `δ ↦ Re tr(g⁻¹ ∂∂̄δ)` on the grid, a
//! constant-coefficient fast-transform preconditioner and right-preconditioned
//! BiCGSTAB.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use super::grid::{Grid, PAIRS};
use super::model::ChartTables;
use crate::error::{Error, Result};
use crate::linalg::Herm2;

const REDUCE_CHUNK: usize = 1 << 14;

/// Sum of `f(i)` over fixed chunks, folded in chunk order so that the
/// result does not depend on the thread count.
pub(crate) fn deterministic_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partial: Vec<f64> = (0..len.div_ceil(REDUCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCE_CHUNK;
            let hi = (lo + REDUCE_CHUNK).min(len);
            (lo..hi).map(&f).sum()
        })
        .collect();
    partial.iter().sum()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    deterministic_sum(x.len(), |i| x[i] * y[i])
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Chart derivatives at a node from a lookup `at(offset)`, by centered
/// differences. `at` receives offsets in `(y₁, y₂, a, b)` steps.
#[inline]
pub(crate) fn chart_stencil<T, F>(at: F, h: [f64; 4]) -> ([T; 4], [T; 10])
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn([isize; 4]) -> T,
{
    let unit = |i: usize, s: isize| {
        let mut o = [0isize; 4];
        o[i] = s;
        o
    };
    let center = at([0; 4]);
    let plus: [T; 4] = std::array::from_fn(|i| at(unit(i, 1)));
    let minus: [T; 4] = std::array::from_fn(|i| at(unit(i, -1)));
    let d1 = std::array::from_fn(|i| (plus[i] - minus[i]) * (0.5 / h[i]));
    let d2 = std::array::from_fn(|k| {
        let (i, j) = PAIRS[k];
        if i == j {
            (plus[i] - center * 2.0 + minus[i]) * (1.0 / (h[i] * h[i]))
        } else {
            let mut pp = [0isize; 4];
            pp[i] = 1;
            pp[j] = 1;
            let mut pm = pp;
            pm[j] = -1;
            let mut mp = pp;
            mp[i] = -1;
            let mut mm = pm;
            mm[i] = -1;
            (at(pp) - at(pm) - at(mp) + at(mm)) * (0.25 / (h[i] * h[j]))
        }
    });
    (d1, d2)
}

/// Centered first differences only.
#[inline]
pub(crate) fn chart_gradient<T, F>(at: F, h: [f64; 4]) -> [T; 4]
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn([isize; 4]) -> T,
{
    std::array::from_fn(|i| {
        let mut p = [0isize; 4];
        p[i] = 1;
        let mut m = [0isize; 4];
        m[i] = -1;
        (at(p) - at(m)) * (0.5 / h[i])
    })
}

/// Node lookup with periodic fiber wrap; the base offset must stay on the grid.
#[inline]
pub(crate) fn lookup<'a>(grid: &'a Grid, u: &'a [f64], i1: usize, i2: usize, ja: usize, jb: usize) -> impl Fn([isize; 4]) -> f64 + 'a {
    let nf = grid.nf as isize;
    move |o: [isize; 4]| {
        let a = (ja as isize + o[2]).rem_euclid(nf) as usize;
        let b = (jb as isize + o[3]).rem_euclid(nf) as usize;
        u[grid.index((i1 as isize + o[0]) as usize, (i2 as isize + o[1]) as usize, a, b)]
    }
}

pub(crate) fn steps(grid: &Grid) -> [f64; 4] {
    [grid.h1(), grid.h2(), grid.hf(), grid.hf()]
}

/// Coefficients `A_k` (on `δ_{PAIRS[k]}`) and `B_j` (on `δ_j`) per node.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    grid: Grid,
    coeff: Vec<[f64; 14]>,
}

impl LinearOperator {
    /// Linearization of `log det` at the metric `g` (per node; only base
    /// interior nodes are used).
    pub fn from_metric(tables: &ChartTables, g: &[Herm2]) -> Self {
        let grid = tables.grid;
        let coeff = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i1, i2, _, _) = grid.coords(idx);
                if !grid.is_base_interior(i1, i2) {
                    return [0.0; 14];
                }
                let st = &tables.stencil[tables.slot(idx)];
                let inv = g[idx].inverse();
                let bc = inv.b.conj();
                let mut out = [0.0; 14];
                for k in 0..10 {
                    out[k] = inv.a * st.second[0][0][k].re + inv.d * st.second[1][1][k].re + 2.0 * (bc * st.second[0][1][k]).re;
                }
                for j in 0..4 {
                    out[10 + j] = inv.a * st.first[0][0][j].re + inv.d * st.first[1][1][j].re + 2.0 * (bc * st.first[0][1][j]).re;
                }
                out
            })
            .collect();
        LinearOperator { grid, coeff }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `y = L x` on base-interior nodes, zero elsewhere. `x` must vanish on
    /// the base boundary.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let grid = self.grid;
        let fl = grid.fiber_len();
        let h = steps(&grid);
        y.par_chunks_mut(fl).enumerate().for_each(|(base, out)| {
            let (i1, i2) = (base / grid.nbase(), base % grid.nbase());
            if !grid.is_base_interior(i1, i2) {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            for (k, o) in out.iter_mut().enumerate() {
                let (ja, jb) = (k / grid.nf, k % grid.nf);
                let (d1, d2) = chart_stencil(lookup(&grid, x, i1, i2, ja, jb), h);
                let c = &self.coeff[base * fl + k];
                let mut acc = 0.0;
                for m in 0..10 {
                    acc += c[m] * d2[m];
                }
                for j in 0..4 {
                    acc += c[10 + j] * d1[j];
                }
                *o = acc;
            }
        });
    }

    /// Mean coefficients over base-interior nodes.
    pub fn mean_coefficients(&self) -> [f64; 14] {
        let grid = self.grid;
        let count = ((grid.nb - 1) * (grid.nb - 1) * grid.fiber_len()) as f64;
        std::array::from_fn(|m| deterministic_sum(self.coeff.len(), |i| self.coeff[i][m]) / count)
    }
}

/// Inverse of the constant-coefficient operator
/// `Σ Ā_ii ∂ᵢ² + Ā_ab ∂_a∂_b` (same difference stencils), diagonalized by
/// DST-I in the base and the DFT in the fiber.
pub struct Preconditioner {
    grid: Grid,
    m: usize,
    fiber_fwd: Arc<dyn Fft<f64>>,
    fiber_inv: Arc<dyn Fft<f64>>,
    dst: Arc<dyn Fft<f64>>,
    /// `1 / symbol`, fiber-major `[(ma nf + mb) m² + (k₁−1) m + (k₂−1)]`, with
    /// both DST and DFT normalizations folded in.
    inv_symbol: Vec<f64>,
}

impl std::fmt::Debug for Preconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Preconditioner").field("grid", &self.grid).finish()
    }
}

fn transpose_square(block: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            block.swap(r * n + c, c * n + r);
        }
    }
}

impl Preconditioner {
    pub fn new(grid: &Grid, mean: &[f64; 14]) -> Result<Self> {
        let (nb, nf) = (grid.nb, grid.nf);
        let m = nb - 1;
        let mut planner = FftPlanner::new();
        let fiber_fwd = planner.plan_fft_forward(nf);
        let fiber_inv = planner.plan_fft_inverse(nf);
        let dst = planner.plan_fft_forward(2 * nb);
        let (h1, h2, hf) = (grid.h1(), grid.h2(), grid.hf());
        let base_sym = |k: usize, h: f64| -4.0 * (PI * k as f64 / (2.0 * nb as f64)).sin().powi(2) / (h * h);
        let fib_sym = |q: usize| -4.0 * (PI * q as f64 / nf as f64).sin().powi(2) / (hf * hf);
        let fib_sin = |q: usize| (2.0 * PI * q as f64 / nf as f64).sin();
        // DST-I applied twice returns (nb/2)·x per axis; the inverse DFT is unnormalized
        let norm = (2.0 / nb as f64).powi(2) / (nf * nf) as f64;
        let mut inv_symbol = vec![0.0; nf * nf * m * m];
        for ma in 0..nf {
            for mb in 0..nf {
                let fiber = mean[2] * fib_sym(ma) + mean[3] * fib_sym(mb) - mean[9] * fib_sin(ma) * fib_sin(mb) / (hf * hf);
                for k1 in 1..nb {
                    for k2 in 1..nb {
                        let s = mean[0] * base_sym(k1, h1) + mean[1] * base_sym(k2, h2) + fiber;
                        if !(s < 0.0) {
                            return Err(Error::InvalidInput("preconditioner symbol is not negative definite".into()));
                        }
                        inv_symbol[(ma * nf + mb) * m * m + (k1 - 1) * m + (k2 - 1)] = norm / s;
                    }
                }
            }
        }
        Ok(Preconditioner { grid: *grid, m, fiber_fwd, fiber_inv, dst, inv_symbol })
    }

    fn fft2(&self, block: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, scratch: &mut Vec<Complex64>) {
        let nf = self.grid.nf;
        scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        plan.process_with_scratch(block, scratch);
        transpose_square(block, nf);
        plan.process_with_scratch(block, scratch);
        transpose_square(block, nf);
    }

    /// In-place DST-I along rows of an `m × m` block.
    fn dst_rows(&self, block: &mut [Complex64], ext: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        let m = self.m;
        let n2 = 2 * (m + 1);
        ext.resize(n2, Complex64::new(0.0, 0.0));
        scratch.resize(self.dst.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        let half_i = Complex64::new(0.0, 0.5);
        for row in block.chunks_mut(m) {
            ext[0] = Complex64::new(0.0, 0.0);
            ext[m + 1] = Complex64::new(0.0, 0.0);
            for j in 0..m {
                ext[j + 1] = row[j];
                ext[n2 - 1 - j] = -row[j];
            }
            self.dst.process_with_scratch(ext, scratch);
            for k in 0..m {
                row[k] = half_i * ext[k + 1];
            }
        }
    }

    fn dst2(&self, block: &mut [Complex64], ext: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        self.dst_rows(block, ext, scratch);
        transpose_square(block, self.m);
        self.dst_rows(block, ext, scratch);
        transpose_square(block, self.m);
    }

    /// `z = P⁻¹ r` on base-interior nodes; `z` vanishes on the base boundary.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let grid = self.grid;
        let (nf, m) = (grid.nf, self.m);
        let fl = nf * nf;
        let nbase = grid.nbase();
        let interior = |bi: usize| grid.base_index(bi / m + 1, bi % m + 1);
        let mut base_major = vec![Complex64::new(0.0, 0.0); m * m * fl];
        base_major.par_chunks_mut(fl).enumerate().for_each_init(Vec::new, |scratch, (bi, block)| {
            let src = &r[interior(bi) * fl..(interior(bi) + 1) * fl];
            for (d, s) in block.iter_mut().zip(src) {
                *d = Complex64::new(*s, 0.0);
            }
            self.fft2(block, &self.fiber_fwd, scratch);
        });
        let mut fiber_major = vec![Complex64::new(0.0, 0.0); m * m * fl];
        fiber_major.par_chunks_mut(m * m).enumerate().for_each_init(
            || (Vec::new(), Vec::new()),
            |(ext, scratch), (f, block)| {
                for (bi, v) in block.iter_mut().enumerate() {
                    *v = base_major[bi * fl + f];
                }
                self.dst2(block, ext, scratch);
                let sym = &self.inv_symbol[f * m * m..(f + 1) * m * m];
                for (v, s) in block.iter_mut().zip(sym) {
                    *v *= *s;
                }
                self.dst2(block, ext, scratch);
            },
        );
        base_major.par_chunks_mut(fl).enumerate().for_each_init(Vec::new, |scratch, (bi, block)| {
            for (f, v) in block.iter_mut().enumerate() {
                *v = fiber_major[f * m * m + bi];
            }
            self.fft2(block, &self.fiber_inv, scratch);
        });
        z.par_chunks_mut(fl).enumerate().for_each(|(base, out)| {
            let (i1, i2) = (base / nbase, base % nbase);
            if grid.is_base_interior(i1, i2) {
                let bi = (i1 - 1) * m + (i2 - 1);
                for (o, v) in out.iter_mut().zip(&base_major[bi * fl..(bi + 1) * fl]) {
                    *o = v.re;
                }
            } else {
                out.iter_mut().for_each(|v| *v = 0.0);
            }
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearSolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += a * x);
}

/// Solves `L x = rhs` by right-preconditioned BiCGSTAB to relative residual
/// `tol`, checked against the true residual.
pub fn linear_inner_solve(op: &LinearOperator, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, LinearSolveReport)> {
    let n = rhs.len();
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, LinearSolveReport { iterations: 0, relative_residual: 0.0 }));
    }
    let pre = Preconditioner::new(op.grid(), &op.mean_coefficients())?;
    let mut r = rhs.to_vec();
    let mut iterations = 0;
    let mut rel = 1.0;
    let (mut p, mut v, mut phat, mut s, mut shat, mut t) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    while iterations < max_iter {
        // (re)start from the current iterate
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        let mut restart = false;
        while iterations < max_iter {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 {
                restart = true;
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            p.par_iter_mut().zip(r.par_iter().zip(v.par_iter())).for_each(|(p, (r, v))| *p = r + beta * (*p - omega * v));
            pre.apply(&p, &mut phat);
            op.apply(&phat, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                restart = true;
                break;
            }
            alpha = rho / denom;
            s.par_iter_mut().zip(r.par_iter().zip(v.par_iter())).for_each(|(s, (r, v))| *s = r - alpha * v);
            axpy(&mut x, alpha, &phat);
            if norm(&s) / bnorm <= tol {
                r.copy_from_slice(&s);
                break;
            }
            pre.apply(&s, &mut shat);
            op.apply(&shat, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            axpy(&mut x, omega, &shat);
            r.par_iter_mut().zip(s.par_iter().zip(t.par_iter())).for_each(|(r, (s, t))| *r = s - omega * t);
            if norm(&r) / bnorm <= tol {
                break;
            }
            if omega == 0.0 {
                restart = true;
                break;
            }
        }
        // true residual guards against drift in the recurrence
        op.apply(&x, &mut t);
        r.par_iter_mut().zip(rhs.par_iter().zip(t.par_iter())).for_each(|(r, (b, ax))| *r = b - ax);
        rel = norm(&r) / bnorm;
        if rel <= tol {
            return Ok((x, LinearSolveReport { iterations, relative_residual: rel }));
        }
        let _ = restart;
    }
    Err(Error::IterationLimit { iterations, residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::model::{ChartTables, ModelFibration};

    fn flat_tables(nb: usize, nf: usize) -> ChartTables {
        let model = ModelFibration::constant(Complex64::new(0.0, 1.0), 0.5).unwrap();
        ChartTables::new(&model, &model.grid(nb, nf).unwrap()).unwrap()
    }

    #[test]
    fn identity_metric_single_mode_is_exact() {
        let tables = flat_tables(8, 6);
        let grid = tables.grid;
        let g = vec![Herm2::diag(1.0, 1.0); grid.len()];
        let op = LinearOperator::from_metric(&tables, &g);
        let (k1, k2, ma, mb) = (2usize, 3usize, 1usize, 2usize);
        let mut rhs = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            let (i1, i2, ja, jb) = grid.coords(idx);
            if grid.is_base_interior(i1, i2) {
                rhs[idx] = (PI * (k1 * i1) as f64 / 8.0).sin()
                    * (PI * (k2 * i2) as f64 / 8.0).sin()
                    * (2.0 * PI * (ma * ja + mb * jb) as f64 / 6.0).cos();
            }
        }
        // L = ¼(Δ_y + Δ_{ab}) for Z ≡ i and g = 1
        let sym = |k: usize, n: f64, h: f64| -4.0 * (PI * k as f64 / n).sin().powi(2) / (h * h);
        let lambda = 0.25
            * (sym(k1, 16.0, grid.h1()) + sym(k2, 16.0, grid.h2()) + sym(ma, 6.0, grid.hf()) + sym(mb, 6.0, grid.hf()));
        let (x, rep) = linear_inner_solve(&op, &rhs, 1e-12, 50).unwrap();
        let err = x.iter().zip(&rhs).map(|(x, b)| (x - b / lambda).abs()).fold(0.0, f64::max);
        let scale = rhs.iter().map(|b| (b / lambda).abs()).fold(0.0, f64::max);
        assert!(err / scale <= 1e-10, "relative error {}", err / scale);
        assert!(rep.iterations <= 2);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let tables = flat_tables(6, 4);
        let g = vec![Herm2::diag(2.0, 0.5); tables.grid.len()];
        let op = LinearOperator::from_metric(&tables, &g);
        let (x, rep) = linear_inner_solve(&op, &vec![0.0; tables.grid.len()], 1e-10, 10).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn variable_metric_residual_meets_tolerance() {
        let model = ModelFibration::default_model().unwrap();
        let grid = model.grid(8, 6).unwrap();
        let tables = ChartTables::new(&model, &grid).unwrap();
        let g: Vec<Herm2> = (0..grid.len())
            .map(|idx| {
                let (i1, i2, ja, jb) = grid.coords(idx);
                let w = 0.3 * ((i1 * 7 + i2 * 3 + ja * 5 + jb) % 11) as f64 / 11.0;
                Herm2::new(1.5 + w, Complex64::new(0.1 * w, -0.05), 0.6 - 0.5 * w)
            })
            .collect();
        let op = LinearOperator::from_metric(&tables, &g);
        let rhs: Vec<f64> = (0..grid.len())
            .map(|idx| {
                let (i1, i2, _, _) = grid.coords(idx);
                if grid.is_base_interior(i1, i2) { ((idx * 2654435761) % 1000) as f64 / 1000.0 - 0.5 } else { 0.0 }
            })
            .collect();
        let (x, _) = linear_inner_solve(&op, &rhs, 1e-9, 500).unwrap();
        let mut ax = vec![0.0; grid.len()];
        op.apply(&x, &mut ax);
        let res: f64 = ax.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(res / norm(&rhs) <= 1e-9);
    }

    #[test]
    fn sums_are_thread_count_independent() {
        let v: Vec<f64> = (0..100_000).map(|i| ((i * 37) % 101) as f64 * 1e-3).collect();
        let a = dot(&v, &v);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| dot(&v, &v));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
