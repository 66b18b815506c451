//! Metric lookups on the universal cover of the fiber and the pointwise
//! tensors built from them.
//!
//! Components `g_{ij̄}` in the chart `(y, z = a + Z(y) b)` are periodic in `a`
//! but not in `b`: crossing `b → b + 1` is the deck map `z ↦ z + Z(y)`, whose
//! Jacobian `[[1, 0], [Z′, 1]]` mixes the base and fiber components. Every
//! stencil here works with unwrapped `b` indices and lifts stored values
//! accordingly, so derivatives never straddle a seam.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::collapse::linear::{chart_gradient, chart_stencil, steps};
use crate::collapse::{chart_coefficients, ChartTables, Grid, HessianStencil, MetricField, PeriodPoint};
use crate::error::{Error, Result};
use crate::linalg::Herm2;

/// `(i₁, i₂, j_a, j_b)` with `j_a` wrapped and `j_b` unwrapped.
pub type Node = [isize; 4];

pub(crate) type M2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CVec<const N: usize>(pub [Complex64; N]);

impl<const N: usize> Add for CVec<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        CVec(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl<const N: usize> Sub for CVec<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        CVec(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }
}

impl<const N: usize> Mul<f64> for CVec<N> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        CVec(self.0.map(|v| v * s))
    }
}

pub(crate) fn mat(h: &Herm2) -> M2 {
    [[Complex64::new(h.a, 0.0), h.b], [h.b.conj(), Complex64::new(h.d, 0.0)]]
}

pub(crate) fn mul(x: &M2, y: &M2) -> M2 {
    std::array::from_fn(|i| std::array::from_fn(|j| x[i][0] * y[0][j] + x[i][1] * y[1][j]))
}

pub(crate) fn trace(x: &M2) -> Complex64 {
    x[0][0] + x[1][1]
}

fn flatten(x: &M2) -> CVec<4> {
    CVec([x[0][0], x[0][1], x[1][0], x[1][1]])
}

fn unflatten(v: &CVec<4>) -> M2 {
    [[v.0[0], v.0[1]], [v.0[2], v.0[3]]]
}

/// `g` at `b + s` from `g` at `b`, with `w = s Z′(y)`.
pub fn lift(g: &Herm2, w: Complex64) -> Herm2 {
    Herm2::new(g.a - 2.0 * (w * g.b.conj()).re + w.norm_sqr() * g.d, g.b - w * g.d, g.d)
}

/// First-order data at a node: `G`, `G⁻¹`, `∂_p G` and `∂̄_p G`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Local {
    pub g: M2,
    pub ginv: M2,
    pub dg: [M2; 2],
    pub dbg: [M2; 2],
}

/// Christoffel tensor `T[p][k][j] = T^k_{pj} = g^{kl̄} ∂_p g_{jl̄}`.
pub(crate) type Tensor3 = [[[Complex64; 2]; 2]; 2];

/// A metric field viewed on the cover of every fiber.
#[derive(Debug, Clone, Copy)]
pub struct CoverMetric<'a> {
    grid: Grid,
    g: &'a [Herm2],
    period: &'a [PeriodPoint],
}

impl<'a> CoverMetric<'a> {
    pub fn new(tables: &'a ChartTables, metric: &'a MetricField) -> Result<Self> {
        if metric.grid != tables.grid || metric.g.len() != tables.grid.len() {
            return Err(Error::Dimension("metric and chart tables live on different grids".into()));
        }
        Ok(CoverMetric { grid: tables.grid, g: &metric.g, period: &tables.period })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn period(&self, x: &Node) -> &PeriodPoint {
        &self.period[self.grid.base_index(x[0] as usize, x[1] as usize)]
    }

    /// Metric at an unwrapped node.
    pub fn at(&self, x: Node) -> Herm2 {
        let nf = self.grid.nf as isize;
        let (ja, jb, s) = (x[2].rem_euclid(nf), x[3].rem_euclid(nf), x[3].div_euclid(nf));
        let g = self.g[self.grid.index(x[0] as usize, x[1] as usize, ja as usize, jb as usize)];
        if s == 0 {
            g
        } else {
            lift(&g, self.period(&x).dz * s as f64)
        }
    }

    pub(crate) fn coefficients(&self, x: &Node) -> [[Complex64; 4]; 2] {
        chart_coefficients(self.period(x), self.grid.b(x[3]))
    }

    pub(crate) fn stencil(&self, x: &Node) -> HessianStencil {
        HessianStencil::new(self.period(x), self.grid.b(x[3]))
    }

    pub(crate) fn steps(&self) -> [f64; 4] {
        steps(&self.grid)
    }

    fn shifted(x: &Node, o: [isize; 4]) -> Node {
        [x[0] + o[0], x[1] + o[1], x[2] + o[2], x[3] + o[3]]
    }

    /// Number of base steps the node is away from the boundary.
    pub fn reach(&self, x: &Node) -> isize {
        let nb = self.grid.nb as isize;
        x[0].min(x[1]).min(nb - x[0]).min(nb - x[1])
    }

    /// Holomorphic and antiholomorphic derivatives of a vector field from
    /// its chart gradient at `x`.
    pub(crate) fn complex_gradient<const N: usize, F>(&self, x: &Node, f: F) -> ([CVec<N>; 2], [CVec<N>; 2])
    where
        F: Fn(Node) -> CVec<N>,
    {
        let d = chart_gradient(|o| f(Self::shifted(x, o)), self.steps());
        let c = self.coefficients(x);
        let combine = |p: usize, bar: bool| {
            CVec(std::array::from_fn(|n| {
                (0..4).map(|r| if bar { c[p][r].conj() * d[r].0[n] } else { c[p][r] * d[r].0[n] }).sum()
            }))
        };
        ([combine(0, false), combine(1, false)], [combine(0, true), combine(1, true)])
    }

    /// Real and complex second derivatives of a field at `x`.
    pub(crate) fn chart_jet<T, F>(&self, x: &Node, f: F) -> ([T; 4], [T; 10])
    where
        T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
        F: Fn(Node) -> T,
    {
        chart_stencil(|o| f(Self::shifted(x, o)), self.steps())
    }

    pub(crate) fn local(&self, x: &Node) -> Local {
        let g = self.at(*x);
        let ginv = mat(&g.inverse());
        let (d, db) = self.complex_gradient(x, |y| flatten(&mat(&self.at(y))));
        Local { g: mat(&g), ginv, dg: [unflatten(&d[0]), unflatten(&d[1])], dbg: [unflatten(&db[0]), unflatten(&db[1])] }
    }

    pub(crate) fn christoffel(&self, x: &Node) -> (Local, Tensor3) {
        let l = self.local(x);
        let mut t = [[[ZERO; 2]; 2]; 2];
        for (p, tp) in t.iter_mut().enumerate() {
            let prod = mul(&l.dg[p], &l.ginv);
            for (k, row) in tp.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = prod[j][k];
                }
            }
        }
        (l, t)
    }
}

/// `Σ (G⁻¹)_{qp} M_{pq}`, the `g`-trace of a complex Hessian.
pub(crate) fn g_trace(ginv: &M2, m: &M2) -> Complex64 {
    let mut acc = ZERO;
    for p in 0..2 {
        for q in 0..2 {
            acc += ginv[q][p] * m[p][q];
        }
    }
    acc
}

/// `Σ (G⁻¹)_{p′p} tr(∂_p G G⁻¹ ∂̄_{p′} G G⁻¹)` with every index and derivative
/// weighted by `w`.
pub(crate) fn calabi_triple(l: &Local, w: [f64; 2]) -> f64 {
    let wm = |x: &M2, s: f64| -> M2 { std::array::from_fn(|i| std::array::from_fn(|j| x[i][j] * (s * w[i] * w[j]))) };
    let ginv: M2 = std::array::from_fn(|i| std::array::from_fn(|j| l.ginv[i][j] / (w[i] * w[j])));
    let mut acc = ZERO;
    for p in 0..2 {
        let a = mul(&wm(&l.dg[p], w[p]), &ginv);
        for pp in 0..2 {
            let b = mul(&wm(&l.dbg[pp], w[pp]), &ginv);
            acc += ginv[pp][p] * trace(&mul(&a, &b));
        }
    }
    acc.re
}

/// `|T|²_g = Σ g^{iī′} g^{jj̄′} g_{kk̄′} T^k_{ij} conj(T^{k′}_{i′j′})`.
pub(crate) fn tensor3_norm(l: &Local, t: &Tensor3) -> f64 {
    let mut acc = ZERO;
    for i in 0..2 {
        for ii in 0..2 {
            for j in 0..2 {
                for jj in 0..2 {
                    for k in 0..2 {
                        for kk in 0..2 {
                            acc += l.ginv[ii][i] * l.ginv[jj][j] * l.g[k][kk] * t[i][k][j] * t[ii][kk][jj].conj();
                        }
                    }
                }
            }
        }
    }
    acc.re
}

/// Norm of `X[p][k][i][j]` with a holomorphic (`bar = false`) or
/// antiholomorphic derivative slot `p`.
pub(crate) fn tensor4_norm(l: &Local, x: &[Tensor3; 2], bar: bool) -> f64 {
    let mut acc = ZERO;
    for p in 0..2 {
        for pp in 0..2 {
            let wp = if bar { l.ginv[p][pp] } else { l.ginv[pp][p] };
            for i in 0..2 {
                for ii in 0..2 {
                    for j in 0..2 {
                        for jj in 0..2 {
                            let w = wp * l.ginv[ii][i] * l.ginv[jj][j];
                            for k in 0..2 {
                                for kk in 0..2 {
                                    acc += w * l.g[k][kk] * x[p][i][k][j] * x[pp][ii][kk][jj].conj();
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    acc.re
}

pub(crate) fn flatten3(t: &Tensor3) -> CVec<8> {
    CVec(std::array::from_fn(|n| t[n / 4][(n / 2) % 2][n % 2]))
}

pub(crate) fn unflatten3(v: &CVec<8>) -> Tensor3 {
    std::array::from_fn(|p| std::array::from_fn(|k| std::array::from_fn(|j| v.0[p * 4 + k * 2 + j])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::ModelFibration;

    #[test]
    fn lift_matches_reference_at_shifted_fiber() {
        let model = ModelFibration::default_model().unwrap();
        let y = Complex64::new(0.3, -0.2);
        let zp = model.period(y).unwrap().dz;
        for (b, s) in [(0.1, 1.0), (0.7, -1.0), (0.45, 2.0)] {
            let g = model.reference_at(y, b, 0.3).unwrap();
            let shifted = model.reference_at(y, b + s, 0.3).unwrap();
            assert!(lift(&g, zp * s).max_abs_diff(&shifted) <= 1e-12);
        }
    }

    #[test]
    fn lookups_are_continuous_across_the_seam() {
        let model = ModelFibration::default_model().unwrap();
        let grid = model.grid(6, 8).unwrap();
        let tables = ChartTables::new(&model, &grid).unwrap();
        let metric = crate::collapse::reference_from_tables(&tables, 0.5).unwrap();
        let cover = CoverMetric::new(&tables, &metric).unwrap();
        for jb in [-3isize, 8, 9, 15] {
            let y = grid.y(2, 4);
            let exact = model.reference_at(y, grid.b(jb), 0.5).unwrap();
            assert!(cover.at([2, 4, 3, jb]).max_abs_diff(&exact) <= 1e-12);
        }
    }
}
