use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cover::{
    calabi_triple, flatten3, g_trace, mat, mul, tensor3_norm, tensor4_norm, trace, unflatten3, CVec, CoverMetric,
    Local, Node, Tensor3,
};
use crate::collapse::{Grid, MetricField};
use crate::error::{Error, Result};
use crate::linalg::Herm2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Comparison region: base nodes at a fractional margin from the boundary,
/// times a strided subset of fiber nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub margin: f64,
    pub fiber_stride: usize,
    pub base: Vec<(usize, usize)>,
}

impl Region {
    pub fn new(grid: &Grid, margin: f64, fiber_stride: usize) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) || fiber_stride == 0 {
            return Err(Error::InvalidInput("region margin must lie in [0, 0.5) and stride be positive".into()));
        }
        let base = grid.region(margin);
        if base.is_empty() {
            return Err(Error::RegionEmpty);
        }
        Ok(Region { margin, fiber_stride, base })
    }

    /// Keeps base nodes with at least `reach` interior neighbours in every
    /// direction, so that stencils of that depth see only solved values.
    pub fn clipped(&self, grid: &Grid, reach: usize) -> Result<Self> {
        let ok = |i: usize| i > reach && i + reach < grid.nb;
        let base: Vec<_> = self.base.iter().copied().filter(|&(i1, i2)| ok(i1) && ok(i2)).collect();
        if base.is_empty() {
            return Err(Error::RegionEmpty);
        }
        Ok(Region { base, ..self.clone() })
    }

    pub fn nodes(&self, grid: &Grid) -> Vec<Node> {
        let mut out = Vec::new();
        for &(i1, i2) in &self.base {
            for ja in (0..grid.nf).step_by(self.fiber_stride) {
                for jb in (0..grid.nf).step_by(self.fiber_stride) {
                    out.push([i1 as isize, i2 as isize, ja as isize, jb as isize]);
                }
            }
        }
        out
    }

    /// Inclusive index bounds of the base box.
    pub fn bounds(&self) -> [[usize; 2]; 2] {
        let f = |sel: fn(&(usize, usize)) -> usize| {
            [self.base.iter().map(sel).min().unwrap_or(0), self.base.iter().map(sel).max().unwrap_or(0)]
        };
        [f(|p| p.0), f(|p| p.1)]
    }
}

/// Weights `(1, t^{-1/2})` carried by base and fiber indices after rescaling.
pub fn rescaling_weights(t: f64) -> [f64; 2] {
    [1.0, t.sqrt().recip()]
}

/// Generalized eigenvalues of the pencil `(g, h)`, from
/// `det(g − λh) = 0`.
pub fn pencil_eigenvalues(g: &Herm2, h: &Herm2) -> (f64, f64) {
    let a = h.det();
    let b = g.a * h.d + g.d * h.a - 2.0 * (g.b * h.b.conj()).re;
    let c = g.det();
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let q = 0.5 * (b + disc);
    let (l1, l2) = (c / q, q / a);
    (l1.min(l2), l1.max(l2))
}

/// `C_K(t) = max(sup λ_max, sup 1/λ_min)` for `g` against `δ_t = 1 ⊕ t`.
pub fn metric_equivalence_constants(metric: &MetricField, region: &Region) -> Result<f64> {
    let grid = metric.grid;
    if region.base.is_empty() {
        return Err(Error::RegionEmpty);
    }
    let w = rescaling_weights(metric.t);
    let c = region
        .nodes(&grid)
        .par_iter()
        .map(|x| {
            let g = metric.g[grid.index(x[0] as usize, x[1] as usize, x[2] as usize, x[3] as usize)];
            let (lo, hi) = g.weighted(w[0], w[1]).eigenvalues();
            hi.max(1.0 / lo)
        })
        .reduce(|| 0.0, f64::max);
    Ok(c)
}

/// `C = max(sup λ_max, sup 1/λ_min)` of `g` against an arbitrary positive `h`.
pub fn equivalence_constant(g: &[Herm2], h: &[Herm2]) -> Result<f64> {
    if g.len() != h.len() || g.is_empty() {
        return Err(Error::Dimension("comparison fields must be non-empty and equally long".into()));
    }
    Ok(g.iter().zip(h).map(|(g, h)| {
        let (lo, hi) = pencil_eigenvalues(g, h);
        hi.max(1.0 / lo)
    })
    .fold(0.0, f64::max))
}

/// `S` at a node in rescaled coordinates.
pub(crate) fn s_at(cover: &CoverMetric, x: &Node, w: [f64; 2]) -> f64 {
    calabi_triple(&cover.local(x), w)
}

/// Calabi's `S` at every region node (rescaled by `t`), together with the
/// largest relative gap to the independent `|T|²_g` evaluation.
pub fn calabi_s(cover: &CoverMetric, region: &Region, t: f64) -> (Vec<f64>, f64) {
    let w = rescaling_weights(t);
    let rows: Vec<(f64, f64)> = region
        .nodes(cover.grid())
        .par_iter()
        .map(|x| {
            let (l, tt) = cover.christoffel(x);
            let s = calabi_triple(&l, w);
            let t2 = tensor3_norm(&l, &tt);
            (s, (s - t2).abs() / s.abs().max(t2.abs()).max(f64::MIN_POSITIVE))
        })
        .collect();
    let gap = rows.iter().map(|r| if r.0 == 0.0 && r.1 == 0.0 { 0.0 } else { r.1 }).fold(0.0, f64::max);
    (rows.into_iter().map(|r| r.0).collect(), gap)
}

/// Pointwise comparison of two sides of an identity over a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    /// `sup |lhs − rhs|`.
    pub absolute: f64,
    /// `max(sup |lhs|, sup |rhs|)`.
    pub scale: f64,
    /// `absolute / scale`, or 0 when both sides vanish.
    pub relative: f64,
    pub nodes: usize,
}

impl IdentityResidual {
    fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let absolute = pairs.iter().map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
        let scale = pairs.iter().map(|(l, r)| l.abs().max(r.abs())).fold(0.0, f64::max);
        let relative = if scale > 0.0 { absolute / scale } else { 0.0 };
        IdentityResidual { absolute, scale, relative, nodes: pairs.len() }
    }
}

/// `∇T` and `∇̄T` at a node, with `∇_p T^k_{ij} = ∂_p T^k_{ij} + T^k_{pm} T^m_{ij} − T^m_{pi} T^k_{mj} − T^m_{pj} T^k_{im}`.
fn covariant_derivatives(cover: &CoverMetric, x: &Node) -> (Local, [Tensor3; 2], [Tensor3; 2]) {
    let (l, t) = cover.christoffel(x);
    let (d, db) = cover.complex_gradient(x, |y| flatten3(&cover.christoffel(&y).1));
    let mut nabla = [[[[ZERO; 2]; 2]; 2]; 2];
    for p in 0..2 {
        let dp = unflatten3(&d[p]);
        for i in 0..2 {
            for k in 0..2 {
                for j in 0..2 {
                    let mut v = dp[i][k][j];
                    for m in 0..2 {
                        v += t[p][k][m] * t[i][m][j] - t[p][m][i] * t[m][k][j] - t[p][m][j] * t[i][k][m];
                    }
                    nabla[p][i][k][j] = v;
                }
            }
        }
    }
    (l, nabla, [unflatten3(&db[0]), unflatten3(&db[1])])
}

fn scalar_laplacian<F: Fn(Node) -> f64>(cover: &CoverMetric, x: &Node, ginv: &Herm2, f: F) -> f64 {
    let (d1, d2) = cover.chart_jet(x, f);
    let m = cover.stencil(x).apply(&d1, &d2);
    ginv.a * m[0].re + ginv.d * m[2].re + 2.0 * (ginv.b.conj() * m[1]).re
}

/// Checks `Δ_g S = |∇T|² + |∇̄T|²` by finite differences on the region.
/// The metric must be numerically Ricci-flat: `logdet_spread ≤ tolerance`.
pub fn laplacian_identity_check(
    cover: &CoverMetric,
    region: &Region,
    logdet_spread: f64,
    tolerance: f64,
) -> Result<IdentityResidual> {
    if !(logdet_spread <= tolerance) {
        return Err(Error::NotRicciFlat { spread: logdet_spread });
    }
    let region = region.clipped(cover.grid(), 2)?;
    let one = [1.0, 1.0];
    let pairs: Vec<(f64, f64)> = region
        .nodes(cover.grid())
        .par_iter()
        .map(|x| {
            let ginv = cover.at(*x).inverse();
            let lhs = scalar_laplacian(cover, x, &ginv, |y| s_at(cover, &y, one));
            let (l, nabla, nabla_bar) = covariant_derivatives(cover, x);
            (lhs, tensor4_norm(&l, &nabla, false) + tensor4_norm(&l, &nabla_bar, true))
        })
        .collect();
    Ok(IdentityResidual::from_pairs(&pairs))
}

/// `Q_{ij̄} = tr(∂_i G G⁻¹ ∂̄_j G G⁻¹)`.
fn q_matrix(l: &Local) -> [[Complex64; 2]; 2] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| trace(&mul(&mul(&l.dg[i], &l.ginv), &mul(&l.dbg[j], &l.ginv))))
    })
}

/// `Δ_g g_{ij̄} − Q_{ij̄}` over the region, components weighted to rescaled
/// coordinates.
pub fn poisson_system_residual(cover: &CoverMetric, region: &Region, t: f64) -> Result<IdentityResidual> {
    let region = region.clipped(cover.grid(), 1)?;
    let w = rescaling_weights(t);
    let rows: Vec<[(f64, f64); 8]> = region
        .nodes(cover.grid())
        .par_iter()
        .map(|x| {
            let l = cover.local(x);
            let (d1, d2) = cover.chart_jet(x, |y| {
                let m = mat(&cover.at(y));
                CVec([m[0][0], m[0][1], m[1][0], m[1][1]])
            });
            let st = cover.stencil(x);
            let q = q_matrix(&l);
            let mut out = [(0.0, 0.0); 8];
            for n in 0..4 {
                let (i, j) = (n / 2, n % 2);
                let hess = st.apply_complex(&d1.map(|v| v.0[n]), &d2.map(|v| v.0[n]));
                let lhs = g_trace(&l.ginv, &hess) * (w[i] * w[j]);
                let rhs = q[i][j] * (w[i] * w[j]);
                out[2 * n] = (lhs.re, rhs.re);
                out[2 * n + 1] = (lhs.im, rhs.im);
            }
            out
        })
        .collect();
    let flat: Vec<(f64, f64)> = rows.iter().flatten().copied().collect();
    let mut r = IdentityResidual::from_pairs(&flat);
    r.nodes = rows.len();
    Ok(r)
}

/// Aubin–Yau companion: `Δ_g tr_δ g` against the contraction
/// `δ^{il̄} g^{jq̄} g^{pk̄} ∂_i g_{jk̄} ∂̄_l g_{pq̄}`, with `δ = δ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AubinYauReport {
    pub equality: IdentityResidual,
    /// Smallest contraction value (nonnegative in exact arithmetic).
    pub min_contraction: f64,
    /// Smallest `contraction − S / C_K`; nonnegative when the lower bound holds.
    pub min_bound_margin: f64,
}

pub fn aubin_yau_check(cover: &CoverMetric, region: &Region, t: f64, c_k: f64) -> Result<AubinYauReport> {
    let region = region.clipped(cover.grid(), 1)?;
    let delta_inv = [1.0, 1.0 / t];
    let rows: Vec<(f64, f64, f64)> = region
        .nodes(cover.grid())
        .par_iter()
        .map(|x| {
            let l = cover.local(x);
            let ginv = cover.at(*x).inverse();
            let lhs = scalar_laplacian(cover, x, &ginv, |y| {
                let g = cover.at(y);
                g.a * delta_inv[0] + g.d * delta_inv[1]
            });
            let mut acc = ZERO;
            for (i, di) in delta_inv.iter().enumerate() {
                for j in 0..2 {
                    for q in 0..2 {
                        for p in 0..2 {
                            for k in 0..2 {
                                acc += *di * l.ginv[q][j] * l.ginv[k][p] * l.dg[i][j][k] * l.dbg[i][p][q];
                            }
                        }
                    }
                }
            }
            let s = calabi_triple(&l, [1.0, 1.0]);
            (lhs, acc.re, acc.re - s / c_k)
        })
        .collect();
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    Ok(AubinYauReport {
        equality: IdentityResidual::from_pairs(&pairs),
        min_contraction: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        min_bound_margin: rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
    })
}

/// Sorted derivative words over `{∂_y, ∂̄_y, ∂_z, ∂̄_z}` (codes 0..4) of
/// length `k`, with their multinomial multiplicities.
fn words(k: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(k: usize, min: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for op in min..4 {
            cur.push(op);
            rec(k, op, cur, out);
            cur.pop();
        }
    }
    let mut list = Vec::new();
    rec(k, 0, &mut Vec::new(), &mut list);
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    list.into_iter()
        .map(|w| {
            let counts = (0..4).map(|op| fact(w.iter().filter(|&&v| v == op).count())).product::<f64>();
            let mult = fact(k) / counts;
            (w, mult)
        })
        .collect()
}

/// All words of length `k` applied to the metric components at `x`.
fn derivative_table(cover: &CoverMetric, x: &Node, table: &[Vec<(Vec<usize>, f64)>], k: usize) -> Vec<CVec<4>> {
    if k == 0 {
        let m = mat(&cover.at(*x));
        return vec![CVec([m[0][0], m[0][1], m[1][0], m[1][1]])];
    }
    let h = cover.steps();
    let c = cover.coefficients(x);
    let mut grads: Vec<[CVec<4>; 4]> = vec![[CVec([ZERO; 4]); 4]; table[k - 1].len()];
    for r in 0..4 {
        let mut plus = *x;
        plus[r] += 1;
        let mut minus = *x;
        minus[r] -= 1;
        let up = derivative_table(cover, &plus, table, k - 1);
        let down = derivative_table(cover, &minus, table, k - 1);
        for (g, (u, d)) in grads.iter_mut().zip(up.iter().zip(&down)) {
            g[r] = (*u - *d) * (0.5 / h[r]);
        }
    }
    table[k]
        .iter()
        .map(|(word, _)| {
            let rest = &word[1..];
            let idx = table[k - 1].iter().position(|(w, _)| w.as_slice() == rest).expect("sub-word present");
            let (p, bar) = (word[0] / 2, word[0] % 2 == 1);
            CVec(std::array::from_fn(|n| {
                (0..4).map(|r| if bar { c[p][r].conj() } else { c[p][r] } * grads[idx][r].0[n]).sum()
            }))
        })
        .collect()
}

/// `sup_K |D^k g̃|` for `k = 0..=k_max` in rescaled coordinates, where `D`
/// ranges over complex coordinate derivatives and fiber derivatives and
/// indices carry weight `t^{-1/2}`.
pub fn weighted_norms(cover: &CoverMetric, region: &Region, t: f64, k_max: usize) -> Result<Vec<f64>> {
    let region = region.clipped(cover.grid(), k_max.max(1))?;
    let w = rescaling_weights(t);
    let table: Vec<_> = (0..=k_max).map(words).collect();
    let comp_w = [w[0] * w[0], w[0] * w[1], w[1] * w[0], w[1] * w[1]];
    let per_node: Vec<Vec<f64>> = region
        .nodes(cover.grid())
        .par_iter()
        .map(|x| {
            (0..=k_max)
                .map(|k| {
                    let vals = derivative_table(cover, x, &table, k);
                    let mut acc = 0.0;
                    for ((word, mult), v) in table[k].iter().zip(&vals) {
                        let ww: f64 = word.iter().map(|op| w[op / 2]).product();
                        for n in 0..4 {
                            acc += mult * (v.0[n] * (ww * comp_w[n])).norm_sqr();
                        }
                    }
                    acc.sqrt()
                })
                .collect()
        })
        .collect();
    Ok((0..=k_max).map(|k| per_node.iter().map(|v| v[k]).fold(0.0, f64::max)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::{reference_from_tables, ChartTables, ModelFibration};

    /// `g_ref + (κ Y − 1 − t) dy dȳ` has constant determinant, so it is an
    /// exactly Ricci-flat Kähler metric with the same structure as a solve.
    fn ricci_flat_oracle(model: &ModelFibration, n: usize, t: f64) -> (ChartTables, MetricField) {
        let grid = model.grid(n, n).unwrap();
        let tables = ChartTables::new(model, &grid).unwrap();
        let mut metric = reference_from_tables(&tables, t).unwrap();
        let kappa = (1.0 + t) / tables.period[grid.base_index(n / 2, n / 2)].z.im;
        for idx in 0..grid.len() {
            let (i1, i2, _, _) = grid.coords(idx);
            let y = tables.period[grid.base_index(i1, i2)].z.im;
            metric.g[idx] = metric.g[idx] + Herm2::diag(kappa * y - 1.0 - t, 0.0);
        }
        (tables, metric)
    }

    fn constant_metric(t: f64) -> (ChartTables, MetricField) {
        let model = ModelFibration::constant(Complex64::new(0.0, 1.0), 0.5).unwrap();
        let grid = model.grid(8, 8).unwrap();
        let tables = ChartTables::new(&model, &grid).unwrap();
        let metric = reference_from_tables(&tables, t).unwrap();
        (tables, metric)
    }

    #[test]
    fn flat_product_constant_is_t_independent() {
        for t in [1.0, 0.3, 0.01] {
            let (tables, metric) = constant_metric(t);
            let region = Region::new(&tables.grid, 0.25, 1).unwrap();
            // δ_t-weighted metric is diag(1 + t, 1/2)
            assert!((metric_equivalence_constants(&metric, &region).unwrap() - 2.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn delta_itself_gives_one() {
        let (tables, mut metric) = constant_metric(0.04);
        metric.g.iter_mut().for_each(|g| *g = Herm2::diag(1.0, 0.04));
        let region = Region::new(&tables.grid, 0.25, 2).unwrap();
        assert!((metric_equivalence_constants(&metric, &region).unwrap() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn weighted_comparison_matches_explicit_pencil() {
        let model = ModelFibration::default_model().unwrap();
        let (tables, metric) = ricci_flat_oracle(&model, 8, 0.05);
        let region = Region::new(&tables.grid, 0.25, 1).unwrap();
        let grid = tables.grid;
        let nodes = region.nodes(&grid);
        let g: Vec<Herm2> =
            nodes.iter().map(|x| metric.g[grid.index(x[0] as usize, x[1] as usize, x[2] as usize, x[3] as usize)]).collect();
        let delta = vec![Herm2::diag(1.0, 0.05); g.len()];
        let explicit = equivalence_constant(&g, &delta).unwrap();
        let weighted = metric_equivalence_constants(&metric, &region).unwrap();
        assert!((explicit - weighted).abs() <= 1e-12 * explicit);
    }

    #[test]
    fn semi_flat_fiber_block_compares_to_one() {
        let model = ModelFibration::default_model().unwrap();
        let y = Complex64::new(0.2, 0.1);
        for t in [1.0, 0.1, 0.001] {
            let sf = model.omega_sf(y, 0.3).unwrap();
            let tsf = Herm2::diag(0.0, t * sf.d);
            let w = rescaling_weights(t);
            let fiber = tsf.weighted(w[0], w[1]).d;
            assert!((fiber / sf.d - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn s_vanishes_for_constant_metric_and_formulas_agree() {
        let (tables, metric) = constant_metric(0.2);
        let cover = CoverMetric::new(&tables, &metric).unwrap();
        let region = Region::new(&tables.grid, 0.25, 1).unwrap();
        let (s, _) = calabi_s(&cover, &region, 0.2);
        assert!(s.iter().all(|v| v.abs() <= 1e-20));

        let model = ModelFibration::default_model().unwrap();
        let (tables, metric) = ricci_flat_oracle(&model, 8, 0.1);
        let cover = CoverMetric::new(&tables, &metric).unwrap();
        let (s, gap) = calabi_s(&cover, &region, 0.1);
        assert!(gap <= 1e-9, "gap {gap}");
        assert!(s.iter().all(|v| *v >= 0.0) && s.iter().any(|v| *v > 1e-6));
        let (s_unweighted, _) = calabi_s(&cover, &region, 1.0);
        for (a, b) in s.iter().zip(&s_unweighted) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn identities_vanish_for_flat_metric() {
        let (tables, metric) = constant_metric(0.5);
        let cover = CoverMetric::new(&tables, &metric).unwrap();
        let region = Region::new(&tables.grid, 0.25, 2).unwrap();
        assert_eq!(laplacian_identity_check(&cover, &region, 0.0, 1e-8).unwrap().absolute, 0.0);
        assert!(poisson_system_residual(&cover, &region, 0.5).unwrap().absolute <= 1e-13);
        let ay = aubin_yau_check(&cover, &region, 0.5, 2.0).unwrap();
        assert!(ay.equality.absolute <= 1e-13 && ay.min_contraction.abs() <= 1e-20);
    }

    #[test]
    fn not_ricci_flat_is_reported() {
        let (tables, metric) = constant_metric(0.5);
        let cover = CoverMetric::new(&tables, &metric).unwrap();
        let region = Region::new(&tables.grid, 0.25, 2).unwrap();
        assert!(matches!(laplacian_identity_check(&cover, &region, 1e-3, 1e-8), Err(Error::NotRicciFlat { .. })));
    }

    #[test]
    fn identity_residuals_decay_under_refinement() {
        let model = ModelFibration::default_model().unwrap();
        let mut lap = Vec::new();
        let mut poi = Vec::new();
        let mut ay = Vec::new();
        for n in [12, 24] {
            let (tables, metric) = ricci_flat_oracle(&model, n, 0.1);
            let cover = CoverMetric::new(&tables, &metric).unwrap();
            let region = Region::new(&tables.grid, 0.25, n / 4).unwrap();
            lap.push(laplacian_identity_check(&cover, &region, 0.0, 1e-8).unwrap().relative);
            poi.push(poisson_system_residual(&cover, &region, 0.1).unwrap().relative);
            let c = metric_equivalence_constants(&metric, &region).unwrap();
            let a = aubin_yau_check(&cover, &region, 0.1, c).unwrap();
            assert!(a.min_contraction >= 0.0 && a.min_bound_margin >= -1e-12);
            ay.push(a.equality.relative);
        }
        assert!(lap[0] / lap[1] >= 3.0, "{lap:?}");
        assert!(poi[0] / poi[1] >= 3.0, "{poi:?}");
        assert!(ay[0] / ay[1] >= 3.0, "{ay:?}");
    }

    #[test]
    fn poisson_residual_separates_non_solutions() {
        let model = ModelFibration::default_model().unwrap();
        let (tables, mut metric) = ricci_flat_oracle(&model, 8, 0.3);
        let grid = tables.grid;
        for idx in 0..grid.len() {
            let (i1, i2, _, _) = grid.coords(idx);
            let bump = 0.3 * ((i1 as f64) * 0.7).sin() * ((i2 as f64) * 0.9).cos();
            metric.g[idx] = metric.g[idx] + Herm2::diag(bump, 0.0);
        }
        let cover = CoverMetric::new(&tables, &metric).unwrap();
        let region = Region::new(&grid, 0.25, 2).unwrap();
        assert!(poisson_system_residual(&cover, &region, 0.3).unwrap().relative > 0.1);
    }

    #[test]
    fn word_table_counts() {
        assert_eq!(words(0).len(), 1);
        assert_eq!(words(2).len(), 10);
        assert_eq!(words(3).len(), 20);
        let total: f64 = words(3).iter().map(|w| w.1).sum();
        assert_eq!(total, 64.0);
    }

    #[test]
    fn weighted_norms_of_constant_metric() {
        let t = 0.25;
        let (tables, metric) = constant_metric(t);
        let cover = CoverMetric::new(&tables, &metric).unwrap();
        let region = Region::new(&tables.grid, 0.25, 2).unwrap();
        let norms = weighted_norms(&cover, &region, t, 3).unwrap();
        // rescaled metric diag(1 + t, 1/2)
        assert!((norms[0] - ((1.0 + t).powi(2) + 0.25f64).sqrt()).abs() <= 1e-14);
        assert!(norms[1..].iter().all(|v| *v <= 1e-10));
        assert_eq!(weighted_norms(&cover, &region, t, 0).unwrap().len(), 1);
    }
}
