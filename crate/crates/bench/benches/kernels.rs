use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use num_complex::Complex64;

use semiflat_core::collapse::model::ChartTables;
use semiflat_core::collapse::{assemble_reference, LinearOperator, Preconditioner};
use semiflat_core::period::EntrywiseFamily;
use semiflat_core::{
    eval_ddbar_eta, frobenius_normal_form, newton_solve, symplectic_normalize, BaseBox, CollapseProblem, HoloFn,
    ModelFibration, Polynomial, SemiFlatPotential, SkewForm, SolverConfig,
};

fn lattice_kernels(c: &mut Criterion) {
    let q = SkewForm::integral(&DMatrix::from_row_slice(
        4,
        4,
        &[0, 4, -2, 6, -4, 0, 8, 2, 2, -8, 0, 10, -6, -2, -10, 0],
    ))
    .unwrap();
    c.bench_function("symplectic_normalize 4x4", |b| b.iter(|| symplectic_normalize(black_box(&q)).unwrap()));
    c.bench_function("frobenius_normal_form 4x4", |b| b.iter(|| frobenius_normal_form(black_box(&q)).unwrap()));
}

fn semiflat_kernels(c: &mut Criterion) {
    let z = HoloFn::Poly(Polynomial::univariate(&[Complex64::i(), Complex64::new(0.0, 0.0), Complex64::new(0.1, 0.0)]));
    let base = BaseBox::new(vec![[-0.5, 0.5], [-0.5, 0.5]]).unwrap();
    let family = EntrywiseFamily::from_period(1, base, vec![z]).unwrap();
    let pot = SemiFlatPotential::new(Arc::new(family), &SkewForm::standard(1)).unwrap();
    let y = [Complex64::new(0.2, -0.1)];
    let zz = [Complex64::new(0.3, 0.4)];
    c.bench_function("eval_ddbar_eta n=1", |b| b.iter(|| eval_ddbar_eta(&pot, black_box(&y), black_box(&zz)).unwrap()));
}

fn solver_kernels(c: &mut Criterion) {
    let model = ModelFibration::default_model().unwrap();
    let mut group = c.benchmark_group("collapse");
    group.sample_size(10);
    for n in [8usize, 16] {
        let grid = model.grid(n, n).unwrap();
        let tables = ChartTables::new(&model, &grid).unwrap();
        let reference = assemble_reference(&model, &grid, 0.1).unwrap();
        let op = LinearOperator::from_metric(&tables, &reference.g);
        let pre = Preconditioner::new(&grid, &op.mean_coefficients()).unwrap();
        let x: Vec<f64> = (0..grid.len()).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let mut y = vec![0.0; grid.len()];
        group.bench_with_input(BenchmarkId::new("operator_apply", n), &n, |b, _| b.iter(|| op.apply(black_box(&x), &mut y)));
        group.bench_with_input(BenchmarkId::new("preconditioner_apply", n), &n, |b, _| {
            b.iter(|| pre.apply(black_box(&x), &mut y))
        });
        let problem = CollapseProblem::ricci_flat(&model, &grid, 0.1).unwrap();
        let config = SolverConfig::default().with_resolution(n, n);
        group.bench_with_input(BenchmarkId::new("newton_solve", n), &n, |b, _| {
            b.iter(|| newton_solve(black_box(&problem), &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lattice_kernels, semiflat_kernels, solver_kernels);
criterion_main!(benches);
