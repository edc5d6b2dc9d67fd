use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use magconc::ansatz::build_ansatz;
use magconc::field::make_potential;
use magconc::radial::solve_ground_state;
use magconc::reduction::{Linearization, SolverSettings};
use magconc::{BumpConfig, Params, PatchGeometry, PatchedField};
use num_complex::Complex64;

fn bump_cfg(geometry: PatchGeometry) -> BumpConfig {
    let profile = Arc::new(solve_ground_state(3.0, 2, 40.0, 1e-10).unwrap());
    let v = make_potential("gaussian_bump", &Params::new()).unwrap();
    BumpConfig::on_geometry(0.1, profile, v, vec![vec![0.5, 0.0]], geometry).unwrap()
}

fn ground_state(c: &mut Criterion) {
    c.bench_function("ground_state_2d", |b| b.iter(|| solve_ground_state(3.0, black_box(2), 40.0, 1e-10).unwrap()));
}

fn laplacian(c: &mut Criterion) {
    let cfg = bump_cfg(PatchGeometry::default());
    let u = build_ansatz(&cfg).unwrap();
    let op = cfg.operator(u.grid());
    c.bench_function("magnetic_laplacian_481sq_order16", |b| b.iter(|| op.laplacian(black_box(&u))));
}

fn ansatz(c: &mut Criterion) {
    let cfg = bump_cfg(PatchGeometry::default());
    c.bench_function("ansatz_481sq", |b| b.iter(|| build_ansatz(black_box(&cfg)).unwrap()));
}

fn projected_solve(c: &mut Criterion) {
    let cfg = bump_cfg(PatchGeometry::solver());
    let lin = Linearization::new(&cfg).unwrap();
    let rhs = PatchedField::from_fn(lin.grid().clone(), |_, p, i| {
        let s = p.offset(i);
        Complex64::new(s[0], 1.0) * (-0.1 * (s[0] * s[0] + s[1] * s[1])).exp()
    });
    let settings = SolverSettings::default();
    let mut g = c.benchmark_group("reduction");
    g.sample_size(10);
    g.bench_function("projected_solve_257sq", |b| b.iter(|| lin.solve_projected(black_box(&rhs), &settings).unwrap()));
    g.finish();
}

criterion_group!(benches, ground_state, laplacian, ansatz, projected_solve);
criterion_main!(benches);
