use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Vector2;
use vpconvex_core::field::{
    grid_poisson_solve, vpme_poisson_solve, BoundaryCondition, DensitySpec, GreenField, PolarGrid, VpmeMethod,
    VpmeOptions,
};
use vpconvex_core::kinetic::{deposit_density, init_ensemble, linear_vlasov_solve, FieldSolveConfig};
use vpconvex_core::{advance, Domain2, FieldModel, FlowOptions, InitialDataSpec, PhaseState, Profile};

fn fields(c: &mut Criterion) {
    let rho = DensitySpec::appendix_default();
    let green = GreenField::appendix();
    let x = Vector2::new(-0.3, 0.4);
    c.bench_function("green_field_point", |b| b.iter(|| green.field(black_box(&x))));

    let grid = PolarGrid::new(64, 128);
    c.bench_function("poisson_dirichlet_64x128", |b| {
        b.iter(|| grid_poisson_solve(black_box(&rho), &BoundaryCondition::Dirichlet, &grid).unwrap())
    });
    c.bench_function("vpme_newton_64x128", |b| {
        b.iter(|| {
            vpme_poisson_solve(black_box(&rho), &BoundaryCondition::Dirichlet, &grid, VpmeMethod::DampedNewton, &VpmeOptions::default())
                .unwrap()
        })
    });
}

fn flows(c: &mut Criterion) {
    let disk = Domain2::unit_disk();
    let start = PhaseState::new(0.0, Vector2::new(0.1, -0.2), Vector2::new(1.3, 0.7));
    c.bench_function("free_billiard_t10", |b| {
        b.iter(|| advance(&disk, black_box(&start), &FieldModel::zero(), 10.0, &FlowOptions::default()).unwrap())
    });
    let green = FieldModel::appendix();
    c.bench_function("appendix_field_trajectory_t1", |b| {
        b.iter(|| advance(&disk, black_box(&start), &green, 1.0, &FlowOptions::default()).unwrap())
    });
}

fn particles(c: &mut Criterion) {
    let disk = Domain2::unit_disk();
    let spec = InitialDataSpec::new(Profile::appendix_style(1.0), 10_000);
    let ens = init_ensemble(&spec, &disk).unwrap();
    let grid = PolarGrid::new(32, 64);
    c.bench_function("deposit_1e4_32x64", |b| b.iter(|| deposit_density(black_box(&ens), &grid)));
    let field = FieldSolveConfig::linear_dirichlet(grid)
        .solve(deposit_density(&ens, &grid), None)
        .unwrap();
    let mut group = c.benchmark_group("transport");
    group.sample_size(10);
    group.bench_function("push_1e4_dt_0.01", |b| {
        b.iter(|| linear_vlasov_solve(black_box(&ens), &disk, &field, 0.01).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fields, flows, particles);
criterion_main!(benches);
