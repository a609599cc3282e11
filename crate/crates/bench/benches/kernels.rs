// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tidedune::homogenize::cell_problem;
use tidedune::solver::{FineClock, StepCoefficients};
use tidedune::{
    solve_fine, step_implicit, Amplitude, Forcing, Grid, RegimeField, RegimeKind, RegimeSpec,
    ScalarField, SolverConfig, State,
};

fn regime() -> RegimeSpec {
    RegimeSpec::snapped(RegimeKind::ShortSmall)
        .with_epsilon(1.0 / 50.0)
        .unwrap()
}

fn initial(grid: Grid) -> ScalarField {
    ScalarField::from_fn(grid, |[x, y]| {
        (2.0 * std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos()
    })
}

fn implicit_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("implicit_step");
    let cfg = SolverConfig::default();
    let r = regime();
    let clock = FineClock::new(&r, &cfg);
    let field = RegimeField::new(r, Forcing::rotating(Amplitude::default()));
    for n in [32, 64, 128] {
        let grid = Grid::new(n).unwrap();
        let coeffs = StepCoefficients::assemble(grid, &field, clock.time(3), 0.0, clock.theta(3));
        let state = State {
            t: 0.0,
            z: initial(grid),
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                step_implicit(
                    black_box(&state),
                    clock.dt(),
                    &coeffs,
                    clock.stiffness(),
                    &cfg,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn period_map(c: &mut Criterion) {
    let mut group = c.benchmark_group("period_map");
    group.sample_size(20);
    let cfg = SolverConfig::default();
    let law = regime().law;
    let forcing = Forcing::rotating(Amplitude::default());
    for n in [32, 64] {
        let grid = Grid::new(n).unwrap();
        let cell = cell_problem(0.0, &law, &forcing, grid, &cfg).unwrap();
        let xi = initial(grid);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| cell.period_map(black_box(&xi), 0.5, 1e-3, &cfg).unwrap())
        });
    }
    group.finish();
}

fn fine_period(c: &mut Criterion) {
    let mut group = c.benchmark_group("fine_one_tide");
    group.sample_size(10);
    let cfg = SolverConfig::default();
    let r = regime();
    let forcing = Forcing::rotating(Amplitude::default());
    let grid = Grid::new(64).unwrap();
    let z0 = initial(grid);
    group.bench_function("n64", |b| {
        b.iter(|| solve_fine(black_box(&z0), &r, &forcing, &cfg, r.epsilon).unwrap())
    });
    group.finish();
}

criterion_group!(benches, implicit_step, period_map, fine_period);
criterion_main!(benches);
