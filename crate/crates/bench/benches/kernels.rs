use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use thermoplate::operators::{DirichletSolver, Stiffness};
use thermoplate::{initial_state, Field, InitialKind, NonlinearitySpec, Region};
use thermoplate_bench::{domain, params, stepper};

fn stiffness_apply(c: &mut Criterion) {
    let mut g = c.benchmark_group("stiffness_apply");
    for n in [32, 64, 128] {
        let d = domain(n);
        let a = Stiffness::new(&d, &params(NonlinearitySpec::linear()));
        let u = initial_state(&d, InitialKind::Random, 1.0, 1).u;
        let mut out = vec![0.0; d.len()];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| a.apply(black_box(u.values()), &mut out))
        });
    }
    g.finish();
}

fn dirichlet_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("dirichlet_solve");
    for n in [32, 64] {
        let d = domain(n);
        let solver = DirichletSolver::new(&d);
        let f = Field::from_fn(&d, Region::Omega, |x, y| (x * y).sin());
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solver.solve(black_box(&f), 1e-12).unwrap())
        });
    }
    g.finish();
}

fn time_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("step");
    g.sample_size(20);
    let berger = NonlinearitySpec::Berger {
        tension: 1.0,
        gamma: 1.0,
    };
    for (name, spec) in [("linear", NonlinearitySpec::linear()), ("berger", berger)] {
        for n in [32, 64] {
            let d = domain(n);
            let (st, s0) = stepper(&d, spec.clone());
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| b.iter(|| st.step(black_box(&s0)).unwrap()));
        }
    }
    g.finish();
}

criterion_group!(kernels, stiffness_apply, dirichlet_solve, time_step);
criterion_main!(kernels);
