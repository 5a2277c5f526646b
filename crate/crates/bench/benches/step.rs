use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use surplus_bench::comparison_fixture;
use surplus_core::matrix::matrix_round;
use surplus_core::{step, Algorithm, Simulation};

fn single_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [10, 40, 160] {
        let (sched, policy, st) = comparison_fixture(n);
        let g = sched.graph_at(0).into_owned();
        group.bench_with_input(BenchmarkId::new("agent", n), &n, |b, _| {
            b.iter(|| step(&g, &policy, 0, black_box(&st)).unwrap())
        });
        if n <= 40 {
            group.bench_with_input(BenchmarkId::new("matrix", n), &n, |b, _| {
                b.iter(|| matrix_round(&g, &policy, 0, black_box(&st), Algorithm::Surplus).unwrap())
            });
        }
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation_1000_steps");
    for n in [10, 40] {
        let (sched, policy, st) = comparison_fixture(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let mut sim =
                    Simulation::new(&sched, &policy, st.clone(), Algorithm::Surplus).unwrap();
                for _ in 0..1000 {
                    sim.step().unwrap();
                }
                black_box(sim.state().total())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, single_step, simulation);
criterion_main!(benches);
