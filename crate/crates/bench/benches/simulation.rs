use criterion::{black_box, criterion_group, criterion_main, Criterion};

use fbplab_bench::{stationary, unit_flux};
use fbplab_core::lattice::{discretize, simulate_lattice, LatticeState};
use fbplab_core::particles::simulate_basic;

fn particle_events(c: &mut Criterion) {
    let rho0 = stationary(0.005);
    let mut group = c.benchmark_group("particles");
    group.sample_size(20);
    group.bench_function("basic_n1000_t0.1", |b| {
        b.iter(|| simulate_basic(1000, &rho0, unit_flux(), 0.1, &[0.1], black_box(7)).unwrap())
    });
    group.finish();
}

fn lattice_events(c: &mut Criterion) {
    let rho0 = stationary(0.005);
    let n = 64;
    let xi0 = LatticeState::new(discretize(n, |r| rho0.tail_mass(r))).unwrap();
    let mut group = c.benchmark_group("lattice");
    group.sample_size(20);
    group.bench_function("n64_t0.01", |b| {
        b.iter(|| simulate_lattice(&xi0, unit_flux(), 0.01, &[0.01], black_box(7)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, particle_events, lattice_events);
criterion_main!(benches);
