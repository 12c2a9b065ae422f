use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use fbplab_bench::{stationary, unit_flux};
use fbplab_core::barriers::{Side, Stepper};
use fbplab_core::green::{CellKernel, KernelSpec, KernelVariant};

fn kernel_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_apply");
    for h in [0.01, 0.0025] {
        let u = stationary(h);
        let op = CellKernel::new(&KernelSpec::half_line(0.01), u.grid()).unwrap();
        let mut out = vec![0.0; u.values().len()];
        group.bench_with_input(BenchmarkId::from_parameter(h), &h, |b, _| {
            b.iter(|| op.apply(black_box(u.values()), &mut out))
        });
    }
    group.finish();
}

fn barrier_evolve(c: &mut Criterion) {
    let u = stationary(0.0025);
    let stepper = Stepper::new(u.grid(), 1.0 / 64.0, KernelVariant::HalfLine, unit_flux()).unwrap();
    c.bench_function("barrier_evolve_64_steps", |b| {
        b.iter(|| stepper.evolve(black_box(&u), 64, Side::Upper).unwrap())
    });
}

criterion_group!(benches, kernel_apply, barrier_evolve);
criterion_main!(benches);
