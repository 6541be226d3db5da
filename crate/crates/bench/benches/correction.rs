use akm_bench::leave_one_out_panel;
use akm_core::{correct_homoskedastic, correct_leave_out, estimate_panel, Backend, QuadraticForm, SolverConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn corrections(c: &mut Criterion) {
    let mut group = c.benchmark_group("correct_var_psi");
    group.sample_size(10);
    let panel = leave_one_out_panel(3_000, 300);
    let est = estimate_panel(&panel, &SolverConfig::default()).unwrap();
    let form = QuadraticForm::var_psi();
    for (label, backend) in [("exact", Backend::Exact), ("stochastic_50", Backend::stochastic(50, 0))] {
        group.bench_with_input(BenchmarkId::new("homoskedastic", label), &backend, |b, be| {
            b.iter(|| correct_homoskedastic(&panel, &est, &form, be).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("leave_out", label), &backend, |b, be| {
            b.iter(|| correct_leave_out(&panel, &est, &form, be).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, corrections);
criterion_main!(benches);
