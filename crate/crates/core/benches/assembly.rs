use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracwave::dn::{assemble_dn_matrix_with, InputBasis};
use fracwave::forward::{GalerkinSystem, Potential};
use fracwave::fractional::{assemble_singular_integral, assemble_spectral};
use fracwave::grid::{build_grid, make_time_window, partition_domain, Interval, TimeGrid, WindowShape};
use fracwave::instability::{gram_schmidt_on_grid, GammaContext};
use fracwave::par::Exec;
use fracwave::runge::assemble_poisson_with;

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn assembly(c: &mut Criterion) {
    let g = build_grid(8.0, 128, 1).unwrap();
    let part =
        partition_domain(&g, Interval::new(-1.0, 1.0), Interval::new(2.0, 3.0), Interval::new(2.0, 3.0)).unwrap();
    let tg = TimeGrid::new(2.0, 128).unwrap();
    let op = assemble_spectral(&g, 0.5).unwrap();
    let sys = GalerkinSystem::new(&op, &part, &Potential::bump(&part, 0.0, 1.0, 0.3)).unwrap();
    let basis = InputBasis::default_for(&part, &tg, 8);

    let mut group = c.benchmark_group("assembly");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("dn_matrix", name), &exec, |b, &e| {
            b.iter(|| assemble_dn_matrix_with(&sys, &tg, &basis, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("poisson_matrix", name), &exec, |b, &e| {
            b.iter(|| assemble_poisson_with(&sys, &tg, &basis, e).unwrap())
        });
    }
    group.finish();
}

fn gamma(c: &mut Criterion) {
    let g = build_grid(4.0, 256, 1).unwrap();
    let part =
        partition_domain(&g, Interval::new(-1.0, 1.0), Interval::new(2.0, 3.0), Interval::new(2.0, 3.0)).unwrap();
    let tg = TimeGrid::new(2.0, 256).unwrap();
    let op = assemble_singular_integral(&g, 0.5).unwrap();
    let b = gram_schmidt_on_grid(8, 0.5, &part).unwrap();
    let win = make_time_window(&tg, WindowShape::SineSquared, (0.1, 1.9)).unwrap();
    let ctx = GammaContext::new(&op, &part, &tg, &win, &b, 8).unwrap();
    let q = Potential::bump(&part, 0.0, 1.0, 0.5);

    let mut group = c.benchmark_group("gamma");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("tensor", name), &exec, |b, &e| {
            b.iter(|| ctx.gamma_tensor(&q, e).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, gamma);
criterion_main!(benches);
