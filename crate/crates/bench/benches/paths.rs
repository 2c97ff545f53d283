use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kyleback_core::grid::DEFAULT_EPSILON;
use kyleback_core::*;

fn monte_carlo(c: &mut Criterion) {
    let (det, det_rule, _) = build_deterministic(&DeterministicVolSpec::default()).unwrap();
    let (quad, quad_rule) = build_quadratic(&QuadraticVolSpec::default()).unwrap();
    let mut g = c.benchmark_group("monte carlo");
    g.sample_size(10);
    for steps in [1usize << 8, 1 << 10] {
        let grid = grid_with_steps(DEFAULT_EPSILON, steps, Refinement::Geometric).unwrap();
        for scheme in [Scheme::Transformed, Scheme::Euler] {
            let cfg = SimConfig::new(1000, grid.clone(), 7).with_scheme(scheme);
            g.bench_with_input(
                BenchmarkId::new(format!("deterministic {scheme:?}"), steps),
                &cfg,
                |b, cfg| {
                    b.iter(|| {
                        run_monte_carlo(&det, &det_rule, &[Strategy::equilibrium()], black_box(cfg))
                            .unwrap()
                    })
                },
            );
        }
        let cfg = SimConfig::new(1000, grid, 7);
        g.bench_with_input(BenchmarkId::new("quadratic", steps), &cfg, |b, cfg| {
            b.iter(|| {
                run_monte_carlo(&quad, &quad_rule, &[Strategy::equilibrium()], black_box(cfg)).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo);
criterion_main!(benches);
