//! Rayon path against the sequential fallback on the heaviest kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dse_core::design::{design, verify_design, DesignConfig};
use dse_core::exec;
use dse_core::powergrid::{build_scenario, Scenario};
use dse_core::sets::{linear_image, minkowski_sum_raw, prune_generators, ConvexBody};

fn kernels(c: &mut Criterion) {
    let model2 = build_scenario(&Scenario::builtin("example2").unwrap()).unwrap();
    let model3 = build_scenario(&Scenario::builtin("example3").unwrap()).unwrap();
    let report3 = design(&model3, &DesignConfig::default()).unwrap();
    let s = &report3.subsystems[0].contractive.set;
    let a = &report3.subsystems[0].gains.closed_loop;
    let raw = minkowski_sum_raw(s, &linear_image(&(a * 0.5), &ConvexBody::unit_box(4)).unwrap()).unwrap();

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "rayon" } else { "sequential" };
        exec::set_parallel(parallel);
        group.bench_with_input(BenchmarkId::new("design_example2", label), &parallel, |b, _| {
            b.iter(|| design(&model2, &DesignConfig::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("verify_example3_20", label), &parallel, |b, _| {
            b.iter(|| verify_design(&model3, &report3, 20, 1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("prune_sum", label), &parallel, |b, _| {
            b.iter(|| prune_generators(&raw))
        });
    }
    exec::set_parallel(true);
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
