use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ssr_core::campaign::{ExperimentConfig, Scale};
use ssr_core::pipeline::{Pipeline, VisibilityProfile};
use ssr_core::scan_rate::{enhancement_grid, log_axis, ScanConfig};
use ssr_core::synth::synthesize_run;
use ssr_core::{Execution, NetworkParams};

const MODES: [(&str, Execution); 2] = [("serial", Execution::Serial), ("parallel", Execution::Parallel)];

fn grid(c: &mut Criterion) {
    let mut g = c.benchmark_group("enhancement_grid_20x20");
    let (gs, cp) = (log_axis(1.0, 100.0, 20), log_axis(1.0, 1000.0, 20));
    let (base, scan) = (NetworkParams::default(), ScanConfig::default());
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| enhancement_grid(0.69, &gs, &cp, &base, &scan, exec).unwrap())
        });
    }
    g.finish();
}

fn synth_and_pipeline(c: &mut Criterion) {
    let cfg = ExperimentConfig::defaults(Scale::Desk);
    let p = cfg.squeezed;
    let raw = synthesize_run(&p, &cfg.synth, 0, Execution::Parallel).unwrap();
    let profile = VisibilityProfile::from_model(&p, &cfg.synth).unwrap();

    let mut g = c.benchmark_group("synthesize_run_desk");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| synthesize_run(&p, &cfg.synth, 0, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("pipeline_desk");
    g.sample_size(10);
    for (name, exec) in MODES {
        let pipe = Pipeline::new(cfg.pipeline.clone(), raw.n_bins(), exec).unwrap();
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pipe.run(&raw, &profile, None, false).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, grid, synth_and_pipeline);
criterion_main!(benches);
