use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use passband_core::consistency::{consistency_loss_with_grad, EndpointPair};
use passband_core::lif::{lif_run, LifState};
use passband_core::pbo::prefilter_apply;
use passband_core::signal::{dtft, gaussian_stream, uniform_grid};
use passband_core::spectral::{psd_out_full, DeterministicCrossSpectrum};
use passband_core::trainer::{build_model, gen_dataset, EvalOptions, SyntheticTaskSpec, TrainConfig};
use passband_core::{Boundary, FrameClip, LifParams, PboParams, Signal};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    gaussian_stream(seed).take(n).collect()
}

fn signal_kernels(c: &mut Criterion) {
    let x = noise(4096, 1);
    c.bench_function("dtft 4096", |b| b.iter(|| dtft(black_box(&x), 0.7).unwrap()));

    let sig = Signal::new(x.clone()).unwrap();
    let lif = LifParams::new(0.7, 1.0, 0.0).unwrap();
    c.bench_function("lif_run 4096", |b| {
        b.iter(|| lif_run(black_box(&sig), &lif, LifState::at_rest(&lif)).unwrap())
    });

    let p = PboParams::from_derived(0.5, 2.0 * PI / 9.0, 0.1, 0.0).unwrap();
    let clip = FrameClip::new([16, 1, 32, 32], noise(16 * 1024, 2)).unwrap();
    let lambdas = p.lambdas(16);
    c.bench_function("prefilter 16x32x32", |b| {
        b.iter(|| prefilter_apply(black_box(&clip), &lambdas, Boundary::ReplicateFirst).unwrap())
    });

    let cross = DeterministicCrossSpectrum::new(noise(64, 3)).unwrap();
    let grid = uniform_grid(129);
    c.bench_function("psd_out_full 64 samples, 129 points", |b| {
        b.iter(|| psd_out_full(black_box(&cross), &p, 0.3, &grid).unwrap())
    });
}

fn training_kernels(c: &mut Criterion) {
    let dims = [16, 2, 16, 16];
    let n = 16 * 2 * 256;
    let clip = |seed| FrameClip::new(dims, noise(n, seed)).unwrap();
    let pair = EndpointPair::new(clip(4), clip(5), clip(6)).unwrap();
    let lambdas = vec![0.5; 16];
    c.bench_function("consistency loss 16x2x16x16", |b| {
        b.iter(|| consistency_loss_with_grad(black_box(&pair), &lambdas).unwrap())
    });

    let spec = SyntheticTaskSpec::default();
    let cfg = TrainConfig::default();
    let model = build_model(&cfg, &spec).unwrap();
    let data = gen_dataset(&spec).unwrap();
    let sample = &data.train[0];
    let opts = EvalOptions {
        alpha_weight: cfg.alpha_weight,
        spike_mode: cfg.spike_mode,
        surrogate_k: cfg.surrogate_k,
        want_grad: true,
    };
    c.bench_function("eval_clip with gradients", |b| {
        b.iter(|| model.eval_clip(black_box(&sample.clip), Some(sample.label), &opts).unwrap())
    });
}

criterion_group!(benches, signal_kernels, training_kernels);
criterion_main!(benches);
