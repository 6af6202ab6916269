//! Analytic predictions checked against brute-force simulation.
//!
//! Each suite returns a list of named checks with the measured error and its
//! limit; a suite passes when every check does.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consistency::{consistency_loss, equilibrium_closed_form, spatial_demean, EndpointPair};
use crate::energy::{energy_total, pbo_overhead, EnergyModel, LayerProfile};
use crate::error::{invalid, Error, Result};
use crate::lif::{lif_gain_sq, lif_run, subthreshold_response, LifParams, LifState};
use crate::pbo::{
    cascade_gain, cutoff_3db, endpoint_gains, prefilter_values, Boundary, Cutoff,
    PboParams,
};
use crate::signal::{dtft, uniform_grid, FrameClip, Signal};
use crate::spectral::{
    psd_out_approx, psd_out_full, DeterministicCrossSpectrum, DiagonalCrossSpectrum, InputPsdModel,
    Line, PerturbedCrossSpectrum,
};
use crate::trainer::{
    build_model, gen_dataset, EvalOptions, SpikeMode, SyntheticTaskSpec, TinyModel, TrainConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    LifGain,
    Cascade,
    Sidebands,
    FullPsd,
    Equilibrium,
    Gradients,
    Energy,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::LifGain,
        Suite::Cascade,
        Suite::Sidebands,
        Suite::FullPsd,
        Suite::Equilibrium,
        Suite::Gradients,
        Suite::Energy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::LifGain => "lif-gain",
            Suite::Cascade => "cascade",
            Suite::Sidebands => "sidebands",
            Suite::FullPsd => "full-psd",
            Suite::Equilibrium => "equilibrium",
            Suite::Gradients => "gradients",
            Suite::Energy => "energy",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite {s:?}")))
    }
}

/// One comparison: passes when `error <= limit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub error: f64,
    pub limit: f64,
    pub passed: bool,
    /// `limit - error`; negative on failure.
    pub margin: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, error: f64, limit: f64) -> Self {
        let passed = error <= limit;
        Self {
            name: name.into(),
            error,
            limit,
            passed,
            margin: limit - error,
        }
    }

    /// A boolean property; error is 0 or 1.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::LifGain => lif_gain_checks()?,
        Suite::Cascade => cascade_checks()?,
        Suite::Sidebands => sideband_checks(seed)?,
        Suite::FullPsd => full_psd_checks()?,
        Suite::Equilibrium => equilibrium_checks(seed)?,
        Suite::Gradients => gradient_checks(seed)?,
        Suite::Energy => energy_checks()?,
    };
    Ok(SuiteReport {
        suite,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn rel_err(measured: f64, expected: f64) -> f64 {
    (measured - expected).abs() / expected.abs()
}

pub const LIF_ALPHAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const GAIN_WINDOW: usize = 1024;
const GAIN_BURN_IN: usize = 400;
/// DFT bins of the 1024-sample window: pi/16, pi/8, pi/4, pi/2, pi.
const GAIN_BINS: [usize; 5] = [32, 64, 128, 256, 512];

/// `|Y/X|^2` of a cosine probe through the thresholdless neuron, measured on
/// a window of whole periods after the start-up transient.
pub fn empirical_lif_gain(alpha: f64, bin: usize) -> Result<f64> {
    let omega = 2.0 * PI * bin as f64 / GAIN_WINDOW as f64;
    let n = GAIN_BURN_IN + GAIN_WINDOW;
    let x: Vec<f64> = (0..n).map(|t| (omega * t as f64).cos()).collect();
    let p = LifParams::subthreshold(1.0 - alpha, 0.0)?;
    let trace = lif_run(&Signal::new(x.clone())?, &p, LifState::at_rest(&p))?;
    let y = &trace.potentials.samples()[GAIN_BURN_IN..];
    let xw = &x[GAIN_BURN_IN..];
    Ok(dtft(y, omega)?.norm_sqr() / dtft(xw, omega)?.norm_sqr())
}

fn lif_gain_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &alpha in &LIF_ALPHAS {
        for &bin in &GAIN_BINS {
            let omega = 2.0 * PI * bin as f64 / GAIN_WINDOW as f64;
            let measured = empirical_lif_gain(alpha, bin)?;
            out.push(Check::new(
                format!("alpha={alpha} omega={omega:.4}"),
                rel_err(measured, lif_gain_sq(alpha, omega)),
                0.01,
            ));
        }
    }
    Ok(out)
}

fn cascade_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let grid = uniform_grid(1001);
    let mut flat_dev: f64 = 0.0;
    for &a in &LIF_ALPHAS {
        for &w in &grid {
            flat_dev = flat_dev.max((cascade_gain(a, a, w) - (1.0 - a).powi(2)).abs());
        }
    }
    out.push(Check::new("flat line at lambda = alpha", flat_dev, 1e-12));

    let mut end_dev: f64 = 0.0;
    let mut interior = 0usize;
    let n = 50;
    for i in 0..n {
        for j in 0..n {
            let lam = (i as f64 + 0.5) / n as f64;
            let alpha = (j as f64 + 0.5) / n as f64;
            let (g0, gpi) = endpoint_gains(lam, alpha);
            end_dev = end_dev
                .max((cascade_gain(lam, alpha, 0.0) - g0).abs())
                .max((cascade_gain(lam, alpha, PI) - gpi).abs());
            let vals: Vec<f64> = grid.iter().map(|&w| cascade_gain(lam, alpha, w)).collect();
            // Rounding noise on the near-flat curves is not a maximum.
            let ends = vals[0].max(vals[vals.len() - 1]);
            let inner = vals[1..vals.len() - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if inner > ends * (1.0 + 1e-12) {
                interior += 1;
            }
        }
    }
    out.push(Check::new("endpoint gains", end_dev, 1e-12));
    out.push(Check::new("interior maxima on 50x50 grid", interior as f64, 0.0));

    let dense = uniform_grid(1_000_001);
    let cell = PI / 1e6;
    for &(lam, alpha) in &[(0.8, 0.3), (0.1, 0.7), (0.6, 0.2), (0.05, 0.5)] {
        let c = cutoff_3db(lam, alpha)?;
        let Cutoff::Attained { omega, .. } = c else {
            out.push(Check::holds(format!("cutoff attained ({lam}, {alpha})"), false));
            continue;
        };
        let (g0, gpi) = endpoint_gains(lam, alpha);
        let peak = g0.max(gpi);
        let resid = (cascade_gain(lam, alpha, omega) - 0.5 * peak).abs() / peak;
        out.push(Check::new(format!("cutoff residual ({lam}, {alpha})"), resid, 1e-10));
        let scan = dense
            .iter()
            .min_by(|&&a, &&b| {
                let fa = (cascade_gain(lam, alpha, a) - 0.5 * peak).abs();
                let fb = (cascade_gain(lam, alpha, b) - 0.5 * peak).abs();
                fa.total_cmp(&fb)
            })
            .copied()
            .unwrap_or(0.0);
        out.push(Check::new(
            format!("cutoff vs dense scan ({lam}, {alpha}) in grid cells"),
            (scan - omega).abs() / cell,
            1.0,
        ));
    }
    Ok(out)
}

pub const SIDEBAND_LEN: usize = 576;
pub const SIDEBAND_TRIM: usize = 18;

/// Parameters of the sideband checks: init `mu = 0.5`, `A = 0.1`,
/// `omega0 = 2 pi / 9`.
pub fn sideband_params() -> Result<PboParams> {
    PboParams::from_derived(0.5, 2.0 * PI / 9.0, 0.1, 0.0)
}

fn sideband_checks(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = sideband_params()?;
    let (mu, a, w0) = (p.mu(), p.amplitude, p.omega());
    let alpha = 0.3;
    for &b in &[1.0, 2.5] {
        let x = vec![b; SIDEBAND_LEN];
        let y = prefilter_values(&x, 1, &p.lambdas(SIDEBAND_LEN), Boundary::ReplicateFirst)?;
        let dev = y
            .iter()
            .enumerate()
            .map(|(t, v)| (v - (b * (1.0 - mu) - a * b * (w0 * t as f64).sin())).abs())
            .fold(0.0, f64::max);
        out.push(Check::new(format!("constant-input identity B={b}"), dev, 1e-14 * b.max(1.0)));

        let v = subthreshold_response(&y, alpha);
        let tail = &v[SIDEBAND_TRIM..];
        let n = tail.len() as f64;
        let measured = dtft(tail, w0)?.norm_sqr() / n;
        let model = InputPsdModel::new(b * b * n, vec![], 0.0)?;
        let predicted = psd_out_approx(&model, &p, alpha, &[w0])?.powers().unwrap_or(&[0.0])[0];
        out.push(Check::new(format!("sideband line at omega0 B={b}"), rel_err(measured, predicted), 0.01));
    }

    let model = InputPsdModel::new(
        2.0,
        vec![Line { omega: w0, power: 0.3 }, Line { omega: 2.0 * w0, power: 0.1 }],
        0.05,
    )?;
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 * PI / 20.0).chain([w0, 2.0 * w0, 3.0 * w0]).collect();
    let mut grid = grid;
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let approx = psd_out_approx(&model, &p, alpha, &grid)?;
    let full = psd_out_full(&DiagonalCrossSpectrum(&model), &p, alpha, &grid)?;
    let diff = approx
        .powers()
        .unwrap_or(&[])
        .iter()
        .zip(full.powers().unwrap_or(&[]))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    out.push(Check::new("decorrelated == full under diagonal cross-spectrum", diff, 1e-12));

    out.extend(sideband_persistence(seed, &p, alpha)?);
    Ok(out)
}

/// Random coherent cross terms of magnitude at most 0.25 keep the
/// 3x3 cross-spectral matrix diagonally dominant, so the output line at
/// `omega0` stays above half of its uncorrelated value.
pub fn sideband_persistence(seed: u64, p: &PboParams, alpha: f64) -> Result<Vec<Check>> {
    let w0 = p.omega();
    let base = InputPsdModel::new(1.0, vec![Line { omega: w0, power: 0.01 }, Line { omega: 2.0 * w0, power: 0.01 }], 0.0)?;
    let floor = 0.5 * lif_gain_sq(alpha, w0) * 0.25 * p.amplitude * p.amplitude * base.density(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..16 {
        let pairs = [(0.0, w0), (0.0, 2.0 * w0), (w0, 2.0 * w0)];
        let terms = pairs
            .iter()
            .map(|&(a, b)| {
                let r = rng.random_range(0.0..0.25);
                let th = rng.random_range(0.0..2.0 * PI);
                (a, b, Complex64::from_polar(r, th))
            })
            .collect();
        let cross = PerturbedCrossSpectrum { base: &base, terms };
        let s = psd_out_full(&cross, p, alpha, &[w0])?;
        worst = worst.min(s.powers().unwrap_or(&[0.0])[0]);
    }
    Ok(vec![Check::new(
        "sideband floor under 16 Hermitian perturbations (floor - min)",
        floor - worst,
        0.0,
    )])
}

pub const FULL_PSD_WINDOW: usize = 4608;

/// Periodic input whose every component sits on a DFT bin of the window.
fn full_psd_input(n: usize) -> Vec<f64> {
    let bin = |k: usize, t: usize| 2.0 * PI * (k * t) as f64 / FULL_PSD_WINDOW as f64;
    (0..n)
        .map(|t| 1.5 + 0.4 * bin(256, t).sin() + 0.2 * (bin(1152, t) + 0.3).cos() + 0.1 * bin(2048, t).sin())
        .collect()
}

fn full_psd_checks() -> Result<Vec<Check>> {
    // omega0 = 2 pi / 9 is bin 512 of the window; the burn-in spans whole
    // periods of both the input and the schedule, so the kept window is in
    // periodic steady state.
    let p = sideband_params()?;
    let alpha = 0.3;
    let burn = FULL_PSD_WINDOW;
    let total = burn + FULL_PSD_WINDOW;
    let x = full_psd_input(total);
    let y = prefilter_values(&x, 1, &p.lambdas(total), Boundary::ReplicateFirst)?;
    let v = subthreshold_response(&y, alpha);
    let tail = &v[burn..];
    let cross = DeterministicCrossSpectrum::new(x[burn..].to_vec())?;
    let bins: Vec<usize> = vec![0, 256, 512, 640, 768, 1024, 1152, 1408, 1536, 1664, 2048, 2304];
    let grid: Vec<f64> = bins
        .iter()
        .map(|&k| 2.0 * PI * k as f64 / FULL_PSD_WINDOW as f64)
        .collect();
    let predicted = psd_out_full(&cross, &p, alpha, &grid)?;
    let n = FULL_PSD_WINDOW as f64;
    let mut out = Vec::new();
    let preds = predicted.powers().unwrap_or(&[]);
    let peak = preds.iter().cloned().fold(0.0, f64::max);
    for (w, &pred) in grid.iter().zip(preds) {
        let measured = dtft(tail, *w)?.norm_sqr() / n;
        if pred > 1e-9 * peak {
            out.push(Check::new(format!("full PSD at omega={w:.4}"), rel_err(measured, pred), 0.02));
        } else {
            out.push(Check::new(format!("empty bin omega={w:.4} relative to peak"), (measured - pred).abs() / peak, 1e-9));
        }
    }
    Ok(out)
}

/// Golden-section minimizer of a unimodal scalar function.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

fn intensity(y: &[f64], y0: &[f64], y1: &[f64], lam: f64) -> f64 {
    y.iter()
        .zip(y0.iter().zip(y1))
        .map(|(v, (a, b))| lam * lam * (v - b).powi(2) + (1.0 - lam).powi(2) * (v - a).powi(2))
        .sum()
}

fn equilibrium_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = (2, 3, 4);
    let n = c * h * w;
    let mut max_dev: f64 = 0.0;
    let mut beaten = 0usize;
    let mut loss_dev: f64 = 0.0;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    for fixture in 0..20 {
        let y0: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y1: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let (y0, y1) = (spatial_demean(&y0, c), spatial_demean(&y1, c));
        let lam = if fixture < 9 {
            0.1 * (fixture + 1) as f64
        } else {
            rng.random_range(0.0..1.0)
        };
        let closed = equilibrium_closed_form(&y0, &y1, lam)?;
        let best = intensity(&closed, &y0, &y1, lam);
        for _ in 0..1000 {
            let pert: Vec<f64> = closed.iter().map(|v| v + 0.1 * normal(&mut rng)).collect();
            if intensity(&pert, &y0, &y1, lam) < best {
                beaten += 1;
            }
        }
        for i in 0..n {
            let f = |v: f64| lam * lam * (v - y1[i]).powi(2) + (1.0 - lam).powi(2) * (v - y0[i]).powi(2);
            let lo = y0[i].min(y1[i]) - 1.0;
            let hi = y0[i].max(y1[i]) + 1.0;
            max_dev = max_dev.max((golden_section(f, lo, hi, 1e-10) - closed[i]).abs());
        }
        // The loss module's intensity term agrees at the equilibrium.
        let clip = |v: &[f64]| FrameClip::new([1, c, h, w], v.to_vec());
        let pair = EndpointPair::new(clip(&y0)?, clip(&y1)?, clip(&closed)?)?;
        let via_loss = consistency_loss(&pair, &[lam])?.per_step[0].intensity;
        loss_dev = loss_dev.max((via_loss - best).abs() / best.max(1e-12));
    }
    let mut out = vec![
        Check::new("perturbations beating the closed form", beaten as f64, 0.0),
        Check::new("closed form vs golden-section minimizer", max_dev, 1e-6),
        Check::new("loss module intensity at equilibrium (relative)", loss_dev, 1e-12),
    ];
    let y0 = [1.0, -1.0, 0.5, -0.5];
    let y1 = [-2.0, 2.0, 0.25, -0.25];
    out.push(Check::holds("lambda = 0 returns Y0 exactly", equilibrium_closed_form(&y0, &y1, 0.0)? == y0));
    out.push(Check::holds("lambda = 1 returns Y1 exactly", equilibrium_closed_form(&y0, &y1, 1.0)? == y1));
    Ok(out)
}

/// Relative error with an absolute floor: `|a - f| / max(|a|, |f|)` unless
/// `|a - f| <= floor`.
pub fn grad_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d <= floor {
        0.0
    } else {
        d / analytic.abs().max(numeric.abs())
    }
}

pub const GRAD_STEP: f64 = 1e-4;

/// A small random model and batch for gradient checks.
pub fn gradient_fixture(seed: u64) -> Result<(TinyModel, Vec<crate::trainer::LabeledClip>, TrainConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SyntheticTaskSpec {
        n_classes: 3,
        t_len: 8,
        height: 3,
        width: 3,
        channels: 1,
        class_tones: vec![PI / 2.0, 3.0 * PI / 4.0, PI],
        dc_background_power: 1.0,
        tone_power: 0.1,
        noise_std: 0.2,
        clips_per_class: 2,
        seed,
    };
    let data = gen_dataset(&spec)?;
    let cfg = TrainConfig {
        spike_mode: SpikeMode::Sigmoid,
        proj_scale: 2.0,
        seed,
        ..Default::default()
    };
    let mut model = build_model(&cfg, &spec)?;
    model.pbo.mu_raw = rng.random_range(-1.5..1.5);
    model.pbo.sigma_raw = rng.random_range(-2.0..0.5);
    for w in model.readout_w.iter_mut().chain(model.readout_b.iter_mut()) {
        *w = 0.5 * rng.sample::<f64, _>(StandardNormal);
    }
    Ok((model, data.train, cfg))
}

fn batch_loss(model: &TinyModel, batch: &[crate::trainer::LabeledClip], opts: &EvalOptions) -> Result<f64> {
    let mut total = 0.0;
    for c in batch {
        total += model.eval_clip(&c.clip, Some(c.label), opts)?.loss;
    }
    Ok(total / batch.len() as f64)
}

fn gradient_checks(seed: u64) -> Result<Vec<Check>> {
    let mut worst_filter: f64 = 0.0;
    let mut worst_readout: f64 = 0.0;
    for f in 0..20u64 {
        let (model, batch, cfg) = gradient_fixture(seed.wrapping_mul(1000).wrapping_add(f))?;
        let (_, g) = crate::trainer::loss_and_grads(&model, &batch, &cfg)?;
        let opts = EvalOptions {
            alpha_weight: cfg.alpha_weight,
            spike_mode: cfg.spike_mode,
            surrogate_k: cfg.surrogate_k,
            want_grad: false,
        };
        let fd = |set: &dyn Fn(&mut TinyModel, f64)| -> Result<f64> {
            let mut plus = model.clone();
            set(&mut plus, GRAD_STEP);
            let mut minus = model.clone();
            set(&mut minus, -GRAD_STEP);
            Ok((batch_loss(&plus, &batch, &opts)? - batch_loss(&minus, &batch, &opts)?) / (2.0 * GRAD_STEP))
        };
        let n_mu = fd(&|m, h| m.pbo.mu_raw += h)?;
        let n_sigma = fd(&|m, h| m.pbo.sigma_raw += h)?;
        worst_filter = worst_filter
            .max(grad_error(g.mu_raw, n_mu, 1e-6))
            .max(grad_error(g.sigma_raw, n_sigma, 1e-6));
        for i in 0..model.readout_w.len() {
            let n = fd(&|m, h| m.readout_w[i] += h)?;
            worst_readout = worst_readout.max(grad_error(g.readout_w[i], n, 1e-6));
        }
        for i in 0..model.readout_b.len() {
            let n = fd(&|m, h| m.readout_b[i] += h)?;
            worst_readout = worst_readout.max(grad_error(g.readout_b[i], n, 1e-6));
        }
    }
    Ok(vec![
        Check::new("mu_raw / sigma_raw vs central differences", worst_filter, 1e-3),
        Check::new("readout vs central differences", worst_readout, 1e-3),
    ])
}

fn energy_checks() -> Result<Vec<Check>> {
    let m = EnergyModel::default();
    let layer = |name: &str, flops: u64, rate: f64, first: bool| LayerProfile {
        name: name.into(),
        flops,
        spike_rate: rate,
        is_first: first,
    };
    let mut out = Vec::new();
    let worked = energy_total(&[layer("conv1", 1000, 1.0, true), layer("fc", 1000, 0.2, false)], 4, &m)?;
    out.push(Check::new("worked example 5320 pJ", (worked.total_pj - 5320.0).abs(), 0.0));

    let rates = [0.0, 0.25, 0.5, 1.0];
    let flops = [0u64, 10, 1000];
    let steps = [1u64, 2, 8];
    let eval = |f1: u64, f2: u64, r2: f64, t: u64| -> Result<f64> {
        Ok(energy_total(&[layer("a", f1, 0.5, true), layer("b", f2, r2, false)], t, &m)?.total_pj)
    };
    let mut violations = 0usize;
    for &f1 in &flops {
        for &f2 in &flops {
            for (ri, &r) in rates.iter().enumerate() {
                for (ti, &t) in steps.iter().enumerate() {
                    let e = eval(f1, f2, r, t)?;
                    if ri + 1 < rates.len() && eval(f1, f2, rates[ri + 1], t)? < e {
                        violations += 1;
                    }
                    if ti + 1 < steps.len() && eval(f1, f2, r, steps[ti + 1])? < e {
                        violations += 1;
                    }
                    if eval(f1 + 1, f2, r, t)? < e || eval(f1, f2 + 1, r, t)? < e {
                        violations += 1;
                    }
                }
            }
        }
    }
    out.push(Check::new("monotonicity violations", violations as f64, 0.0));

    let base = eval(1000, 700, 0.3, 4)?;
    let scaled = eval(3000, 2100, 0.3, 4)?;
    out.push(Check::new("linearity in FLOPs (relative)", rel_err(scaled, 3.0 * base), 1e-12));

    out.push(Check::holds("overhead 10x64x64x3", pbo_overhead(10, 64, 64, 3)? == (122_880, 122_880)));
    let spec = SyntheticTaskSpec::default();
    let cfg = TrainConfig::default();
    let model = build_model(&cfg, &spec)?;
    let profiles = model.energy_profiles(spec.t_len, 0.1)?;
    let (mults, _) = pbo_overhead(spec.t_len as u64, spec.height as u64, spec.width as u64, spec.channels as u64)?;
    let ratio = mults as f64 / profiles[0].flops as f64;
    out.push(Check::new("default model overhead / first-layer FLOPs", ratio, 0.05));
    Ok(out)
}

/// Fails with `InvalidInput` when any check fails; used by callers that want
/// a hard error.
pub fn require(report: &SuiteReport) -> Result<()> {
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        invalid(format!("suite {} failed: {}", report.suite, failed.join("; ")))
    }
}
