//! Momentum SGD over the two filter scalars and the readout.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::DEFAULT_CONSISTENCY_WEIGHT;
use crate::error::{invalid, Error, Result};
use crate::lif::{LifParams, DEFAULT_SURROGATE_SHARPNESS, DEFAULT_V_RESET, DEFAULT_V_TH};
use crate::pbo::{init_params, DEFAULT_AMPLITUDE, DEFAULT_PHASE};

use super::dataset::{gen_dataset, Dataset, LabeledClip, SyntheticTaskSpec};
use super::model::{EvalOptions, FilterMode, ParamGrads, SpikeMode, SpikeStats, TinyModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size for `mu_raw` and `sigma_raw`.
    pub learning_rate: f64,
    pub readout_learning_rate: f64,
    pub momentum: f64,
    pub alpha_weight: f64,
    pub surrogate_k: f64,
    pub seed: u64,
    pub hidden: usize,
    pub proj_scale: f64,
    pub tau: f64,
    pub amplitude: f64,
    pub phi: f64,
    pub filter: FilterMode,
    pub spike_mode: SpikeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.05,
            readout_learning_rate: 0.01,
            momentum: 0.9,
            alpha_weight: DEFAULT_CONSISTENCY_WEIGHT,
            surrogate_k: DEFAULT_SURROGATE_SHARPNESS,
            seed: 0,
            hidden: 16,
            proj_scale: 1.0,
            tau: 0.3,
            amplitude: DEFAULT_AMPLITUDE,
            phi: DEFAULT_PHASE,
            filter: FilterMode::Pbo,
            spike_mode: SpikeMode::Heaviside,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.readout_learning_rate > 0.0) {
            return invalid("learning rates must be > 0");
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return invalid("batch_size and hidden must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid("momentum must lie in [0, 1)");
        }
        if !(self.alpha_weight >= 0.0 && self.surrogate_k > 0.0) {
            return invalid("alpha_weight must be >= 0 and surrogate_k > 0");
        }
        Ok(())
    }

    fn eval_options(&self, want_grad: bool) -> EvalOptions {
        EvalOptions {
            alpha_weight: self.alpha_weight,
            spike_mode: self.spike_mode,
            surrogate_k: self.surrogate_k,
            want_grad,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub mu: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Entry 0 is the untrained model.
    pub metrics: Vec<EpochMetrics>,
    /// `lambda[t]` after each epoch, entry 0 at initialization.
    pub lambda_trajectory: Vec<Vec<f64>>,
    /// Validation-set firing ratios of the final model.
    pub spike_stats: SpikeStats,
    pub model: TinyModel,
}

impl TrainReport {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.metrics.last().expect("metrics always hold epoch 0")
    }

    pub fn metrics_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for m in &self.metrics {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn build_model(cfg: &TrainConfig, spec: &SyntheticTaskSpec) -> Result<TinyModel> {
    let mut pbo = init_params(spec.t_len)?;
    pbo.amplitude = cfg.amplitude;
    pbo.phi = cfg.phi;
    let lif = LifParams::new(cfg.tau, DEFAULT_V_TH, DEFAULT_V_RESET)?;
    TinyModel::new(
        spec.frame_len(),
        cfg.hidden,
        spec.n_classes,
        pbo,
        lif,
        cfg.filter,
        cfg.proj_scale,
        cfg.seed,
    )
}

/// Mean loss and gradient over `batch`, reduced in batch order.
pub fn loss_and_grads(model: &TinyModel, batch: &[LabeledClip], cfg: &TrainConfig) -> Result<(f64, ParamGrads)> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    let opts = cfg.eval_options(true);
    let evals: Vec<_> = batch
        .par_iter()
        .map(|c| model.eval_clip(&c.clip, Some(c.label), &opts))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = ParamGrads::zeros(model);
    let mut loss = 0.0;
    for e in &evals {
        loss += e.loss * scale;
        grads.add_scaled(e.grads.as_ref().expect("gradients requested"), scale);
    }
    Ok((loss, grads))
}

pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub spikes: SpikeStats,
}

pub fn evaluate(model: &TinyModel, clips: &[LabeledClip], cfg: &TrainConfig) -> Result<Evaluation> {
    if clips.is_empty() {
        return invalid("nothing to evaluate");
    }
    let opts = cfg.eval_options(false);
    let evals: Vec<_> = clips
        .par_iter()
        .map(|c| model.eval_clip(&c.clip, Some(c.label), &opts))
        .collect::<Result<_>>()?;
    let n = clips.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (e, c) in evals.iter().zip(clips) {
        loss += e.loss / n;
        let pred = e
            .logits
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > e.logits[best] { i } else { best });
        correct += usize::from(pred == c.label);
    }
    let stats: Vec<SpikeStats> = evals.into_iter().map(|e| e.spikes).collect();
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / n,
        spikes: SpikeStats::mean(&stats).expect("non-empty"),
    })
}

fn metrics(model: &TinyModel, epoch: usize, train_loss: f64, val_acc: f64) -> EpochMetrics {
    let (mu, omega) = match model.filter {
        FilterMode::Pbo => (model.pbo.mu(), model.pbo.omega()),
        FilterMode::Identity => (0.0, 0.0),
    };
    EpochMetrics {
        epoch,
        train_loss,
        val_acc,
        mu,
        omega,
    }
}

pub fn train(cfg: &TrainConfig, spec: &SyntheticTaskSpec) -> Result<TrainReport> {
    let data = gen_dataset(spec)?;
    train_on(cfg, spec, &data)
}

pub fn train_on(cfg: &TrainConfig, spec: &SyntheticTaskSpec, data: &Dataset) -> Result<TrainReport> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return invalid("train and validation splits must be non-empty");
    }
    let mut model = build_model(cfg, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let learn_filter = cfg.filter == FilterMode::Pbo;

    let check = |epoch: usize, loss: f64| -> Result<()> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(Error::Diverged { epoch, loss })
        }
    };

    let t_len = spec.t_len;
    let initial_train = evaluate(&model, &data.train, cfg)?;
    check(0, initial_train.loss)?;
    let mut val = evaluate(&model, &data.val, cfg)?;
    let mut report_metrics = vec![metrics(&model, 0, initial_train.loss, val.accuracy)];
    let mut trajectory = vec![model.lambdas(t_len)];

    let mut vel = ParamGrads::zeros(&model);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledClip> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            let (loss, g) = loss_and_grads(&model, &batch, cfg)?;
            check(epoch, loss)?;
            vel.mu_raw = cfg.momentum * vel.mu_raw + g.mu_raw;
            vel.sigma_raw = cfg.momentum * vel.sigma_raw + g.sigma_raw;
            for (v, gi) in vel.readout_w.iter_mut().zip(&g.readout_w) {
                *v = cfg.momentum * *v + gi;
            }
            for (v, gi) in vel.readout_b.iter_mut().zip(&g.readout_b) {
                *v = cfg.momentum * *v + gi;
            }
            if learn_filter {
                model.pbo.mu_raw -= cfg.learning_rate * vel.mu_raw;
                model.pbo.sigma_raw -= cfg.learning_rate * vel.sigma_raw;
            }
            for (p, v) in model.readout_w.iter_mut().zip(&vel.readout_w) {
                *p -= cfg.readout_learning_rate * v;
            }
            for (p, v) in model.readout_b.iter_mut().zip(&vel.readout_b) {
                *p -= cfg.readout_learning_rate * v;
            }
        }
        let tr = evaluate(&model, &data.train, cfg)?;
        check(epoch, tr.loss)?;
        val = evaluate(&model, &data.val, cfg)?;
        report_metrics.push(metrics(&model, epoch, tr.loss, val.accuracy));
        trajectory.push(model.lambdas(t_len));
    }

    Ok(TrainReport {
        metrics: report_metrics,
        lambda_trajectory: trajectory,
        spike_stats: val.spikes,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            clips_per_class: 10,
            height: 4,
            width: 4,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_metrics() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let r = train(&cfg, &small_spec()).unwrap();
        assert_eq!(r.metrics.len(), 1);
        assert_eq!(r.metrics[0].epoch, 0);
        assert_eq!(r.lambda_trajectory.len(), 1);
        assert!((r.metrics[0].val_acc - 0.25).abs() < 1e-12);
    }

    #[test]
    fn runs_are_bit_identical() {
        let cfg = TrainConfig {
            epochs: 2,
            ..Default::default()
        };
        let a = train(&cfg, &small_spec()).unwrap();
        let b = train(&cfg, &small_spec()).unwrap();
        assert_eq!(a.metrics_jsonl().unwrap(), b.metrics_jsonl().unwrap());
    }

    #[test]
    fn amplitude_zero_ablation_runs() {
        let cfg = TrainConfig {
            epochs: 1,
            amplitude: 0.0,
            ..Default::default()
        };
        let r = train(&cfg, &small_spec()).unwrap();
        assert_eq!(r.metrics.len(), 2);
        let l = &r.lambda_trajectory[1];
        assert!(l.iter().all(|&v| v == l[0]));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            epochs: 1,
            readout_learning_rate: f64::INFINITY,
            ..Default::default()
        };
        assert!(matches!(train(&cfg, &small_spec()), Err(Error::Diverged { .. })));
    }
}
