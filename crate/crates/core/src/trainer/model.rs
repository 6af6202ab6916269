//! Pre-filter -> frozen projection -> LIF layer -> rate readout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consistency::{consistency_loss_with_grad, EndpointPair};
use crate::energy::LayerProfile;
use crate::error::{invalid, Result};
use crate::lif::{sigmoid, surrogate_spike, LifParams};
use crate::pbo::{prefilter_values, Boundary, PboParams};
use crate::signal::FrameClip;
use crate::tape::{Tape, Var};

/// What sits in front of the LIF layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Learnable modulated pre-filter.
    #[default]
    Pbo,
    /// `lambda = 0`: the raw clip drives the LIF layer.
    Identity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpikeMode {
    /// Binary spikes with a sigmoid surrogate derivative.
    #[default]
    Heaviside,
    /// Spikes replaced by `s(k(u - v_th))` in the forward pass too, so the
    /// network is smooth and its gradient exact.
    Sigmoid,
}

/// Per-layer, per-step fraction of neurons that fired.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeStats {
    pub layers: Vec<String>,
    pub firing_ratio: Vec<Vec<f64>>,
}

impl SpikeStats {
    /// Entry-wise mean of equally shaped stats.
    pub fn mean(stats: &[SpikeStats]) -> Option<SpikeStats> {
        let first = stats.first()?;
        let mut acc = first.clone();
        for s in &stats[1..] {
            for (row, other) in acc.firing_ratio.iter_mut().zip(&s.firing_ratio) {
                for (a, b) in row.iter_mut().zip(other) {
                    *a += b;
                }
            }
        }
        let n = stats.len() as f64;
        for row in &mut acc.firing_ratio {
            row.iter_mut().for_each(|v| *v /= n);
        }
        Some(acc)
    }
}

/// `layer,t0,t1,...` followed by one row per layer.
pub fn spike_report(stats: &SpikeStats) -> String {
    let steps = stats.firing_ratio.first().map_or(0, Vec::len);
    let mut out = String::from("layer");
    for t in 0..steps {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for (name, row) in stats.layers.iter().zip(&stats.firing_ratio) {
        out.push_str(name);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyModel {
    pub pbo: PboParams,
    pub lif: LifParams,
    pub filter: FilterMode,
    pub boundary: Boundary,
    pub frame_len: usize,
    pub hidden: usize,
    pub n_classes: usize,
    /// Frozen `hidden x frame_len` projection, row-major.
    pub proj: Vec<f64>,
    /// `n_classes x hidden`, row-major.
    pub readout_w: Vec<f64>,
    pub readout_b: Vec<f64>,
}

/// Gradients of the trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub mu_raw: f64,
    pub sigma_raw: f64,
    pub readout_w: Vec<f64>,
    pub readout_b: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(m: &TinyModel) -> Self {
        Self {
            mu_raw: 0.0,
            sigma_raw: 0.0,
            readout_w: vec![0.0; m.readout_w.len()],
            readout_b: vec![0.0; m.readout_b.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrads, c: f64) {
        self.mu_raw += c * other.mu_raw;
        self.sigma_raw += c * other.sigma_raw;
        for (a, b) in self.readout_w.iter_mut().zip(&other.readout_w) {
            *a += c * b;
        }
        for (a, b) in self.readout_b.iter_mut().zip(&other.readout_b) {
            *a += c * b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub alpha_weight: f64,
    pub spike_mode: SpikeMode,
    pub surrogate_k: f64,
    pub want_grad: bool,
}

#[derive(Clone, Debug)]
pub struct ClipEval {
    /// `ce + alpha * consistency` (0 without a label).
    pub loss: f64,
    pub ce: f64,
    pub consistency: f64,
    pub logits: Vec<f64>,
    pub spikes: SpikeStats,
    /// Mean square of the LIF layer's input current.
    pub pre_activation_ms: f64,
    pub ym: FrameClip,
    pub grads: Option<ParamGrads>,
}

pub struct Forward {
    pub logits: Vec<f64>,
    pub spikes: SpikeStats,
    pub ym: FrameClip,
}

impl TinyModel {
    /// Random projection entries are `N(0, proj_scale^2 / frame_len)`; the
    /// readout starts at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_len: usize,
        hidden: usize,
        n_classes: usize,
        pbo: PboParams,
        lif: LifParams,
        filter: FilterMode,
        proj_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if frame_len == 0 || hidden == 0 || n_classes < 2 {
            return invalid("model needs positive sizes and at least two classes");
        }
        pbo.validate()?;
        lif.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = proj_scale / (frame_len as f64).sqrt();
        let proj = (0..hidden * frame_len)
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            pbo,
            lif,
            filter,
            boundary: Boundary::ReplicateFirst,
            frame_len,
            hidden,
            n_classes,
            proj,
            readout_w: vec![0.0; n_classes * hidden],
            readout_b: vec![0.0; n_classes],
        })
    }

    fn project(&self, frame: &[f64]) -> Vec<f64> {
        self.proj
            .chunks_exact(self.frame_len)
            .map(|row| row.iter().zip(frame).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// Layer profiles for the energy model. The projection runs densely on
    /// every frame, so its count is `2 * hidden * frame_len * t_len`. The
    /// readout is driven by the LIF layer's spikes at `rate` and carries that
    /// layer's name, matching the spike CSV.
    pub fn energy_profiles(&self, t_len: usize, rate: f64) -> Result<Vec<LayerProfile>> {
        let layers = vec![
            LayerProfile {
                name: "proj".into(),
                flops: (2 * self.hidden * self.frame_len * t_len) as u64,
                spike_rate: 1.0,
                is_first: true,
            },
            LayerProfile {
                name: "lif".into(),
                flops: (2 * self.hidden * self.n_classes) as u64,
                spike_rate: rate,
                is_first: false,
            },
        ];
        for l in &layers {
            l.validate()?;
        }
        Ok(layers)
    }

    pub fn lambdas(&self, t_len: usize) -> Vec<f64> {
        match self.filter {
            FilterMode::Pbo => self.pbo.lambdas(t_len),
            FilterMode::Identity => vec![0.0; t_len],
        }
    }

    pub fn forward(&self, clip: &FrameClip) -> Result<Forward> {
        let opts = EvalOptions {
            alpha_weight: 0.0,
            spike_mode: SpikeMode::Heaviside,
            surrogate_k: crate::lif::DEFAULT_SURROGATE_SHARPNESS,
            want_grad: false,
        };
        let e = self.eval_clip(clip, None, &opts)?;
        Ok(Forward {
            logits: e.logits,
            spikes: e.spikes,
            ym: e.ym,
        })
    }

    /// Builds the clip's graph and evaluates it, optionally with gradients.
    pub fn eval_clip(&self, clip: &FrameClip, label: Option<usize>, opts: &EvalOptions) -> Result<ClipEval> {
        if clip.frame_len() != self.frame_len {
            return invalid(format!(
                "clip frames hold {} values, model expects {}",
                clip.frame_len(),
                self.frame_len
            ));
        }
        if let Some(l) = label {
            if l >= self.n_classes {
                return invalid(format!("label {l} out of range"));
            }
        }
        let t_len = clip.t_len();
        let fl = self.frame_len;
        let mut tape = Tape::new();

        let mu_raw = tape.leaf(self.pbo.mu_raw);
        let sigma_raw = tape.leaf(self.pbo.sigma_raw);
        let w: Vec<Var> = self.readout_w.iter().map(|&v| tape.leaf(v)).collect();
        let b: Vec<Var> = self.readout_b.iter().map(|&v| tape.leaf(v)).collect();

        let lam: Vec<Var> = match self.filter {
            FilterMode::Identity => (0..t_len).map(|_| tape.constant(0.0)).collect(),
            FilterMode::Pbo => {
                let mu = tape.sigmoid(mu_raw);
                let p = tape.sigmoid(sigma_raw);
                let omega = tape.scale(p, std::f64::consts::PI);
                (0..t_len)
                    .map(|t| {
                        let arg = tape.linear(self.pbo.phi, &[(omega, t as f64)]);
                        let s = tape.sin(arg);
                        tape.linear(0.0, &[(mu, 1.0), (s, self.pbo.amplitude)])
                    })
                    .collect()
            }
        };
        let lam_vals: Vec<f64> = lam.iter().map(|&v| tape.value(v)).collect();

        let x = clip.data();
        let ym = prefilter_values(x, fl, &lam_vals, self.boundary)?;
        let prev_frame = |t: usize| -> Vec<f64> {
            match (t, self.boundary) {
                (0, Boundary::ReplicateFirst) => x[..fl].to_vec(),
                (0, Boundary::Zero) => vec![0.0; fl],
                _ => x[(t - 1) * fl..t * fl].to_vec(),
            }
        };

        let tau = self.lif.tau;
        let vr = self.lif.v_reset;
        let vth = self.lif.v_th;
        let mut v: Vec<Var> = (0..self.hidden).map(|_| tape.constant(vr)).collect();
        let mut spike_sum: Vec<Vec<Var>> = vec![Vec::with_capacity(t_len); self.hidden];
        let mut ratio = Vec::with_capacity(t_len);
        let mut pre_ms = 0.0;
        for t in 0..t_len {
            let z = self.project(&ym[t * fl..(t + 1) * fl]);
            let zp = self.project(&prev_frame(t));
            let mut fired = 0.0;
            for d in 0..self.hidden {
                pre_ms += z[d] * z[d];
                let zv = tape.custom(z[d], &[(lam[t], -zp[d])]);
                let u = tape.linear(tau * vr, &[(v[d], 1.0 - tau), (zv, tau)]);
                let uv = tape.value(u);
                let (s_val, ds) = match opts.spike_mode {
                    SpikeMode::Heaviside => {
                        let s = surrogate_spike(uv, vth, opts.surrogate_k);
                        (s.spike, s.pseudo_derivative)
                    }
                    SpikeMode::Sigmoid => {
                        let s = sigmoid(opts.surrogate_k * (uv - vth));
                        (s, opts.surrogate_k * s * (1.0 - s))
                    }
                };
                let s = tape.custom(s_val, &[(u, ds)]);
                fired += s_val;
                spike_sum[d].push(s);
                v[d] = tape.custom(uv * (1.0 - s_val) + vr * s_val, &[(u, 1.0 - s_val), (s, vr - uv)]);
            }
            ratio.push(fired / self.hidden as f64);
        }
        let inv_t = 1.0 / t_len as f64;
        let rates: Vec<Var> = spike_sum
            .iter()
            .map(|ss| {
                let terms: Vec<(Var, f64)> = ss.iter().map(|&s| (s, inv_t)).collect();
                tape.linear(0.0, &terms)
            })
            .collect();
        let logits: Vec<Var> = (0..self.n_classes)
            .map(|c| {
                let d = tape.dot(&w[c * self.hidden..(c + 1) * self.hidden], &rates);
                tape.add(d, b[c])
            })
            .collect();
        let logit_vals: Vec<f64> = logits.iter().map(|&l| tape.value(l)).collect();
        let ym_clip = FrameClip::new(clip.dims(), ym)?;

        let (mut ce, mut consistency) = (0.0, 0.0);
        let mut grads = None;
        if let Some(label) = label {
            let lse = tape.logsumexp(&logits);
            let ce_var = tape.sub(lse, logits[label]);
            ce = tape.value(ce_var);
            let mut terms = vec![(ce_var, 1.0)];
            if opts.alpha_weight > 0.0 {
                let pair = EndpointPair::from_input(clip, ym_clip.clone(), self.boundary)?;
                let (loss, g) = consistency_loss_with_grad(&pair, &lam_vals)?;
                consistency = loss.total;
                let partials: Vec<(Var, f64)> = (0..t_len)
                    .map(|t| {
                        let pf = prev_frame(t);
                        let via_ym: f64 = g.d_ym[t * fl..(t + 1) * fl]
                            .iter()
                            .zip(&pf)
                            .map(|(d, p)| -d * p)
                            .sum();
                        (lam[t], g.d_lambda[t] + via_ym)
                    })
                    .collect();
                let c = tape.custom(consistency, &partials);
                terms.push((c, opts.alpha_weight));
            }
            let loss = tape.linear(0.0, &terms);
            if opts.want_grad {
                let adj = tape.gradient(loss);
                grads = Some(ParamGrads {
                    mu_raw: adj[mu_raw.index()],
                    sigma_raw: adj[sigma_raw.index()],
                    readout_w: w.iter().map(|v| adj[v.index()]).collect(),
                    readout_b: b.iter().map(|v| adj[v.index()]).collect(),
                });
            }
        }

        Ok(ClipEval {
            loss: ce + opts.alpha_weight * consistency,
            ce,
            consistency,
            logits: logit_vals,
            spikes: SpikeStats {
                layers: vec!["lif".into()],
                firing_ratio: vec![ratio],
            },
            pre_activation_ms: pre_ms / (t_len * self.hidden) as f64,
            ym: ym_clip,
            grads,
        })
    }
}
