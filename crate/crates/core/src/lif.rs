//! Discrete-time leaky integrate-and-fire neuron.
//!
//! One step:
//!
//! ```text
//! U[t] = V[t-1] + tau * (X[t] - (V[t-1] - V_reset))
//! S[t] = Theta(U[t] - V_th)            Theta(0) = 1
//! V[t] = U[t] * (1 - S[t]) + V_reset * S[t]
//! ```
//!
//! Below threshold the recentred potential obeys
//! `V~[t] = alpha V~[t-1] + (1 - alpha) X[t]` with `alpha = 1 - tau`, a
//! first-order low-pass with unity DC gain. Setting `v_th = +inf`
//! (see [`LifParams::subthreshold`]) disables firing so that regime can be
//! simulated exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::Signal;

pub const DEFAULT_TAU: f64 = 0.7;
pub const DEFAULT_V_TH: f64 = 1.0;
pub const DEFAULT_V_RESET: f64 = 0.0;
pub const DEFAULT_SURROGATE_SHARPNESS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub tau: f64,
    /// `f64::INFINITY` disables firing. Serialized as `null` in that case.
    #[serde(with = "threshold_serde")]
    pub v_th: f64,
    pub v_reset: f64,
}

mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            v_th: DEFAULT_V_TH,
            v_reset: DEFAULT_V_RESET,
        }
    }
}

impl LifParams {
    pub fn new(tau: f64, v_th: f64, v_reset: f64) -> Result<Self> {
        let p = Self { tau, v_th, v_reset };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with firing disabled.
    pub fn subthreshold(tau: f64, v_reset: f64) -> Result<Self> {
        Self::new(tau, f64::INFINITY, v_reset)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return invalid(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !self.v_reset.is_finite() || self.v_th.is_nan() || !(self.v_th > self.v_reset) {
            return invalid("require finite v_reset < v_th");
        }
        Ok(())
    }

    /// Retention factor `alpha = 1 - tau`.
    pub fn alpha(&self) -> f64 {
        1.0 - self.tau
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub v: f64,
}

impl LifState {
    pub fn at_rest(p: &LifParams) -> Self {
        Self { v: p.v_reset }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifStep {
    pub state: LifState,
    pub spike: bool,
    /// Pre-reset potential.
    pub u: f64,
}

pub fn lif_step(state: LifState, x: f64, p: &LifParams) -> LifStep {
    let u = state.v + p.tau * (x - (state.v - p.v_reset));
    let spike = u >= p.v_th;
    let v = if spike { p.v_reset } else { u };
    LifStep {
        state: LifState { v },
        spike,
        u,
    }
}

/// Spike train (0/1) and post-reset potential trace of one neuron.
#[derive(Clone, Debug, PartialEq)]
pub struct LifTrace {
    pub spikes: Signal,
    pub potentials: Signal,
}

pub fn lif_run(input: &Signal, p: &LifParams, initial: LifState) -> Result<LifTrace> {
    let (spikes, potentials) = lif_run_slice(input.samples(), p, initial);
    Ok(LifTrace {
        spikes: Signal::new(spikes)?,
        potentials: Signal::new(potentials)?,
    })
}

pub(crate) fn lif_run_slice(x: &[f64], p: &LifParams, initial: LifState) -> (Vec<f64>, Vec<f64>) {
    let mut state = initial;
    let mut spikes = Vec::with_capacity(x.len());
    let mut potentials = Vec::with_capacity(x.len());
    for &xt in x {
        let step = lif_step(state, xt, p);
        state = step.state;
        spikes.push(if step.spike { 1.0 } else { 0.0 });
        potentials.push(state.v);
    }
    (spikes, potentials)
}

/// Recentred subthreshold response `V~[t] = alpha V~[t-1] + (1-alpha) x[t]`
/// from rest.
pub fn subthreshold_response(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut v = 0.0;
    x.iter()
        .map(|&xt| {
            v = alpha * v + (1.0 - alpha) * xt;
            v
        })
        .collect()
}

/// `H(e^{jw}) = (1 - alpha) / (1 - alpha e^{-jw})` and `|H|^2`.
pub fn lif_subthreshold_gain(alpha: f64, omega: f64) -> (Complex64, f64) {
    let h = Complex64::new(1.0 - alpha, 0.0)
        / (Complex64::new(1.0, 0.0) - alpha * Complex64::from_polar(1.0, -omega));
    if omega == 0.0 {
        return (h, 1.0);
    }
    let mag2 = (1.0 - alpha).powi(2) / (1.0 + alpha * alpha - 2.0 * alpha * omega.cos());
    (h, mag2)
}

/// Squared LIF gain at `omega`.
pub fn lif_gain_sq(alpha: f64, omega: f64) -> f64 {
    lif_subthreshold_gain(alpha, omega).1
}

/// Worst-case squared gain over `[omega0, pi]`.
///
/// `|H|^2` decreases monotonically on `(0, pi)`, so the maximum sits at
/// the lower band edge.
pub fn motion_attenuation_bound(alpha: f64, omega0: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if !(omega0 > 0.0 && omega0 <= std::f64::consts::PI) {
        return invalid(format!("omega0 must lie in (0, pi], got {omega0}"));
    }
    Ok(lif_gain_sq(alpha, omega0))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateSpike {
    pub spike: f64,
    pub pseudo_derivative: f64,
}

/// Heaviside forward with a sigmoid pseudo-derivative
/// `k * s(k(u - v_th)) * (1 - s(k(u - v_th)))`.
pub fn surrogate_spike(u: f64, v_th: f64, k: f64) -> SurrogateSpike {
    let s = sigmoid(k * (u - v_th));
    SurrogateSpike {
        spike: if u >= v_th { 1.0 } else { 0.0 },
        pseudo_derivative: k * s * (1.0 - s),
    }
}
