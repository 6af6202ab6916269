//! The two-tap temporal pre-filter and its frequency-domain analysis.
//!
//! ```text
//! Y[t] = X[t] - lambda[t] X[t-1]
//! lambda[t] = mu + A sin(omega t + phi)
//! mu = logistic(mu_raw),   omega = pi * logistic(sigma_raw)
//! ```
//!
//! With a constant `lambda` the filter is the LTI `W(e^{jw}) = 1 - lambda e^{-jw}`
//! and its cascade with the LIF low-pass is
//! `|G|^2 = (1 + lambda^2 - 2 lambda cos w)(1 - alpha)^2 / (1 + alpha^2 - 2 alpha cos w)`.
//! The cascade is monotone in `w`: it tilts low-pass for `lambda < alpha`,
//! is flat at `lambda = alpha`, and tilts high-pass above.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lif::{lif_gain_sq, sigmoid};
use crate::signal::{FrameClip, Signal};

pub const DEFAULT_AMPLITUDE: f64 = 0.1;
pub const DEFAULT_PHASE: f64 = 0.0;
/// `|lambda - alpha|` at or below this counts as the flat point.
pub const FLAT_TOLERANCE: f64 = 1e-12;

/// Learnable raw scalars plus the fixed modulation hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PboParamsRecord", from = "PboParamsRecord")]
pub struct PboParams {
    pub mu_raw: f64,
    pub sigma_raw: f64,
    pub amplitude: f64,
    pub phi: f64,
}

/// JSON shape: raw scalars, hyperparameters, and read-only derived values.
#[derive(Serialize, Deserialize)]
struct PboParamsRecord {
    mu_raw: f64,
    sigma_raw: f64,
    #[serde(rename = "A")]
    amplitude: f64,
    phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
}

impl From<PboParams> for PboParamsRecord {
    fn from(p: PboParams) -> Self {
        Self {
            mu_raw: p.mu_raw,
            sigma_raw: p.sigma_raw,
            amplitude: p.amplitude,
            phi: p.phi,
            mu: Some(p.mu()),
            omega: Some(p.omega()),
        }
    }
}

impl From<PboParamsRecord> for PboParams {
    fn from(r: PboParamsRecord) -> Self {
        Self {
            mu_raw: r.mu_raw,
            sigma_raw: r.sigma_raw,
            amplitude: r.amplitude,
            phi: r.phi,
        }
    }
}

impl PboParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_raw.is_finite() && self.sigma_raw.is_finite() && self.phi.is_finite()) {
            return invalid("PBO parameters must be finite");
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return invalid("modulation amplitude must be finite and >= 0");
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        sigmoid(self.mu_raw)
    }

    pub fn omega(&self) -> f64 {
        omega_from_raw(self.sigma_raw).1
    }

    pub fn lambda(&self, t: usize) -> f64 {
        lambda_schedule(self, t)
    }

    pub fn lambdas(&self, len: usize) -> Vec<f64> {
        (0..len).map(|t| self.lambda(t)).collect()
    }

    /// Parameters realizing the given `mu` and `omega` directly.
    pub fn from_derived(mu: f64, omega: f64, amplitude: f64, phi: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return invalid(format!("mu must lie in (0, 1), got {mu}"));
        }
        if !(omega > 0.0 && omega < PI) {
            return invalid(format!("omega must lie in (0, pi), got {omega}"));
        }
        let p = Self {
            mu_raw: logit(mu),
            sigma_raw: logit(omega / PI),
            amplitude,
            phi,
        };
        p.validate()?;
        Ok(p)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `lambda[t] = mu + A sin(omega t + phi)`, unclamped.
pub fn lambda_schedule(p: &PboParams, t: usize) -> f64 {
    p.mu() + p.amplitude * (p.omega() * t as f64 + p.phi).sin()
}

/// `p = 1 / (1 + e^{-sigma_raw})`, `omega = pi p`.
pub fn omega_from_raw(sigma_raw: f64) -> (f64, f64) {
    let p = sigmoid(sigma_raw);
    (p, PI * p)
}

/// Default initialization for clips of length `t_len`: `mu = 0.5` and one
/// modulation period over the clip, `omega = 2 pi / (t_len - 1)`.
pub fn init_params(t_len: usize) -> Result<PboParams> {
    if t_len < 3 {
        return invalid(format!("initialization needs T >= 3, got {t_len}"));
    }
    let p = 2.0 / (t_len as f64 - 1.0);
    if p >= 1.0 {
        return invalid(format!(
            "T = {t_len} puts the target frequency at or above Nyquist"
        ));
    }
    Ok(PboParams {
        mu_raw: 0.0,
        sigma_raw: logit(p),
        amplitude: DEFAULT_AMPLITUDE,
        phi: DEFAULT_PHASE,
    })
}

/// What the filter sees before the first sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// `X[-1] := X[0]`, so `Y[0] = (1 - lambda[0]) X[0]`.
    #[default]
    ReplicateFirst,
    /// `X[-1] := 0`, so `Y[0] = X[0]`.
    Zero,
}

/// Anything laid out as `T` consecutive frames of equal length.
pub trait Temporal: Sized {
    fn t_len(&self) -> usize;
    fn frame_len(&self) -> usize;
    fn values(&self) -> &[f64];
    fn with_values(&self, values: Vec<f64>) -> Result<Self>;
}

impl Temporal for Signal {
    fn t_len(&self) -> usize {
        self.len()
    }

    fn frame_len(&self) -> usize {
        1
    }

    fn values(&self) -> &[f64] {
        self.samples()
    }

    fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Signal::new(values)
    }
}

impl Temporal for FrameClip {
    fn t_len(&self) -> usize {
        FrameClip::t_len(self)
    }

    fn frame_len(&self) -> usize {
        FrameClip::frame_len(self)
    }

    fn values(&self) -> &[f64] {
        self.data()
    }

    fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        FrameClip::new(self.dims(), values)
    }
}

/// Applies `Y[t] = X[t] - lambda[t] X[t-1]` frame-wise.
pub fn prefilter_apply<S: Temporal>(x: &S, lambdas: &[f64], boundary: Boundary) -> Result<S> {
    let out = prefilter_values(x.values(), x.frame_len(), lambdas, boundary)?;
    x.with_values(out)
}

pub(crate) fn prefilter_values(
    x: &[f64],
    frame_len: usize,
    lambdas: &[f64],
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let t_len = x.len() / frame_len;
    if lambdas.len() != t_len {
        return invalid(format!(
            "schedule has {} coefficients for {t_len} steps",
            lambdas.len()
        ));
    }
    let mut out = Vec::with_capacity(x.len());
    for (t, &lam) in lambdas.iter().enumerate() {
        let cur = &x[t * frame_len..(t + 1) * frame_len];
        if t == 0 {
            match boundary {
                Boundary::ReplicateFirst => out.extend(cur.iter().map(|&v| v - lam * v)),
                Boundary::Zero => out.extend_from_slice(cur),
            }
        } else {
            let prev = &x[(t - 1) * frame_len..t * frame_len];
            out.extend(cur.iter().zip(prev).map(|(&c, &p)| c - lam * p));
        }
    }
    Ok(out)
}

/// `|W(e^{jw}, lambda)|^2 = 1 + lambda^2 - 2 lambda cos w`.
pub fn prefilter_gain(lambda: f64, omega: f64) -> f64 {
    1.0 + lambda * lambda - 2.0 * lambda * omega.cos()
}

/// Squared magnitude of the pre-filter followed by the LIF low-pass.
pub fn cascade_gain(lambda: f64, alpha: f64, omega: f64) -> f64 {
    prefilter_gain(lambda, omega) * lif_gain_sq(alpha, omega)
}

/// `(|G(e^{j0})|^2, |G(e^{j pi})|^2)`.
pub fn endpoint_gains(lambda: f64, alpha: f64) -> (f64, f64) {
    (
        (1.0 - lambda).powi(2),
        (1.0 + lambda).powi(2) * (1.0 - alpha).powi(2) / (1.0 + alpha).powi(2),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiltClass {
    LowPassTilt,
    Flat,
    HighPassTilt,
}

/// Sign of `2 (alpha - lambda)(1 - alpha lambda)`, the derivative numerator
/// of the cascade with respect to `cos w`.
pub fn tilt_classify(lambda: f64, alpha: f64) -> TiltClass {
    if (lambda - alpha).abs() <= FLAT_TOLERANCE {
        TiltClass::Flat
    } else if lambda < alpha {
        TiltClass::LowPassTilt
    } else {
        TiltClass::HighPassTilt
    }
}

/// Result of solving for the half-power point of a tilted cascade.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    Attained { omega: f64, cos_omega: f64 },
    /// The half-power level is not reached inside `[0, pi]`; `cos_omega` is
    /// the out-of-range root.
    NotAttained { cos_omega: f64 },
}

impl Cutoff {
    pub fn omega(&self) -> Option<f64> {
        match self {
            Cutoff::Attained { omega, .. } => Some(*omega),
            Cutoff::NotAttained { .. } => None,
        }
    }

    pub fn cos_omega(&self) -> f64 {
        match self {
            Cutoff::Attained { cos_omega, .. } | Cutoff::NotAttained { cos_omega } => *cos_omega,
        }
    }
}

/// Target ratio `(1 + l^2 - 2 l u) / (1 + a^2 - 2 a u)` at the -3 dB point,
/// normalized at the passband peak (DC for low-pass tilt, Nyquist for
/// high-pass tilt).
pub fn cutoff_target_ratio(lambda: f64, alpha: f64) -> Result<f64> {
    match tilt_classify(lambda, alpha) {
        TiltClass::Flat => invalid("flat cascade has no cutoff"),
        TiltClass::LowPassTilt => Ok(0.5 * (1.0 - lambda).powi(2) / (1.0 - alpha).powi(2)),
        TiltClass::HighPassTilt => Ok(0.5 * (1.0 + lambda).powi(2) / (1.0 + alpha).powi(2)),
    }
}

/// Solves the half-power equation, which is linear in `u = cos w`.
pub fn cutoff_3db(lambda: f64, alpha: f64) -> Result<Cutoff> {
    let r = cutoff_target_ratio(lambda, alpha)?;
    // 1 + l^2 - 2 l u = r (1 + a^2 - 2 a u)
    let u = (r * (1.0 + alpha * alpha) - 1.0 - lambda * lambda) / (2.0 * (r * alpha - lambda));
    if (-1.0..=1.0).contains(&u) {
        Ok(Cutoff::Attained {
            omega: u.acos(),
            cos_omega: u,
        })
    } else {
        Ok(Cutoff::NotAttained { cos_omega: u })
    }
}

/// Fourier coefficients of the single-tone schedule and the resulting
/// harmonic transfers.
///
/// Conventions: `lambda[t] = sum_m lambda_m e^{j m w0 t}` and
/// `Y(e^{jw}) = sum_m W_m(e^{jw}) X(e^{j(w - m w0)})`. Substituting into the
/// filter gives `W_m(e^{jw}) = delta_m - lambda_m e^{-j(w - m w0)}`, so
/// `|W_{+-1}|^2 = A^2 / 4` at every frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicCoefficients {
    pub omega0: f64,
    pub lambda_0: Complex64,
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
}

pub fn harmonic_coefficients(p: &PboParams) -> HarmonicCoefficients {
    let a = p.amplitude;
    // A sin(th) = A/(2j) e^{j th} - A/(2j) e^{-j th}, th = w0 t + phi.
    let two_j = Complex64::new(0.0, 2.0);
    HarmonicCoefficients {
        omega0: p.omega(),
        lambda_0: Complex64::new(p.mu(), 0.0),
        lambda_plus: Complex64::from_polar(a, p.phi) / two_j,
        lambda_minus: -Complex64::from_polar(a, -p.phi) / two_j,
    }
}

impl HarmonicCoefficients {
    pub fn lambda_m(&self, m: i32) -> Complex64 {
        match m {
            0 => self.lambda_0,
            1 => self.lambda_plus,
            -1 => self.lambda_minus,
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn w(&self, m: i32, omega: f64) -> Complex64 {
        let shifted = omega - m as f64 * self.omega0;
        let delay = Complex64::from_polar(1.0, -shifted);
        let base = if m == 0 { 1.0 } else { 0.0 };
        Complex64::new(base, 0.0) - self.lambda_m(m) * delay
    }

    pub fn w0(&self, omega: f64) -> Complex64 {
        self.w(0, omega)
    }

    pub fn w_plus(&self, omega: f64) -> Complex64 {
        self.w(1, omega)
    }

    pub fn w_minus(&self, omega: f64) -> Complex64 {
        self.w(-1, omega)
    }
}

/// Time-averaged squared gain of the modulated filter:
/// `(1 + mu^2 - 2 mu cos w) + A^2 / 2`.
pub fn avg_squared_gain(mu: f64, amplitude: f64, omega: f64) -> f64 {
    prefilter_gain(mu, omega) + 0.5 * amplitude * amplitude
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, a: f64, omega: f64, phi: f64) -> PboParams {
        PboParams::from_derived(mu, omega, a, phi).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let p = params(0.3, 0.0, 1.0, 0.0);
        for t in 0..20 {
            assert!((p.lambda(t) - 0.3).abs() < 1e-15);
        }
        let p = params(0.5, 0.1, 2.0, 0.0);
        assert!((p.lambda(0) - 0.5).abs() < 1e-15);
        let p = params(0.5, 0.1, 2.0 * PI / 9.0, 0.0);
        let expected = 0.5 + 0.1 * (4.0 * PI / 9.0).sin();
        assert!((p.lambda(2) - expected).abs() < 1e-14);
        assert!((p.lambda(2) - 0.598481).abs() < 1e-6);
    }

    #[test]
    fn omega_map_examples() {
        let (pp, w) = omega_from_raw(0.0);
        assert_eq!(pp, 0.5);
        assert_eq!(w, PI / 2.0);
        assert!((PI - omega_from_raw(40.0).1).abs() < 1e-12);
        let raw = ((2.0 / 9.0) / (7.0 / 9.0f64)).ln();
        assert!((raw + 1.252763).abs() < 1e-6);
        assert!((omega_from_raw(raw).1 - 2.0 * PI / 9.0).abs() < 1e-14);
    }

    #[test]
    fn init_examples() {
        let p = init_params(10).unwrap();
        assert!((p.omega() - 2.0 * PI / 9.0).abs() < 1e-14);
        assert_eq!(p.mu(), 0.5);
        assert_eq!((p.amplitude, p.phi), (0.1, 0.0));

        let p = init_params(5).unwrap();
        assert_eq!(p.sigma_raw, 0.0);
        assert_eq!(p.omega(), PI / 2.0);

        assert!(init_params(3).is_err());
        assert!(init_params(2).is_err());
    }

    #[test]
    fn prefilter_examples() {
        let x = Signal::new(vec![3.0, 5.0, 4.0]).unwrap();
        let y = prefilter_apply(&x, &[0.0; 3], Boundary::ReplicateFirst).unwrap();
        assert_eq!(y, x);
        let y = prefilter_apply(&x, &[1.0; 3], Boundary::ReplicateFirst).unwrap();
        assert_eq!(y.samples(), &[0.0, 2.0, -1.0]);
        let y = prefilter_apply(&x, &[1.0; 3], Boundary::Zero).unwrap();
        assert_eq!(y.samples(), &[3.0, 2.0, -1.0]);
        assert!(prefilter_apply(&x, &[1.0; 2], Boundary::ReplicateFirst).is_err());
    }

    #[test]
    fn prefilter_constant_input_closed_form() {
        let b = 1.7;
        let p = params(0.6, 0.1, 2.0 * PI / 9.0, 0.0);
        let x = Signal::new(vec![b; 50]).unwrap();
        let y = prefilter_apply(&x, &p.lambdas(50), Boundary::ReplicateFirst).unwrap();
        for (t, v) in y.samples().iter().enumerate() {
            let expected = b * (1.0 - p.mu()) - 0.1 * b * (p.omega() * t as f64).sin();
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn prefilter_clip_is_framewise() {
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let clip = FrameClip::new([3, 1, 2, 2], data).unwrap();
        let y = prefilter_apply(&clip, &[0.5, 1.0, 0.0], Boundary::ReplicateFirst).unwrap();
        assert_eq!(&y.data()[..4], &[0.0, 0.5, 1.0, 1.5]);
        assert_eq!(&y.data()[4..8], &[4.0; 4]);
        assert_eq!(&y.data()[8..], &[8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn gain_examples() {
        for w in [0.0, 1.0, PI] {
            assert_eq!(prefilter_gain(0.0, w), 1.0);
        }
        assert_eq!(prefilter_gain(1.0, 0.0), 0.0);
        assert!((prefilter_gain(0.5, PI / 2.0) - 1.25).abs() < 1e-15);

        for w in [0.0, 0.7, 2.0, PI] {
            assert!((cascade_gain(0.4, 0.4, w) - 0.36).abs() < 1e-14);
            assert!((cascade_gain(0.2, 0.5, 0.0) - 0.64).abs() < 1e-14);
        }
        let g = cascade_gain(0.5, 0.3, PI);
        assert!((g - 2.25 * 0.49 / 1.69).abs() < 1e-14);
        assert!((g - 0.652367).abs() < 1e-6);
    }

    #[test]
    fn tilt_examples() {
        assert_eq!(tilt_classify(0.1, 0.7), TiltClass::LowPassTilt);
        assert_eq!(tilt_classify(0.3, 0.3), TiltClass::Flat);
        assert_eq!(tilt_classify(0.8, 0.3), TiltClass::HighPassTilt);
        assert_eq!(tilt_classify(0.3 + 1e-13, 0.3), TiltClass::Flat);
    }

    #[test]
    fn cutoff_examples() {
        let c = cutoff_3db(0.8, 0.3).unwrap();
        assert!((c.cos_omega() - 0.580720).abs() < 1e-5);
        assert!((c.omega().unwrap() - 0.951).abs() < 1e-3);

        let c = cutoff_3db(0.1, 0.7).unwrap();
        assert!((c.cos_omega() - 0.933607).abs() < 1e-5);
        assert!((c.omega().unwrap() - 0.366).abs() < 1e-3);

        // Near-flat high-pass tilt: DC already sits above half the peak.
        let c = cutoff_3db(0.35, 0.3).unwrap();
        assert!(matches!(c, Cutoff::NotAttained { cos_omega } if cos_omega > 1.0));

        assert!(cutoff_3db(0.3, 0.3).is_err());
    }

    #[test]
    fn harmonic_examples() {
        let p = params(0.5, 0.1, 1.3, 0.0);
        let h = harmonic_coefficients(&p);
        for w in [0.0, 0.5, 2.0, PI] {
            assert!((h.w_plus(w).norm_sqr() - 0.0025).abs() < 1e-15);
            assert!((h.w_minus(w).norm_sqr() - 0.0025).abs() < 1e-15);
        }
        assert!((h.lambda_0.re - 0.5).abs() < 1e-15);
        assert!((h.lambda_plus.norm() - 0.05).abs() < 1e-15);
        assert_eq!(h.lambda_m(2), Complex64::new(0.0, 0.0));

        let p = params(0.5, 0.0, 1.3, 0.0);
        let h = harmonic_coefficients(&p);
        assert_eq!(h.w_plus(0.4).norm(), 0.0);
        assert!((h.w0(0.4).norm_sqr() - prefilter_gain(0.5, 0.4)).abs() < 1e-15);

        // mu -> 1 via a large raw value: baseline transfer has a DC null.
        let p = PboParams { mu_raw: 40.0, sigma_raw: 0.0, amplitude: 0.1, phi: 0.0 };
        assert!(harmonic_coefficients(&p).w0(0.0).norm_sqr() < 1e-30);
    }

    #[test]
    fn harmonic_coefficients_reconstruct_schedule() {
        let p = params(0.4, 0.2, 0.9, 0.7);
        let h = harmonic_coefficients(&p);
        for t in 0..30 {
            let e = Complex64::from_polar(1.0, h.omega0 * t as f64);
            let v = h.lambda_0 + h.lambda_plus * e + h.lambda_minus * e.conj();
            assert!((v.re - p.lambda(t)).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn avg_gain_examples() {
        assert_eq!(avg_squared_gain(0.3, 0.0, 1.0), prefilter_gain(0.3, 1.0));
        assert!((avg_squared_gain(0.5, 0.1, 0.0) - 0.255).abs() < 1e-15);
        for mu in [0.1, 0.5, 0.9] {
            let at0 = avg_squared_gain(mu, 0.1, 0.0);
            for i in 1..=100 {
                assert!(avg_squared_gain(mu, 0.1, PI * i as f64 / 100.0) > at0);
            }
        }
    }

    #[test]
    fn json_shape() {
        let p = init_params(10).unwrap();
        let v: serde_json::Value = serde_json::to_value(p).unwrap();
        for key in ["mu_raw", "sigma_raw", "A", "phi", "mu", "omega"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: PboParams =
            serde_json::from_str(r#"{"mu_raw":0.0,"sigma_raw":0.0,"A":0.1,"phi":0.0}"#).unwrap();
        assert_eq!(back.omega(), PI / 2.0);
        let back: PboParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
