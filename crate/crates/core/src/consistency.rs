//! Consistency regularizer tying the filtered clip to its two endpoints: the
//! identity `Y0 = X` and the first difference `Y1[t] = X[t] - X[t-1]`.
//!
//! Per step `t`:
//!
//! ```text
//! int_t  = ||l (Ym~ - Y1~)||^2 + ||(1 - l)(Ym~ - Y0~)||^2        (demeaned)
//! grad_t = sum_{d in x,y} || S_d Ym - max(|S_d Y0|, |S_d Y1|) ||_1  (raw)
//! loss   = sum_t (int_t + grad_t) / (T C H W)
//! ```
//!
//! `S_d` are 3x3 Sobel filters applied as correlation, so a ramp rising in
//! `x` has positive `S_x`. Borders replicate the nearest pixel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pbo::{prefilter_apply, Boundary};
use crate::signal::FrameClip;

pub const DEFAULT_CONSISTENCY_WEIGHT: f64 = 1e-2;

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Subtracts each channel's spatial mean from a `C x H x W` frame.
pub fn spatial_demean(frame: &[f64], channels: usize) -> Vec<f64> {
    let hw = frame.len() / channels;
    let mut out = Vec::with_capacity(frame.len());
    for ch in frame.chunks_exact(hw) {
        let mean = ch.iter().sum::<f64>() / hw as f64;
        out.extend(ch.iter().map(|v| v - mean));
    }
    out
}

fn correlate(frame: &[f64], c: usize, h: usize, w: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; frame.len()];
    for ci in 0..c {
        let plane = &frame[ci * h * w..(ci + 1) * h * w];
        let dst = &mut out[ci * h * w..(ci + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (dy, row) in k.iter().enumerate() {
                    let yy = (y + dy).saturating_sub(1).min(h - 1);
                    for (dx, &kv) in row.iter().enumerate() {
                        if kv != 0.0 {
                            let xx = (x + dx).saturating_sub(1).min(w - 1);
                            acc += kv * plane[yy * w + xx];
                        }
                    }
                }
                dst[y * w + x] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`correlate`]: scatters `upstream` back through the taps.
fn correlate_adjoint(upstream: &[f64], c: usize, h: usize, w: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; upstream.len()];
    for ci in 0..c {
        let src = &upstream[ci * h * w..(ci + 1) * h * w];
        let dst = &mut out[ci * h * w..(ci + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let g = src[y * w + x];
                if g == 0.0 {
                    continue;
                }
                for (dy, row) in k.iter().enumerate() {
                    let yy = (y + dy).saturating_sub(1).min(h - 1);
                    for (dx, &kv) in row.iter().enumerate() {
                        if kv != 0.0 {
                            let xx = (x + dx).saturating_sub(1).min(w - 1);
                            dst[yy * w + xx] += kv * g;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Horizontal and vertical Sobel responses of a `C x H x W` frame.
pub fn sobel_gradients(frame: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    (
        correlate(frame, c, h, w, &SOBEL_X),
        correlate(frame, c, h, w, &SOBEL_Y),
    )
}

/// Identity endpoint, difference endpoint and filtered output.
#[derive(Clone, Debug)]
pub struct EndpointPair {
    pub y0: FrameClip,
    pub y1: FrameClip,
    pub ym: FrameClip,
}

impl EndpointPair {
    pub fn new(y0: FrameClip, y1: FrameClip, ym: FrameClip) -> Result<Self> {
        if y0.dims() != y1.dims() || y0.dims() != ym.dims() {
            return invalid(format!(
                "endpoint dims differ: {:?}, {:?}, {:?}",
                y0.dims(),
                y1.dims(),
                ym.dims()
            ));
        }
        Ok(Self { y0, y1, ym })
    }

    /// Builds both endpoints from the raw clip.
    pub fn from_input(x: &FrameClip, ym: FrameClip, boundary: Boundary) -> Result<Self> {
        let y1 = prefilter_apply(x, &vec![1.0; x.t_len()], boundary)?;
        Self::new(x.clone(), y1, ym)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub t: usize,
    pub intensity: f64,
    pub gradient: f64,
}

/// `intensity` and `gradient` carry the `1/(TCHW)` factor, so
/// `total = intensity + gradient`; `per_step` holds the raw sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub intensity: f64,
    pub gradient: f64,
    pub per_step: Vec<StepLoss>,
}

/// Gradients of the normalized loss.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyGrad {
    /// With respect to the raw filtered clip, same layout as `ym`.
    pub d_ym: Vec<f64>,
    /// With respect to `lambda[t]`, holding `ym` fixed.
    pub d_lambda: Vec<f64>,
}

struct StepOut {
    loss: StepLoss,
    d_ym: Vec<f64>,
    d_lambda: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn step_terms(pair: &EndpointPair, t: usize, lam: f64, want_grad: bool) -> StepOut {
    let [_, c, h, w] = pair.ym.dims();
    let f0 = pair.y0.frame(t);
    let f1 = pair.y1.frame(t);
    let fm = pair.ym.frame(t);
    let d0 = spatial_demean(f0, c);
    let d1 = spatial_demean(f1, c);
    let dm = spatial_demean(fm, c);

    let (mut n1, mut n0) = (0.0, 0.0);
    for ((m, a), b) in dm.iter().zip(&d1).zip(&d0) {
        n1 += (m - a) * (m - a);
        n0 += (m - b) * (m - b);
    }
    let l2 = lam * lam;
    let r2 = (1.0 - lam) * (1.0 - lam);
    let intensity = l2 * n1 + r2 * n0;

    let mut gradient = 0.0;
    let mut d_ym = if want_grad { vec![0.0; fm.len()] } else { Vec::new() };
    for k in [&SOBEL_X, &SOBEL_Y] {
        let gm = correlate(fm, c, h, w, k);
        let g0 = correlate(f0, c, h, w, k);
        let g1 = correlate(f1, c, h, w, k);
        let resid: Vec<f64> = gm
            .iter()
            .zip(g0.iter().zip(&g1))
            .map(|(m, (a, b))| m - a.abs().max(b.abs()))
            .collect();
        gradient += resid.iter().map(|r| r.abs()).sum::<f64>();
        if want_grad {
            let signs: Vec<f64> = resid.iter().map(|&r| sign(r)).collect();
            for (d, v) in d_ym.iter_mut().zip(correlate_adjoint(&signs, c, h, w, k)) {
                *d += v;
            }
        }
    }

    if want_grad {
        let g_int: Vec<f64> = dm
            .iter()
            .zip(d1.iter().zip(&d0))
            .map(|(m, (a, b))| 2.0 * l2 * (m - a) + 2.0 * r2 * (m - b))
            .collect();
        // Back through the demeaning, which is an orthogonal projection.
        for (d, v) in d_ym.iter_mut().zip(spatial_demean(&g_int, c)) {
            *d += v;
        }
    }

    StepOut {
        loss: StepLoss {
            t,
            intensity,
            gradient,
        },
        d_ym,
        d_lambda: 2.0 * lam * n1 - 2.0 * (1.0 - lam) * n0,
    }
}

fn evaluate(pair: &EndpointPair, lambdas: &[f64], want_grad: bool) -> Result<(LossBreakdown, Vec<StepOut>)> {
    let t_len = pair.ym.t_len();
    if lambdas.len() != t_len {
        return invalid(format!("{} lambdas for {t_len} steps", lambdas.len()));
    }
    let steps: Vec<StepOut> = (0..t_len)
        .into_par_iter()
        .map(|t| step_terms(pair, t, lambdas[t], want_grad))
        .collect();
    let norm = pair.ym.data().len() as f64;
    let mut intensity = 0.0;
    let mut gradient = 0.0;
    for s in &steps {
        intensity += s.loss.intensity;
        gradient += s.loss.gradient;
    }
    let (intensity, gradient) = (intensity / norm, gradient / norm);
    let breakdown = LossBreakdown {
        total: intensity + gradient,
        intensity,
        gradient,
        per_step: steps.iter().map(|s| s.loss).collect(),
    };
    Ok((breakdown, steps))
}

pub fn consistency_loss(pair: &EndpointPair, lambdas: &[f64]) -> Result<LossBreakdown> {
    Ok(evaluate(pair, lambdas, false)?.0)
}

/// Loss plus its gradients. The L1 subgradient at zero is taken as 0.
pub fn consistency_loss_with_grad(
    pair: &EndpointPair,
    lambdas: &[f64],
) -> Result<(LossBreakdown, ConsistencyGrad)> {
    let (breakdown, steps) = evaluate(pair, lambdas, true)?;
    let norm = pair.ym.data().len() as f64;
    let mut d_ym = Vec::with_capacity(pair.ym.data().len());
    let mut d_lambda = Vec::with_capacity(steps.len());
    for s in steps {
        d_ym.extend(s.d_ym.into_iter().map(|v| v / norm));
        d_lambda.push(s.d_lambda / norm);
    }
    Ok((breakdown, ConsistencyGrad { d_ym, d_lambda }))
}

/// Per-pixel minimizer of the intensity term at fixed `lambda`:
/// `(l^2 Y1~ + (1-l)^2 Y0~) / (l^2 + (1-l)^2)`.
pub fn equilibrium_closed_form(y0d: &[f64], y1d: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if y0d.len() != y1d.len() {
        return invalid("endpoint lengths differ");
    }
    if !(0.0..=1.0).contains(&lambda) {
        return invalid(format!("lambda {lambda} outside [0, 1]"));
    }
    let a = lambda * lambda;
    let b = (1.0 - lambda) * (1.0 - lambda);
    let d = a + b;
    Ok(y0d
        .iter()
        .zip(y1d)
        .map(|(&z, &o)| (a * o + b * z) / d)
        .collect())
}

pub fn total_loss(ce: f64, consist: f64, alpha_weight: f64) -> f64 {
    ce + alpha_weight * consist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demean_examples() {
        assert_eq!(spatial_demean(&[5.0; 6], 2), vec![0.0; 6]);
        assert_eq!(spatial_demean(&[1.0, 3.0], 1), vec![-1.0, 1.0]);
        let z = [-2.0, 1.0, 1.0, 4.0, -4.0, 0.0];
        assert_eq!(spatial_demean(&z, 2), z.to_vec());
    }

    #[test]
    fn sobel_examples() {
        let (gx, gy) = sobel_gradients(&[3.0; 20], 1, 4, 5);
        assert!(gx.iter().chain(&gy).all(|&v| v == 0.0));

        let (h, w) = (5, 6);
        let ramp: Vec<f64> = (0..h * w).map(|i| (i % w) as f64).collect();
        let (gx, gy) = sobel_gradients(&ramp, 1, h, w);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                assert_eq!(gx[y * w + x], 8.0);
                assert_eq!(gy[y * w + x], 0.0);
            }
        }
    }

    #[test]
    fn sobel_transpose_symmetry() {
        let n = 4;
        let img: Vec<f64> = (0..n * n).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let tr: Vec<f64> = (0..n * n).map(|i| img[(i % n) * n + i / n]).collect();
        let (gx_t, _) = sobel_gradients(&tr, 1, n, n);
        let (_, gy) = sobel_gradients(&img, 1, n, n);
        for y in 0..n {
            for x in 0..n {
                assert_eq!(gx_t[y * n + x], gy[x * n + y]);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let (c, h, w) = (2, 3, 4);
        let a: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 1.3).cos()).collect();
        for k in [&SOBEL_X, &SOBEL_Y] {
            let lhs: f64 = correlate(&a, c, h, w, k).iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = a.iter().zip(correlate_adjoint(&b, c, h, w, k)).map(|(x, y)| x * y).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    fn clip(t: usize, h: usize, w: usize, f: impl Fn(usize) -> f64) -> FrameClip {
        FrameClip::new([t, 1, h, w], (0..t * h * w).map(f).collect()).unwrap()
    }

    #[test]
    fn loss_examples() {
        let c = clip(3, 2, 2, |_| 2.0);
        let pair = EndpointPair::new(c.clone(), c.clone(), c).unwrap();
        assert_eq!(consistency_loss(&pair, &[0.3; 3]).unwrap().total, 0.0);

        // Y0 = Ym, lambda = 0, |grad Y0| >= |grad Y1| and grad Y0 >= 0.
        let y0 = clip(2, 3, 3, |i| (i % 3) as f64 * 2.0);
        let y1 = clip(2, 3, 3, |i| (i % 3) as f64);
        let pair = EndpointPair::new(y0.clone(), y1, y0).unwrap();
        assert_eq!(consistency_loss(&pair, &[0.0; 2]).unwrap().total, 0.0);

        // One pixel: demeaning zeroes every intensity residual.
        let a = clip(1, 1, 1, |_| 3.0);
        let b = clip(1, 1, 1, |_| -7.0);
        let pair = EndpointPair::new(a, b.clone(), b).unwrap();
        assert_eq!(consistency_loss(&pair, &[0.4]).unwrap().intensity, 0.0);

        let bad = clip(2, 2, 2, |_| 0.0);
        let other = clip(2, 2, 3, |_| 0.0);
        assert!(EndpointPair::new(bad.clone(), bad.clone(), other).is_err());
        let pair = EndpointPair::new(bad.clone(), bad.clone(), bad).unwrap();
        assert!(consistency_loss(&pair, &[0.0]).is_err());
    }

    #[test]
    fn breakdown_normalization() {
        let y0 = clip(2, 3, 3, |i| ((i * 5) % 7) as f64);
        let y1 = clip(2, 3, 3, |i| ((i * 3) % 5) as f64);
        let ym = clip(2, 3, 3, |i| ((i * 2) % 3) as f64 + 0.1);
        let pair = EndpointPair::new(y0, y1, ym).unwrap();
        let b = consistency_loss(&pair, &[0.2, 0.7]).unwrap();
        let raw: f64 = b.per_step.iter().map(|s| s.intensity + s.gradient).sum();
        assert!((b.total - raw / 18.0).abs() < 1e-12);
        assert!((b.total - (b.intensity + b.gradient)).abs() < 1e-15);
        let json = serde_json::to_value(&b).unwrap();
        assert!(json["per_step"][1]["t"] == 1);
    }

    #[test]
    fn equilibrium_examples() {
        let y0 = [1.0, -2.0, 0.5];
        let y1 = [-1.0, 4.0, 0.25];
        assert_eq!(equilibrium_closed_form(&y0, &y1, 0.0).unwrap(), y0.to_vec());
        assert_eq!(equilibrium_closed_form(&y0, &y1, 1.0).unwrap(), y1.to_vec());
        let mid = equilibrium_closed_form(&y0, &y1, 0.5).unwrap();
        for i in 0..3 {
            assert_eq!(mid[i], 0.5 * (y0[i] + y1[i]));
        }
        assert!(equilibrium_closed_form(&y0, &y1[..2], 0.5).is_err());
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.7, 0.0, 0.01), 0.7);
        assert_eq!(total_loss(0.7, 5.0, 0.0), 0.7);
        assert!((total_loss(1.0, 2.0, DEFAULT_CONSISTENCY_WEIGHT) - 1.02).abs() < 1e-15);
    }
}
