//! Synthetic motion-classification clips.
//!
//! Every clip shares one static background pattern carrying most of the
//! energy. Class `k` adds its own spatial pattern oscillating at `w_k` with a
//! random per-clip phase, then white noise is added everywhere.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::FrameClip;

pub const MIN_DC_TO_TONE_RATIO: f64 = 10.0;
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub n_classes: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "C")]
    pub channels: usize,
    pub class_tones: Vec<f64>,
    /// Mean square of the background pattern.
    pub dc_background_power: f64,
    /// Mean square of each class's oscillating component.
    pub tone_power: f64,
    pub noise_std: f64,
    pub clips_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            n_classes: 4,
            t_len: 16,
            height: 8,
            width: 8,
            channels: 1,
            class_tones: vec![PI / 2.0, 5.0 * PI / 8.0, 3.0 * PI / 4.0, 7.0 * PI / 8.0],
            dc_background_power: 2.0,
            tone_power: 0.1,
            noise_std: 0.1,
            clips_per_class: 40,
            seed: 7,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return invalid("need at least two classes");
        }
        if self.class_tones.len() != self.n_classes {
            return invalid(format!(
                "{} tones for {} classes",
                self.class_tones.len(),
                self.n_classes
            ));
        }
        for (i, &w) in self.class_tones.iter().enumerate() {
            if !(w > 0.0 && w <= PI) {
                return invalid(format!("class tone {w} outside (0, pi]"));
            }
            if self.class_tones[..i].contains(&w) {
                return invalid(format!("class tone {w} repeated"));
            }
        }
        if self.t_len < 2 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return invalid("clip dims must be positive with T >= 2");
        }
        if !(self.dc_background_power >= 0.0 && self.tone_power >= 0.0 && self.noise_std >= 0.0) {
            return invalid("powers and noise must be >= 0");
        }
        if self.tone_power > 0.0
            && self.dc_background_power < MIN_DC_TO_TONE_RATIO * self.tone_power
        {
            return invalid(format!(
                "background/tone power ratio must be >= {MIN_DC_TO_TONE_RATIO}"
            ));
        }
        if self.clips_per_class == 0 {
            return invalid("clips_per_class must be positive");
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.t_len, self.channels, self.height, self.width]
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub clip: FrameClip,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledClip>,
    pub val: Vec<LabeledClip>,
}

fn normal_pattern(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Rescales `v` to mean square `power` (all zeros when `power` is 0).
fn with_power(mut v: Vec<f64>, power: f64) -> Vec<f64> {
    let ms = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let k = if ms > 0.0 { (power / ms).sqrt() } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= k);
    v
}

pub fn gen_dataset(spec: &SyntheticTaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.frame_len();
    let background: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let background = with_power(background, spec.dc_background_power);
    let patterns: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| with_power(normal_pattern(&mut rng, n), 1.0))
        .collect();
    // sin has mean square 1/2, so amplitude sqrt(2 P) gives power P.
    let amp = (2.0 * spec.tone_power).sqrt();

    let mut train = Vec::new();
    let mut val = Vec::new();
    for (label, (&w, pattern)) in spec.class_tones.iter().zip(&patterns).enumerate() {
        let mut clips = Vec::with_capacity(spec.clips_per_class);
        for _ in 0..spec.clips_per_class {
            let phase = rng.random_range(0.0..2.0 * PI);
            let mut data = Vec::with_capacity(spec.t_len * n);
            for t in 0..spec.t_len {
                let s = amp * (w * t as f64 + phase).sin();
                for i in 0..n {
                    let noise = if spec.noise_std > 0.0 {
                        spec.noise_std * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    data.push(background[i] + s * pattern[i] + noise);
                }
            }
            clips.push(LabeledClip {
                clip: FrameClip::new(spec.dims(), data)?,
                label,
            });
        }
        let mut order: Vec<usize> = (0..clips.len()).collect();
        order.shuffle(&mut rng);
        let n_val = (VALIDATION_FRACTION * clips.len() as f64).round() as usize;
        let mut slots: Vec<Option<LabeledClip>> = clips.into_iter().map(Some).collect();
        for (rank, &i) in order.iter().enumerate() {
            let c = slots[i].take().expect("each index used once");
            if rank < n_val {
                val.push(c);
            } else {
                train.push(c);
            }
        }
    }
    Ok(Dataset { train, val })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::empirical_psd;

    #[test]
    fn silent_classes_are_identical() {
        let spec = SyntheticTaskSpec {
            tone_power: 0.0,
            noise_std: 0.0,
            clips_per_class: 3,
            ..Default::default()
        };
        let d = gen_dataset(&spec).unwrap();
        let first = &d.train[0].clip;
        assert!(d.train.iter().chain(&d.val).all(|c| &c.clip == first));
    }

    #[test]
    fn class_zero_peaks_at_its_tone() {
        let spec = SyntheticTaskSpec {
            n_classes: 2,
            t_len: 64,
            class_tones: vec![PI / 8.0, 3.0 * PI / 4.0],
            noise_std: 0.0,
            clips_per_class: 5,
            ..Default::default()
        };
        let d = gen_dataset(&spec).unwrap();
        let c = d.train.iter().find(|c| c.label == 0).unwrap();
        let grid = crate::signal::uniform_grid(33);
        let psd = empirical_psd(&c.clip.pixel_series(3), &grid).unwrap();
        let p = psd.powers().unwrap();
        let argmax = (1..grid.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert!((grid[argmax] - PI / 8.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_and_stratified() {
        let spec = SyntheticTaskSpec::default();
        let a = gen_dataset(&spec).unwrap();
        let b = gen_dataset(&spec).unwrap();
        assert_eq!(a, b);
        for k in 0..spec.n_classes {
            assert_eq!(a.val.iter().filter(|c| c.label == k).count(), 8);
            assert_eq!(a.train.iter().filter(|c| c.label == k).count(), 32);
        }
        let other = gen_dataset(&SyntheticTaskSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rejects_bad_specs() {
        let base = SyntheticTaskSpec::default();
        let cases = [
            SyntheticTaskSpec { n_classes: 1, class_tones: vec![1.0], ..base.clone() },
            SyntheticTaskSpec { class_tones: vec![1.0, 1.0, 2.0, 3.0], ..base.clone() },
            SyntheticTaskSpec { tone_power: 1.0, ..base.clone() },
            SyntheticTaskSpec { class_tones: vec![0.0, 1.0, 2.0, 3.0], ..base.clone() },
        ];
        for c in cases {
            assert!(gen_dataset(&c).is_err());
        }
    }
}
