//! Discrete-time signals, frame clips, spectra and the DTFT/periodogram
//! primitives everything else is built on.
//!
//! All spectra live on `[0, pi]` (radians per sample). Real inputs have
//! conjugate-symmetric transforms, so the negative half carries nothing new.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Default number of grid points used for spectra.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// A finite, non-empty real sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Signal {
    samples: Vec<f64>,
}

impl Signal {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("signal must contain at least one sample");
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return invalid(format!("signal sample {i} is not finite"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.samples
    }

    pub fn dtft(&self, omega: f64) -> Complex64 {
        dtft_unchecked(&self.samples, omega)
    }
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Signal::new(v)
    }
}

impl From<Signal> for Vec<f64> {
    fn from(s: Signal) -> Self {
        s.samples
    }
}

/// A `T x C x H x W` real tensor stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameClip {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl FrameClip {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return invalid(format!("clip dims must be positive, got {dims:?}"));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return invalid(format!(
                "clip dims {dims:?} need {n} values, got {}",
                data.len()
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return invalid("clip contains non-finite values");
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn t_len(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    /// Number of values in one frame (`C * H * W`).
    pub fn frame_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        let [_, cc, hh, ww] = self.dims;
        self.data[((t * cc + c) * hh + y) * ww + x]
    }

    /// Temporal series of one element of the frame, indexed by flat offset.
    pub fn pixel_series(&self, offset: usize) -> Vec<f64> {
        let n = self.frame_len();
        (0..self.t_len()).map(|t| self.data[t * n + offset]).collect()
    }
}

/// Whether spectrum values are complex gains or real powers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumKind {
    ComplexGain,
    Power,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumValues {
    ComplexGain(Vec<Complex64>),
    Power(Vec<f64>),
}

/// Values on a strictly increasing frequency grid inside `[0, pi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Vec<f64>,
    values: SpectrumValues,
}

impl Spectrum {
    pub fn power(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        if grid.len() != values.len() {
            return invalid("grid and values differ in length");
        }
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return invalid(format!("power value {} at index {i} is negative or not finite", values[i]));
        }
        Ok(Self {
            grid,
            values: SpectrumValues::Power(values),
        })
    }

    pub fn complex_gain(grid: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        validate_grid(&grid)?;
        if grid.len() != values.len() {
            return invalid("grid and values differ in length");
        }
        Ok(Self {
            grid,
            values: SpectrumValues::ComplexGain(values),
        })
    }

    pub fn kind(&self) -> SpectrumKind {
        match self.values {
            SpectrumValues::ComplexGain(_) => SpectrumKind::ComplexGain,
            SpectrumValues::Power(_) => SpectrumKind::Power,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &SpectrumValues {
        &self.values
    }

    /// Power values, or `None` for a complex-gain spectrum.
    pub fn powers(&self) -> Option<&[f64]> {
        match &self.values {
            SpectrumValues::Power(p) => Some(p),
            SpectrumValues::ComplexGain(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Trapezoidal integral of a power spectrum over its grid.
    pub fn integrate(&self) -> Option<f64> {
        let p = self.powers()?;
        Some(
            self.grid
                .windows(2)
                .zip(p.windows(2))
                .map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1]))
                .sum(),
        )
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    for (i, &w) in grid.iter().enumerate() {
        if !(0.0..=PI).contains(&w) {
            return invalid(format!("grid point {w} at index {i} is outside [0, pi]"));
        }
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("grid must be strictly increasing");
    }
    Ok(())
}

/// `n` evenly spaced points covering `[0, pi]` inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| if i == n - 1 { PI } else { PI * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(DEFAULT_GRID_POINTS)
}

/// `X(e^{jw}) = sum_t x[t] e^{-jwt}` evaluated directly.
pub fn dtft(x: &[f64], omega: f64) -> Result<Complex64> {
    if x.is_empty() {
        return invalid("dtft of an empty sequence");
    }
    if !omega.is_finite() {
        return invalid("dtft frequency must be finite");
    }
    Ok(dtft_unchecked(x, omega))
}

pub(crate) fn dtft_unchecked(x: &[f64], omega: f64) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (t, &v) in x.iter().enumerate() {
        let (s, c) = (omega * t as f64).sin_cos();
        re += v * c;
        im -= v * s;
    }
    Complex64::new(re, im)
}

/// Periodogram `|X(e^{jw})|^2 / T` on a grid inside `[0, pi]`.
pub fn empirical_psd(x: &[f64], grid: &[f64]) -> Result<Spectrum> {
    if x.len() < 2 {
        return invalid("periodogram needs at least two samples");
    }
    validate_grid(grid)?;
    let t = x.len() as f64;
    let values = grid
        .iter()
        .map(|&w| dtft_unchecked(x, w).norm_sqr() / t)
        .collect();
    Spectrum::power(grid.to_vec(), values)
}

/// One sinusoidal motion component `amplitude * sin(omega t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Background + motion tones + white noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalDecompositionSpec {
    pub dc_level: f64,
    #[serde(default)]
    pub tones: Vec<Tone>,
    #[serde(default)]
    pub noise_std: f64,
    pub len: usize,
}

impl SignalDecompositionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.len == 0 {
            return invalid("signal length must be positive");
        }
        if !self.dc_level.is_finite() {
            return invalid("dc level must be finite");
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return invalid("noise_std must be finite and >= 0");
        }
        for tone in &self.tones {
            if !(tone.omega > 0.0 && tone.omega <= PI) {
                return invalid(format!("tone frequency {} outside (0, pi]", tone.omega));
            }
            if !tone.amplitude.is_finite() || !tone.phase.is_finite() {
                return invalid("tone amplitude and phase must be finite");
            }
        }
        Ok(())
    }
}

/// Seeded standard-normal stream.
///
/// ChaCha8 seeded with the 64-bit seed through `SeedableRng::seed_from_u64`,
/// normals drawn with `rand_distr::StandardNormal` (ziggurat). Both are
/// pure integer/IEEE arithmetic, so a fixed seed gives the same stream on
/// every platform.
pub fn gaussian_stream(seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::repeat_with(move || StandardNormal.sample(&mut rng))
}

/// `x[t] = B + sum_k a_k sin(w_k t + phi_k) + n[t]`.
pub fn synth_signal(spec: &SignalDecompositionSpec, seed: u64) -> Result<Signal> {
    spec.validate()?;
    let mut samples: Vec<f64> = (0..spec.len)
        .map(|t| {
            let t = t as f64;
            spec.dc_level
                + spec
                    .tones
                    .iter()
                    .map(|k| k.amplitude * (k.omega * t + k.phase).sin())
                    .sum::<f64>()
        })
        .collect();
    if spec.noise_std > 0.0 {
        for (x, n) in samples.iter_mut().zip(gaussian_stream(seed)) {
            *x += spec.noise_std * n;
        }
    }
    Signal::new(samples)
}
