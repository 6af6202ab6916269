//! Output power spectra of the LIF stage and of the modulated pre-filter
//! cascade, plus the per-pixel spectrum report for frame clips.
//!
//! Input models mix discrete lines (DC, motion tones) with a flat noise
//! floor. Lines are matched by position within `line_tolerance`, so a grid
//! point only picks up a line's power when it coincides with it. The input
//! spectrum is extended evenly to negative frequencies and is zero outside
//! `[-pi, pi]`; sideband shifts that leave the band contribute nothing.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lif::{lif_gain_sq, subthreshold_response, LifParams};
use crate::pbo::{harmonic_coefficients, prefilter_gain, prefilter_values, Boundary, PboParams};
use crate::signal::{dtft_unchecked, validate_grid, FrameClip, Spectrum};

pub const DEFAULT_LINE_TOLERANCE: f64 = 1e-9;

/// A line component: all of `power` sits at `omega`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub omega: f64,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPsdModel {
    /// Power of the DC line.
    pub s_b: f64,
    #[serde(default)]
    pub tones: Vec<Line>,
    /// Flat noise floor.
    #[serde(default)]
    pub s_n: f64,
    #[serde(default = "default_line_tolerance")]
    pub line_tolerance: f64,
}

fn default_line_tolerance() -> f64 {
    DEFAULT_LINE_TOLERANCE
}

impl InputPsdModel {
    pub fn new(s_b: f64, tones: Vec<Line>, s_n: f64) -> Result<Self> {
        let m = Self {
            s_b,
            tones,
            s_n,
            line_tolerance: DEFAULT_LINE_TOLERANCE,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_b >= 0.0 && self.s_n >= 0.0) {
            return invalid("input powers must be >= 0");
        }
        for l in &self.tones {
            if !(l.power >= 0.0) {
                return invalid("tone power must be >= 0");
            }
            if !(l.omega > 0.0 && l.omega <= PI) {
                return invalid(format!("tone frequency {} outside (0, pi]", l.omega));
            }
        }
        if !(self.line_tolerance >= 0.0) {
            return invalid("line tolerance must be >= 0");
        }
        Ok(())
    }

    /// `S_in(omega)` for any real `omega`, even-extended, zero beyond pi.
    pub fn density(&self, omega: f64) -> f64 {
        let w = omega.abs();
        let tol = self.line_tolerance;
        if w > PI + tol {
            return 0.0;
        }
        let mut s = self.s_n;
        if w <= tol {
            s += self.s_b;
        }
        for l in &self.tones {
            if (w - l.omega).abs() <= tol {
                s += l.power;
            }
        }
        s
    }
}

/// `S_X(a, b) = E[X(e^{ja}) X*(e^{jb})]`.
pub trait CrossSpectrum {
    fn cross(&self, a: f64, b: f64) -> Complex64;
}

impl<F: Fn(f64, f64) -> Complex64> CrossSpectrum for F {
    fn cross(&self, a: f64, b: f64) -> Complex64 {
        self(a, b)
    }
}

/// Uncorrelated frequencies: `S_X(a, b) = 0` unless `a == b`.
pub struct DiagonalCrossSpectrum<'a>(pub &'a InputPsdModel);

impl CrossSpectrum for DiagonalCrossSpectrum<'_> {
    fn cross(&self, a: f64, b: f64) -> Complex64 {
        if (a - b).abs() <= self.0.line_tolerance {
            Complex64::new(self.0.density(a), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

/// Rank-one cross-spectrum of a fixed sequence, `X(a) X*(b) / T`, in the
/// periodogram normalization.
pub struct DeterministicCrossSpectrum {
    samples: Vec<f64>,
}

impl DeterministicCrossSpectrum {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("empty sequence");
        }
        Ok(Self { samples })
    }
}

impl CrossSpectrum for DeterministicCrossSpectrum {
    fn cross(&self, a: f64, b: f64) -> Complex64 {
        let xa = dtft_unchecked(&self.samples, a);
        let xb = dtft_unchecked(&self.samples, b);
        xa * xb.conj() / self.samples.len() as f64
    }
}

/// A diagonal model with coherent cross terms added at chosen pairs:
/// `S_X(a, b) = c * sqrt(S(a) S(b))` and its conjugate at `(b, a)`.
pub struct PerturbedCrossSpectrum<'a> {
    pub base: &'a InputPsdModel,
    pub terms: Vec<(f64, f64, Complex64)>,
}

impl CrossSpectrum for PerturbedCrossSpectrum<'_> {
    fn cross(&self, a: f64, b: f64) -> Complex64 {
        let tol = self.base.line_tolerance;
        let same = |x: f64, y: f64| (x - y).abs() <= tol;
        if same(a, b) {
            return Complex64::new(self.base.density(a), 0.0);
        }
        let scale = (self.base.density(a) * self.base.density(b)).sqrt();
        self.terms
            .iter()
            .map(|&(p, q, c)| {
                if same(a, p) && same(b, q) {
                    c * scale
                } else if same(a, q) && same(b, p) {
                    c.conj() * scale
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .sum()
    }
}

/// `S_out(w) = |H_LIF(e^{jw})|^2 S_in(w)`.
pub fn lif_output_psd(model: &InputPsdModel, alpha: f64, grid: &[f64]) -> Result<Spectrum> {
    model.validate()?;
    validate_grid(grid)?;
    let values = grid
        .iter()
        .map(|&w| lif_gain_sq(alpha, w) * model.density(w))
        .collect();
    Spectrum::power(grid.to_vec(), values)
}

/// Decorrelated output spectrum of the modulated cascade:
/// `|H|^2 (|1 - mu e^{-jw}|^2 S(w) + A^2/4 (S(w - w0) + S(w + w0)))`.
pub fn psd_out_approx(
    model: &InputPsdModel,
    p: &PboParams,
    alpha: f64,
    grid: &[f64],
) -> Result<Spectrum> {
    model.validate()?;
    p.validate()?;
    validate_grid(grid)?;
    let mu = p.mu();
    let w0 = p.omega();
    let side = 0.25 * p.amplitude * p.amplitude;
    let values = grid
        .iter()
        .map(|&w| {
            let baseline = prefilter_gain(mu, w) * model.density(w);
            let sidebands = side * (model.density(w - w0) + model.density(w + w0));
            lif_gain_sq(alpha, w) * (baseline + sidebands)
        })
        .collect();
    Spectrum::power(grid.to_vec(), values)
}

const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Full output spectrum with every cross-spectral term of the single-tone
/// schedule:
/// `|H|^2 sum_{m,n in {-1,0,1}} W_m W_n^* S_X(w - m w0, w - n w0)`.
pub fn psd_out_full(
    cross: &dyn CrossSpectrum,
    p: &PboParams,
    alpha: f64,
    grid: &[f64],
) -> Result<Spectrum> {
    p.validate()?;
    validate_grid(grid)?;
    let h = harmonic_coefficients(p);
    let orders = [-1i32, 0, 1];
    let mut values = Vec::with_capacity(grid.len());
    for &w in grid {
        let freqs: Vec<f64> = orders.iter().map(|&m| w - m as f64 * h.omega0).collect();
        let weights: Vec<Complex64> = orders.iter().map(|&m| h.w(m, w)).collect();
        let mut s = [[Complex64::new(0.0, 0.0); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = cross.cross(freqs[i], freqs[j]);
            }
        }
        for i in 0..3 {
            let scale = 1.0 + s[i][i].re.abs();
            if s[i][i].im.abs() > HERMITIAN_TOLERANCE * scale || s[i][i].re < -HERMITIAN_TOLERANCE * scale {
                return invalid(format!(
                    "auto-spectrum at {} is not real and non-negative",
                    freqs[i]
                ));
            }
            for j in (i + 1)..3 {
                let d = (s[i][j] - s[j][i].conj()).norm();
                if d > HERMITIAN_TOLERANCE * (1.0 + s[i][j].norm()) {
                    return invalid(format!(
                        "cross-spectrum is not Hermitian at ({}, {})",
                        freqs[i], freqs[j]
                    ));
                }
            }
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                acc += weights[i] * weights[j].conj() * s[i][j];
            }
        }
        let total = lif_gain_sq(alpha, w) * acc;
        if total.im.abs() > HERMITIAN_TOLERANCE * (1.0 + total.re.abs()) {
            return invalid(format!("imaginary residue {} at omega {w}", total.im));
        }
        // Rounding can push an exact zero slightly negative.
        if total.re < -1e-12 * (1.0 + acc.norm()) {
            return invalid(format!(
                "cross-spectrum is not positive semidefinite at omega {w}"
            ));
        }
        values.push(total.re.max(0.0));
    }
    Spectrum::power(grid.to_vec(), values)
}

/// Time-domain cascade: pre-filter with `lambdas`, then the recentred
/// subthreshold LIF response from rest.
pub fn cascade_response(
    x: &[f64],
    lambdas: &[f64],
    alpha: f64,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let y = prefilter_values(x, 1, lambdas, boundary)?;
    Ok(subthreshold_response(&y, alpha))
}

/// Precomputed `cos/sin(w t)` for fast periodograms of many equal-length
/// series on one grid.
pub struct DtftTable {
    len: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    n_grid: usize,
}

impl DtftTable {
    pub fn new(grid: &[f64], len: usize) -> Self {
        let mut cos = Vec::with_capacity(grid.len() * len);
        let mut sin = Vec::with_capacity(grid.len() * len);
        for &w in grid {
            for t in 0..len {
                let (s, c) = (w * t as f64).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Self {
            len,
            cos,
            sin,
            n_grid: grid.len(),
        }
    }

    /// Adds `|X(e^{jw})|^2 / T` of `x` into `acc`.
    pub fn accumulate_psd(&self, x: &[f64], acc: &mut [f64]) {
        debug_assert_eq!(x.len(), self.len);
        let t = self.len as f64;
        for (g, a) in acc.iter_mut().enumerate().take(self.n_grid) {
            let c = &self.cos[g * self.len..(g + 1) * self.len];
            let s = &self.sin[g * self.len..(g + 1) * self.len];
            let (mut re, mut im) = (0.0, 0.0);
            for ((&v, &cv), &sv) in x.iter().zip(c).zip(s) {
                re += v * cv;
                im -= v * sv;
            }
            *a += (re * re + im * im) / t;
        }
    }
}

/// The three processing chains compared in the report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chain {
    /// LIF only.
    LifOnly,
    /// First difference, then LIF.
    Difference,
    /// Modulated pre-filter, then LIF.
    Pbo,
}

impl Chain {
    pub const ALL: [Chain; 3] = [Chain::LifOnly, Chain::Difference, Chain::Pbo];

    pub fn file_name(&self) -> &'static str {
        match self {
            Chain::LifOnly => "panel_a_lif.csv",
            Chain::Difference => "panel_b_difference.csv",
            Chain::Pbo => "panel_c_pbo.csv",
        }
    }
}

/// Mean per-pixel temporal spectra of the LIF membrane potential for each
/// chain.
#[derive(Clone, Debug)]
pub struct Figure1Report {
    pub lif_only: Spectrum,
    pub difference: Spectrum,
    pub pbo: Spectrum,
    /// Trapezoidal total power of each panel, in `Chain::ALL` order. Plots
    /// divide by these to compare shapes.
    pub totals: [f64; 3],
    pub pixel_series: usize,
}

impl Figure1Report {
    pub fn panel(&self, chain: Chain) -> &Spectrum {
        match chain {
            Chain::LifOnly => &self.lif_only,
            Chain::Difference => &self.difference,
            Chain::Pbo => &self.pbo,
        }
    }

    /// Writes one CSV per panel plus `figure1.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path, lif: &LifParams, p: &PboParams) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut panels = Vec::new();
        for (i, chain) in Chain::ALL.iter().enumerate() {
            let path = dir.join(chain.file_name());
            let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
            crate::io::write_spectrum_csv(file, self.panel(*chain))?;
            panels.push(serde_json::json!({
                "chain": chain,
                "file": chain.file_name(),
                "normalization": self.totals[i],
            }));
        }
        let manifest = serde_json::json!({
            "panels": panels,
            "lif": lif,
            "pbo": p,
            "grid_points": self.lif_only.len(),
            "pixel_series": self.pixel_series,
            "aggregation": "arithmetic mean of per-pixel periodograms",
        });
        std::fs::write(dir.join("figure1.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// `min_k P(w_k) / P(0)` over the band frequencies, read from grid points
/// within `1e-9` of each frequency. The grid must start at 0.
pub fn band_balance(s: &Spectrum, band: &[f64]) -> Result<f64> {
    let p = match s.powers() {
        Some(p) => p,
        None => return invalid("band balance needs a power spectrum"),
    };
    if band.is_empty() {
        return invalid("empty band");
    }
    let grid = s.grid();
    if grid.first() != Some(&0.0) {
        return invalid("grid must start at 0");
    }
    if p[0] <= 0.0 {
        return invalid("no power at DC");
    }
    let mut worst = f64::INFINITY;
    for &w in band {
        let Some(i) = grid.iter().position(|&g| (g - w).abs() <= 1e-9) else {
            return invalid(format!("band frequency {w} is not on the grid"));
        };
        worst = worst.min(p[i] / p[0]);
    }
    Ok(worst)
}

/// Per-pixel periodograms of the subthreshold LIF potential under the three
/// chains, averaged over every pixel of every clip.
pub fn figure1_report(
    clips: &[FrameClip],
    lif: &LifParams,
    p: &PboParams,
    grid: &[f64],
) -> Result<Figure1Report> {
    if clips.is_empty() {
        return invalid("figure report needs at least one clip");
    }
    validate_grid(grid)?;
    lif.validate()?;
    p.validate()?;
    let t_len = clips[0].t_len();
    if t_len < 2 {
        return invalid("clips need at least two frames");
    }
    if clips.iter().any(|c| c.t_len() != t_len) {
        return invalid("all clips must share the same length");
    }
    let table = DtftTable::new(grid, t_len);
    let alpha = lif.alpha();
    let schedules = [vec![0.0; t_len], vec![1.0; t_len], p.lambdas(t_len)];

    let per_clip: Vec<Result<[Vec<f64>; 3]>> = clips
        .par_iter()
        .map(|clip| {
            let mut acc = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
            for (k, lambdas) in schedules.iter().enumerate() {
                let y = prefilter_values(clip.data(), clip.frame_len(), lambdas, Boundary::ReplicateFirst)?;
                for offset in 0..clip.frame_len() {
                    let series: Vec<f64> = (0..t_len)
                        .map(|t| y[t * clip.frame_len() + offset])
                        .collect();
                    table.accumulate_psd(&subthreshold_response(&series, alpha), &mut acc[k]);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut sums = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
    let mut count = 0usize;
    for (clip, acc) in clips.iter().zip(per_clip) {
        let acc = acc?;
        for k in 0..3 {
            for (s, a) in sums[k].iter_mut().zip(&acc[k]) {
                *s += a;
            }
        }
        count += clip.frame_len();
    }
    let n = count as f64;
    let [a, b, c] = sums.map(|v| v.into_iter().map(|x| x / n).collect::<Vec<_>>());
    let lif_only = Spectrum::power(grid.to_vec(), a)?;
    let difference = Spectrum::power(grid.to_vec(), b)?;
    let pbo = Spectrum::power(grid.to_vec(), c)?;
    let totals = [
        lif_only.integrate().unwrap_or(0.0),
        difference.integrate().unwrap_or(0.0),
        pbo.integrate().unwrap_or(0.0),
    ];
    Ok(Figure1Report {
        lif_only,
        difference,
        pbo,
        totals,
        pixel_series: count,
    })
}
