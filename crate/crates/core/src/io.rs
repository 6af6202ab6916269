//! File formats: `PBT1` binary tensors and spectrum CSV.
//!
//! `PBT1` layout, all little-endian:
//!
//! ```text
//! b"PBT1" | rank: u32 | dims: rank x u32 | payload: prod(dims) x f32 (row-major)
//! ```
//!
//! Values are narrowed to `f32` on write, so a round trip is bit-exact only
//! for clips whose values are already representable in `f32`.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{FrameClip, Spectrum, SpectrumValues};

pub const PBT1_MAGIC: &[u8; 4] = b"PBT1";

/// A raw tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let n: usize = t.dims.iter().product();
    if n != t.data.len() {
        return Err(Error::InvalidInput(format!(
            "tensor dims {:?} need {n} values, got {}",
            t.dims,
            t.data.len()
        )));
    }
    let mut out = Vec::with_capacity(8 + 4 * t.dims.len() + 4 * n);
    out.extend_from_slice(PBT1_MAGIC);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidInput(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 {
        return format_err("file too short for a PBT1 header");
    }
    if &bytes[..4] != PBT1_MAGIC {
        return format_err(format!("bad magic {:?}", &bytes[..4]));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let rank = word(4) as usize;
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return format_err(format!("truncated header for rank {rank}"));
    }
    let dims: Vec<usize> = (0..rank).map(|i| word(8 + 4 * i) as usize).collect();
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("element count overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() != 4 * n {
        return format_err(format!(
            "payload holds {} bytes, dims {dims:?} need {}",
            payload.len(),
            4 * n
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor { dims, data })
}

impl From<&FrameClip> for Tensor {
    fn from(clip: &FrameClip) -> Self {
        Tensor {
            dims: clip.dims().to_vec(),
            data: clip.data().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl TryFrom<Tensor> for FrameClip {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        let dims: [usize; 4] = t.dims.as_slice().try_into().map_err(|_| {
            Error::Format(format!("expected a rank-4 tensor, got rank {}", t.dims.len()))
        })?;
        FrameClip::new(dims, t.data.into_iter().map(f64::from).collect())
            .map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_clip(path: impl AsRef<Path>, clip: &FrameClip) -> Result<()> {
    fs::write(path, encode_tensor(&Tensor::from(clip))?)?;
    Ok(())
}

pub fn read_clip(path: impl AsRef<Path>) -> Result<FrameClip> {
    let bytes = fs::read(path)?;
    FrameClip::try_from(decode_tensor(&bytes)?)
}

/// Writes `omega,power` or `omega,re,im` rows with 16 significant digits.
pub fn write_spectrum_csv<W: Write>(mut w: W, s: &Spectrum) -> Result<()> {
    match s.values() {
        SpectrumValues::Power(p) => {
            writeln!(w, "omega,power")?;
            for (om, v) in s.grid().iter().zip(p) {
                writeln!(w, "{om:.15e},{v:.15e}")?;
            }
        }
        SpectrumValues::ComplexGain(g) => {
            writeln!(w, "omega,re,im")?;
            for (om, v) in s.grid().iter().zip(g) {
                writeln!(w, "{om:.15e},{:.15e},{:.15e}", v.re, v.im)?;
            }
        }
    }
    Ok(())
}

pub fn read_spectrum_csv<R: BufRead>(r: R) -> Result<Spectrum> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty spectrum file".into()))??;
    let complex = match header.trim() {
        "omega,power" => false,
        "omega,re,im" => true,
        other => return format_err(format!("unknown spectrum header {other:?}")),
    };
    let mut grid = Vec::new();
    let mut power = Vec::new();
    let mut gain = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", i + 2)))?;
        match (complex, fields.as_slice()) {
            (false, [om, p]) => {
                grid.push(*om);
                power.push(*p);
            }
            (true, [om, re, im]) => {
                grid.push(*om);
                gain.push(Complex64::new(*re, *im));
            }
            _ => return format_err(format!("row {} has {} fields", i + 2, fields.len())),
        }
    }
    let s = if complex {
        Spectrum::complex_gain(grid, gain)
    } else {
        Spectrum::power(grid, power)
    };
    s.map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::uniform_grid;

    #[test]
    fn header_layout_is_bit_exact() {
        let t = Tensor {
            dims: vec![1, 1, 1, 2],
            data: vec![1.0, -2.5],
        };
        let bytes = encode_tensor(&t).unwrap();
        let mut expected = b"PBT1".to_vec();
        expected.extend_from_slice(&[4, 0, 0, 0]);
        for _ in 0..3 {
            expected.extend_from_slice(&[1, 0, 0, 0]);
        }
        expected.extend_from_slice(&[2, 0, 0, 0]);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(decode_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let t = Tensor {
            dims: vec![1, 1, 1, 1],
            data: vec![0.0],
        };
        let mut bytes = encode_tensor(&t).unwrap();
        assert!(matches!(
            decode_tensor(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_tensor(b"PB"), Err(Error::Format(_))));
    }

    #[test]
    fn rank_mismatch_is_format_error() {
        let t = Tensor {
            dims: vec![2, 2],
            data: vec![0.0; 4],
        };
        let bytes = encode_tensor(&t).unwrap();
        let decoded = decode_tensor(&bytes).unwrap();
        assert!(matches!(FrameClip::try_from(decoded), Err(Error::Format(_))));
    }

    #[test]
    fn spectrum_csv_roundtrip() {
        let grid = uniform_grid(7);
        let p: Vec<f64> = grid.iter().map(|w| 1.0 / (1.0 + w)).collect();
        let s = Spectrum::power(grid.clone(), p).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("omega,power\n"));
        assert_eq!(text.lines().count(), 8);
        let back = read_spectrum_csv(buf.as_slice()).unwrap();
        for (a, b) in back.powers().unwrap().iter().zip(s.powers().unwrap()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }

        let g = Spectrum::complex_gain(grid, vec![Complex64::new(1.0, -0.5); 7]).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &g).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("omega,re,im\n"));
        let back = read_spectrum_csv(buf.as_slice()).unwrap();
        assert_eq!(back.kind(), crate::signal::SpectrumKind::ComplexGain);
    }
}
