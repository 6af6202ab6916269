//! Theoretical energy accounting for spiking networks.
//!
//! The first layer sees real-valued frames and is costed as multiply-
//! accumulates; later layers see spikes and cost one accumulate per synaptic
//! operation, `SOP = R * T * FLOP`. Totals are
//! `E = e_mac * FLOP_1 + e_ac * sum_{l >= 2} SOP_l`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const E_MAC_PJ: f64 = 4.6;
pub const E_AC_PJ: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub e_mac: f64,
    pub e_ac: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            e_mac: E_MAC_PJ,
            e_ac: E_AC_PJ,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_mac > 0.0 && self.e_ac > 0.0 && self.e_mac.is_finite() && self.e_ac.is_finite()) {
            return invalid("per-op energies must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub name: String,
    /// Dense-equivalent operations per time step.
    pub flops: u64,
    #[serde(alias = "rate")]
    pub spike_rate: f64,
    #[serde(default)]
    pub is_first: bool,
}

impl LayerProfile {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.spike_rate) {
            return invalid(format!(
                "layer {:?}: spike rate {} outside [0, 1]",
                self.name, self.spike_rate
            ));
        }
        Ok(())
    }
}

pub fn sop_count(profile: &LayerProfile, t_steps: u64) -> Result<f64> {
    profile.validate()?;
    if t_steps == 0 {
        return invalid("need at least one time step");
    }
    Ok(profile.spike_rate * t_steps as f64 * profile.flops as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergy {
    pub name: String,
    pub flops: u64,
    pub rate: f64,
    /// `None` for the MAC-costed first layer.
    pub sops: Option<f64>,
    pub energy_pj: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PboOverhead {
    pub mults: u64,
    pub adds: u64,
    /// `mults / first-layer FLOP`.
    pub ratio_to_first_layer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub layers: Vec<LayerEnergy>,
    pub mac_pj: f64,
    pub ac_pj: f64,
    pub total_pj: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pbo_overhead: Option<PboOverhead>,
}

pub fn energy_total(profiles: &[LayerProfile], t_steps: u64, model: &EnergyModel) -> Result<EnergyReport> {
    model.validate()?;
    let firsts = profiles.iter().filter(|p| p.is_first).count();
    if firsts != 1 {
        return invalid(format!("expected exactly one first layer, found {firsts}"));
    }
    if !profiles[0].is_first {
        return invalid("the first layer must lead the profile list");
    }
    let mut layers = Vec::with_capacity(profiles.len());
    let mut mac_pj = 0.0;
    let mut ac_pj = 0.0;
    for p in profiles {
        p.validate()?;
        let (sops, energy_pj) = if p.is_first {
            let e = model.e_mac * p.flops as f64;
            mac_pj += e;
            (None, e)
        } else {
            let s = sop_count(p, t_steps)?;
            let e = model.e_ac * s;
            ac_pj += e;
            (Some(s), e)
        };
        layers.push(LayerEnergy {
            name: p.name.clone(),
            flops: p.flops,
            rate: p.spike_rate,
            sops,
            energy_pj,
        });
    }
    Ok(EnergyReport {
        layers,
        mac_pj,
        ac_pj,
        total_pj: mac_pj + ac_pj,
        pbo_overhead: None,
    })
}

/// One multiply and one subtract per input element: `(THWC, THWC)`.
pub fn pbo_overhead(t: u64, h: u64, w: u64, c: u64) -> Result<(u64, u64)> {
    if t == 0 || h == 0 || w == 0 || c == 0 {
        return invalid("dimensions must be positive");
    }
    let n = t * h * w * c;
    Ok((n, n))
}

impl EnergyReport {
    /// Attaches the pre-filter overhead, kept apart from the SOP totals.
    pub fn with_pbo_overhead(mut self, t: u64, h: u64, w: u64, c: u64) -> Result<Self> {
        let (mults, adds) = pbo_overhead(t, h, w, c)?;
        let first = self.layers.first().map(|l| l.flops).unwrap_or(0);
        self.pbo_overhead = Some(PboOverhead {
            mults,
            adds,
            ratio_to_first_layer: if first > 0 {
                mults as f64 / first as f64
            } else {
                f64::INFINITY
            },
        });
        Ok(self)
    }
}

/// Per-layer mean firing ratio from a `layer,t0,t1,...` spike CSV.
pub fn rates_from_spike_csv(text: &str) -> Result<Vec<(String, f64)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.starts_with("layer") => {}
        _ => return Err(crate::Error::Format("spike CSV must start with a layer header".into())),
    }
    let mut out = Vec::new();
    for line in lines {
        let mut fields = line.split(',');
        let name = fields.next().unwrap_or_default().trim().to_string();
        let vals: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| crate::Error::Format(format!("layer {name:?}: {e}")))?;
        if vals.is_empty() {
            return Err(crate::Error::Format(format!("layer {name:?} has no steps")));
        }
        if vals.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid(format!("layer {name:?} has a firing ratio outside [0, 1]"));
        }
        out.push((name, vals.iter().sum::<f64>() / vals.len() as f64));
    }
    Ok(out)
}
