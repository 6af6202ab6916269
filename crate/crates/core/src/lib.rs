//! Spiking-network building blocks for frame-based video: a leaky
//! integrate-and-fire neuron, a sinusoidally modulated first-order
//! pre-filter placed in front of it, spectral predictions for the cascade,
//! a temporal-consistency regularizer, a small trainer and an energy model.

pub mod consistency;
pub mod energy;
pub mod error;
pub mod io;
pub mod lif;
pub mod pbo;
pub mod signal;
pub mod spectral;
pub mod tape;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use lif::{LifParams, LifState, LifTrace};
pub use pbo::{Boundary, Cutoff, HarmonicCoefficients, PboParams, TiltClass};
pub use signal::{FrameClip, Signal, Spectrum, SpectrumKind};
pub use spectral::{CrossSpectrum, InputPsdModel, Line};
pub use verify::{Check, Suite, SuiteReport};
