//! Desk-scale modelling toolkit for waveguide-integrated colour-centre
//! readout.
//!
//! The crate covers three loosely coupled areas:
//!
//! * corrugated photonic-crystal reflectors: parametric geometry
//!   ([`geometry`]), an effective-index Bloch solver ([`bloch`]), finite
//!   reflector spectra by the transfer-matrix method ([`scatter`]) and a
//!   derivative-free taper optimiser ([`taperopt`]);
//! * measurement arithmetic: reflectance calibration ([`calib`]),
//!   charge-resonance-check post-selection ([`crc`]) and spectroscopy curve
//!   fitting ([`fitkit`]);
//! * photon-counting statistics of optical single-shot spin readout
//!   ([`readout`]).
//!
//! Units follow the lab conventions used throughout: lengths in nm,
//! optical frequencies in THz, times in µs, count rates in counts/s,
//! powers in nW and microwave frequencies in MHz.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod calib;
pub mod crc;
mod error;
pub mod fitkit;
pub mod geometry;
pub mod io;
pub mod optics;
pub mod presets;
pub mod quad;
pub mod readout;
pub mod scatter;
pub mod stats;
pub mod taperopt;

pub use error::{Error, ErrorKind, Result};

pub use bloch::{Bandgap, BandStructure, EffectiveIndexModel, IndexMap, LayerStack};
pub use calib::{CalibrationInputs, Measured, SaturationReflectance};
pub use crc::{FilterResult, PulseSequence, ShotRecord, Telegraph};
pub use fitkit::{G2Fit, LorentzFit, SaturationFit, VoigtFit};
pub use geometry::{CorrugationProfile, TaperCell, TaperSpec, UnitCellSpec};
pub use readout::{Convention, DarkWindow, PhotonPmf, ReadoutModel, SsrResult};
pub use scatter::{OperatingRange, Spectrum};
pub use taperopt::{OptimizationProblem, OptimizationResult};

/// Speed of light in nm·THz.
pub const SPEED_OF_LIGHT_NM_THZ: f64 = 299_792.458;
