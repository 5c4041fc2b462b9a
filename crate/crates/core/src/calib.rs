//! Reflectance calibration from measured spectra and from saturation
//! intensities.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::read_pairs;
use crate::scatter::Spectrum;
use crate::{Error, Result};

/// Reflectance above this value at any frequency attaches a warning.
pub const OVERSHOOT_WARNING: f64 = 1.05;

/// A value with a one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

impl Measured {
    pub fn new(value: f64, err: f64) -> Self {
        Measured { value, err }
    }

    pub fn exact(value: f64) -> Self {
        Measured { value, err: 0.0 }
    }
}

/// Four intensity spectra on a shared frequency grid plus the reference
/// mirror reflectance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInputs {
    pub nu: Vec<f64>,
    pub i_sig_r: Vec<f64>,
    pub i_ref_r: Vec<f64>,
    pub i_sig_t: Vec<f64>,
    pub i_ref_t: Vec<f64>,
    pub eta_retro: f64,
}

impl CalibrationInputs {
    pub fn validate(&self) -> Result<()> {
        let n = self.nu.len();
        if n == 0 {
            return Err(Error::invalid("calibration inputs", "empty frequency grid"));
        }
        for (name, s) in [("I_sig_R", &self.i_sig_r), ("I_ref_R", &self.i_ref_r), ("I_sig_T", &self.i_sig_t), ("I_ref_T", &self.i_ref_t)] {
            if s.len() != n {
                return Err(Error::invalid("calibration inputs", format!("{name} has {} points, grid has {n}", s.len())));
            }
            if let Some(i) = s.iter().position(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("calibration inputs", format!("{name} is negative or NaN at {} THz", self.nu[i])));
            }
        }
        if !(self.eta_retro > 0.0 && self.eta_retro <= 1.0) {
            return Err(Error::domain("eta_retro", self.eta_retro, "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Load four `nu_THz,intensity` files that share one grid.
    pub fn from_csv(sig_r: &Path, ref_r: &Path, sig_t: &Path, ref_t: &Path, eta_retro: f64) -> Result<Self> {
        let load = |p: &Path| read_pairs(p, ["nu_THz", "intensity"]);
        let sr = load(sig_r)?;
        let nu: Vec<f64> = sr.iter().map(|r| r.0).collect();
        let mut cols = Vec::with_capacity(3);
        for p in [ref_r, sig_t, ref_t] {
            let rows = load(p)?;
            let grid_matches = rows.len() == nu.len() && rows.iter().zip(&nu).all(|(r, n)| (r.0 - n).abs() <= 1e-9 * n.abs().max(1.0));
            if !grid_matches {
                return Err(Error::Parse { path: p.to_path_buf(), reason: format!("frequency grid differs from {}", sig_r.display()) });
            }
            cols.push(rows.into_iter().map(|r| r.1).collect::<Vec<_>>());
        }
        let i_ref_t = cols.pop().unwrap();
        let i_sig_t = cols.pop().unwrap();
        let i_ref_r = cols.pop().unwrap();
        Ok(CalibrationInputs { nu, i_sig_r: sr.into_iter().map(|r| r.1).collect(), i_ref_r, i_sig_t, i_ref_t, eta_retro })
    }
}

/// Calibrated reflectance with the points that need attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedReflectance {
    /// `R` in the reflectance channel; `T = 0` and `S = 1 − R`.
    pub spectrum: Spectrum,
    /// Frequencies where `R` falls outside `[0, 1]`. Values are kept as computed.
    pub out_of_range: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn reflectance_from_spectra(inputs: &CalibrationInputs) -> Result<CalibratedReflectance> {
    inputs.validate()?;
    let mut r = Vec::with_capacity(inputs.nu.len());
    let mut out_of_range = Vec::new();
    let mut warnings = Vec::new();
    for (i, &nu) in inputs.nu.iter().enumerate() {
        if inputs.i_ref_r[i] == 0.0 {
            return Err(Error::domain("I_ref_R", 0.0, format!("division by zero at {nu} THz")));
        }
        if inputs.i_sig_t[i] == 0.0 {
            return Err(Error::domain("I_sig_T", 0.0, format!("division by zero at {nu} THz")));
        }
        let v = (inputs.i_sig_r[i] / inputs.i_ref_r[i]) * inputs.eta_retro * (inputs.i_ref_t[i] / inputs.i_sig_t[i]);
        if !(0.0..=1.0).contains(&v) {
            out_of_range.push(nu);
        }
        if v > OVERSHOOT_WARNING {
            warnings.push(format!("R = {v:.4} at {nu} THz exceeds {OVERSHOOT_WARNING}"));
        }
        r.push(v);
    }
    let s = r.iter().map(|v| 1.0 - v).collect();
    let t = vec![0.0; r.len()];
    Ok(CalibratedReflectance { spectrum: Spectrum { nu: inputs.nu.clone(), r, t, s }, out_of_range, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationReflectance {
    pub i_s_ref: Measured,
    pub i_s_wg: Measured,
    pub r_v2: Measured,
    pub collection_fraction: f64,
}

/// Reflector reflectance from the saturation intensities of an emitter in
/// the reflector-terminated guide (`i_s_ref`) and in an open guide
/// (`i_s_wg`), with linear error propagation.
pub fn reflectance_from_saturation(i_s_ref: Measured, i_s_wg: Measured) -> Result<SaturationReflectance> {
    if !(i_s_wg.value > 0.0) {
        return Err(Error::domain("I_s_wg", i_s_wg.value, "must be positive"));
    }
    if !(i_s_ref.err >= 0.0) || !(i_s_wg.err >= 0.0) {
        return Err(Error::invalid("saturation intensities", "uncertainties must be non-negative"));
    }
    let w = i_s_wg.value;
    let r = 2.0 * i_s_ref.value / w - 1.0;
    let err = 2.0 * (i_s_ref.err / w).hypot(i_s_ref.value * i_s_wg.err / (w * w));
    Ok(SaturationReflectance { i_s_ref, i_s_wg, r_v2: Measured::new(r, err), collection_fraction: (1.0 + r) / 2.0 })
}
