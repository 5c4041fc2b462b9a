//! Least-squares fitting of saturation curves, spectral lines and pulsed
//! `g²` histograms.
//!
//! Every fitter starts from a deterministic guess derived from the data, so
//! repeated fits of the same input are identical.

pub mod faddeeva;
mod g2;
pub mod lm;
mod peaks;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::Measured;
use crate::io::read_pairs;
use crate::Result;

pub use faddeeva::{faddeeva, voigt, voigt_fwhm};
pub use g2::{fit_g2_pulsed, G2Options, PeakAmplitudes, MAX_CORNER_PARAMS, OVERLAP_FACTOR};
pub use peaks::{fit_lorentzian, fit_saturation, fit_voigt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some parameter is not determined by the data; its variance is
    /// reported as infinite.
    pub ill_conditioned: bool,
}

impl From<&lm::LmOutput> for FitDiagnostics {
    fn from(o: &lm::LmOutput) -> Self {
        FitDiagnostics {
            residual_norm: o.residual_norm,
            initial_residual_norm: o.initial_residual_norm,
            iterations: o.iterations,
            converged: true,
            ill_conditioned: o.ill_conditioned,
        }
    }
}

/// `I(P) = I_s·P/(P + P_s) [+ c·P]`, intensities in counts/s and powers in nW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub i_s: Measured,
    pub p_s: Measured,
    pub background_slope: Option<Measured>,
    pub covariance: Vec<Vec<f64>>,
    pub diagnostics: FitDiagnostics,
}

/// Voigt line, widths and centre in MHz. `amplitude` is the line area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoigtFit {
    pub center: Measured,
    pub gaussian_sigma: Measured,
    pub lorentzian_gamma: Measured,
    pub amplitude: Measured,
    pub offset: Measured,
    pub peak_height: f64,
    pub fwhm: f64,
    pub diagnostics: FitDiagnostics,
}

/// Lorentzian line; `amplitude` is the peak height above `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzFit {
    pub center: Measured,
    pub fwhm: Measured,
    pub half_width: Measured,
    pub amplitude: Measured,
    pub offset: Measured,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    /// Shared decay constants in ns.
    pub tau1: Measured,
    pub tau2: Measured,
    pub peaks: Vec<PeakAmplitudes>,
    pub dark_count_level: f64,
    /// Dark-subtracted peak areas in peak order.
    pub areas: Vec<f64>,
    pub g2_0: f64,
    /// Maximum-error estimate over the ±1σ parameter corners.
    pub g2_0_err: f64,
    pub warnings: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub diagnostics: FitDiagnostics,
}

/// `Some(true)` when the whole error interval of `g²(0)` lies below 1/2,
/// `Some(false)` when it lies above, `None` when it straddles 1/2.
pub fn single_photon(fit: &G2Fit) -> Option<bool> {
    if fit.g2_0 + fit.g2_0_err < 0.5 {
        Some(true)
    } else if fit.g2_0 - fit.g2_0_err > 0.5 {
        Some(false)
    } else {
        None
    }
}

/// Which data file layout a fit expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Saturation,
    Voigt,
    Lorentzian,
    G2,
}

impl FitKind {
    pub fn header(&self) -> [&'static str; 2] {
        match self {
            FitKind::Saturation => ["P_nW", "I_cps"],
            FitKind::Voigt | FitKind::Lorentzian => ["f_MHz", "contrast"],
            FitKind::G2 => ["tau_ns", "coincidences"],
        }
    }

    pub fn read(&self, path: &Path) -> Result<Vec<(f64, f64)>> {
        read_pairs(path, self.header())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_with(g2: f64, err: f64) -> G2Fit {
        G2Fit {
            tau1: Measured::exact(1.0),
            tau2: Measured::exact(2.0),
            peaks: Vec::new(),
            dark_count_level: 0.0,
            areas: Vec::new(),
            g2_0: g2,
            g2_0_err: err,
            warnings: Vec::new(),
            covariance: Vec::new(),
            diagnostics: FitDiagnostics { residual_norm: 0.0, initial_residual_norm: 0.0, iterations: 0, converged: true, ill_conditioned: false },
        }
    }

    #[test]
    fn single_photon_classification() {
        assert_eq!(single_photon(&fit_with(0.41, 0.0077)), Some(true));
        assert_eq!(single_photon(&fit_with(0.8, 0.1)), Some(false));
        assert_eq!(single_photon(&fit_with(0.48, 0.05)), None);
    }
}
