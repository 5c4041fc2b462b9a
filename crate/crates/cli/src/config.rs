//! Run configuration documents.
//!
//! A run is described by one flat TOML document. Every subcommand resolves
//! its flags and the optional `--config` document into a [`RunConfig`],
//! which is echoed into the run manifest so the run can be replayed.

use std::path::{Path, PathBuf};

use photonkit_core::fitkit::{FitKind, G2Options};
use photonkit_core::scatter::{DeviceModel, DEFAULT_LEAD_LENGTH_NM, DEFAULT_SLICES_PER_CELL};
use photonkit_core::taperopt::{EvalSettings, FreeParameter};
use photonkit_core::{EffectiveIndexModel, PulseSequence, ReadoutModel, TaperSpec, Telegraph, UnitCellSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const SI_TABLE1: &str = include_str!("../presets/si_table1.toml");
const NOMINAL_REFLECTOR: &str = include_str!("../presets/nominal_reflector.toml");

/// Names accepted by `--config` in place of a file path.
pub const PRESETS: [(&str, &str); 2] = [("si_table1", SI_TABLE1), ("nominal_reflector", NOMINAL_REFLECTOR)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Profile,
    Bands,
    Reflect,
    Converge,
    Optimize,
    Calibrate,
    SatReflect,
    Ssr,
    SsrSweep,
    CrcFilter,
    CrcSim,
    Fit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::Bands => "bands",
            Command::Reflect => "reflect",
            Command::Converge => "converge",
            Command::Optimize => "optimize",
            Command::Calibrate => "calibrate",
            Command::SatReflect => "sat-reflect",
            Command::Ssr => "ssr",
            Command::SsrSweep => "ssr-sweep",
            Command::CrcFilter => "crc-filter",
            Command::CrcSim => "crc-sim",
            Command::Fit => "fit",
        }
    }
}

/// Probe grid in THz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { lo: 260.0, hi: 380.0, step: 1.0 }
    }
}

/// Effective-index reduction of the corrugated beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub n_material: f64,
    /// Half-width in nm at which the fill fraction is 1.
    pub reference_half_width: f64,
    pub n_slices_per_cell: usize,
    /// Uniform lead length on either side of the device, nm.
    pub lead_length: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let index = EffectiveIndexModel::default();
        ModelSettings {
            n_material: photonkit_core::bloch::DEFAULT_MATERIAL_INDEX,
            reference_half_width: index.reference_half_width,
            n_slices_per_cell: DEFAULT_SLICES_PER_CELL,
            lead_length: DEFAULT_LEAD_LENGTH_NM,
        }
    }
}

impl ModelSettings {
    pub fn index(&self) -> photonkit_core::Result<EffectiveIndexModel> {
        EffectiveIndexModel::new(self.n_material, self.reference_half_width)
    }

    pub fn device_model(&self) -> photonkit_core::Result<DeviceModel> {
        Ok(DeviceModel { index: self.index()?, n_slices_per_cell: self.n_slices_per_cell, lead_length: self.lead_length })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSettings {
    pub free: Vec<FreeParameter>,
    /// Objective window in THz.
    pub window: (f64, f64),
    pub budget: usize,
    #[serde(default)]
    pub eval: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSettings {
    pub sig_r: PathBuf,
    pub ref_r: PathBuf,
    pub sig_t: PathBuf,
    pub ref_t: PathBuf,
    /// Retro-reflector efficiency applied to the reference arm.
    pub eta_retro: f64,
}

/// Saturation intensities in counts/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSettings {
    pub is_ref: f64,
    pub is_ref_err: f64,
    pub is_wg: f64,
    pub is_wg_err: f64,
}

/// One sweep point; unset fields fall back to the `[readout]` model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_dprime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_dprime: Option<f64>,
}

impl SweepEntry {
    pub fn apply(&self, base: &ReadoutModel) -> ReadoutModel {
        ReadoutModel {
            lambda_b: self.lambda_b.unwrap_or(base.lambda_b),
            lambda_d: self.lambda_d.unwrap_or(base.lambda_d),
            a_prime: self.a_prime.unwrap_or(base.a_prime),
            a_dprime: self.a_dprime.unwrap_or(base.a_dprime),
            gamma_prime: self.gamma_prime.unwrap_or(base.gamma_prime),
            gamma_dprime: self.gamma_dprime.unwrap_or(base.gamma_dprime),
            ..*base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrcSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    pub threshold: u64,
    #[serde(default)]
    pub sequence: PulseSequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telegraph: Option<Telegraph>,
    #[serde(default)]
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub kind: FitKind,
    pub data: PathBuf,
    /// Saturation fits only: add a linear background term.
    #[serde(default)]
    pub with_background: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<G2Options>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<TaperSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<UnitCellSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    /// Frequency scan of the Bloch solver, THz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_scan: Option<Grid>,
    /// Imaginary index added to the corrugated layers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    /// Profile sample spacing in nm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    /// Reflectance level defining the operating range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutModel>,
    /// Bright/dark decision threshold in counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    /// Monte Carlo shots for the readout histogram; 0 skips it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crc: Option<CrcSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSettings>,
}

impl RunConfig {
    pub fn empty() -> Self {
        RunConfig { schema_version: SCHEMA_VERSION, ..RunConfig::default() }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Invalid(format!("{origin}: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Invalid(format!(
                "{origin}: schema_version = {}: this build reads version {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Load a preset by name or a TOML file. Relative paths inside a file
    /// are taken relative to that file.
    pub fn load(source: &str) -> Result<Self, CliError> {
        if let Some((_, text)) = PRESETS.iter().find(|(name, _)| *name == source) {
            return RunConfig::parse(text, source);
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            CliError::Invalid(format!("config = {source}: {e} (presets: {})", names.join(", ")))
        })?;
        let mut cfg = RunConfig::parse(&text, source)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase_paths(base);
        Ok(cfg)
    }

    fn rebase_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = &mut self.calibrate {
            for p in [&mut c.sig_r, &mut c.ref_r, &mut c.sig_t, &mut c.ref_t] {
                fix(p);
            }
        }
        if let Some(p) = self.crc.as_mut().and_then(|c| c.records.as_mut()) {
            fix(p);
        }
        if let Some(f) = &mut self.fit {
            fix(&mut f.data);
        }
    }

    /// Input files this run reads, in a fixed order.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        match self.command {
            Some(Command::Calibrate) => {
                if let Some(c) = &self.calibrate {
                    out.extend([c.sig_r.clone(), c.ref_r.clone(), c.sig_t.clone(), c.ref_t.clone()]);
                }
            }
            Some(Command::CrcFilter) => out.extend(self.crc.as_ref().and_then(|c| c.records.clone())),
            Some(Command::Fit) => out.extend(self.fit.as_ref().map(|f| f.data.clone())),
            _ => {}
        }
        out
    }

    /// Check that every input file exists and replace each path by its
    /// canonical form.
    pub fn validate_paths(&mut self) -> Result<(), CliError> {
        let canon = |p: &mut PathBuf, what: &str| -> Result<(), CliError> {
            *p = std::fs::canonicalize(&*p).map_err(|e| CliError::Invalid(format!("{what} = {}: {e}", p.display())))?;
            Ok(())
        };
        match self.command {
            Some(Command::Calibrate) => {
                if let Some(c) = &mut self.calibrate {
                    canon(&mut c.sig_r, "sig_r")?;
                    canon(&mut c.ref_r, "ref_r")?;
                    canon(&mut c.sig_t, "sig_t")?;
                    canon(&mut c.ref_t, "ref_t")?;
                }
            }
            Some(Command::CrcFilter) => {
                if let Some(p) = self.crc.as_mut().and_then(|c| c.records.as_mut()) {
                    canon(p, "records")?;
                }
            }
            Some(Command::Fit) => {
                if let Some(f) = &mut self.fit {
                    canon(&mut f.data, "data")?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialise")
    }
}

/// A section the command needs but the config does not provide.
pub fn require<'a, T>(section: &'a Option<T>, name: &str, command: Command) -> Result<&'a T, CliError> {
    section.as_ref().ok_or_else(|| {
        CliError::Invalid(format!("{} needs a [{name}] section (or the matching flags) in its config", command.name()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use photonkit_core::presets;

    #[test]
    fn presets_match_library_values() {
        let t = RunConfig::load("si_table1").unwrap();
        assert_eq!(t.readout, Some(presets::nominal_readout()));
        let r = RunConfig::load("nominal_reflector").unwrap();
        assert_eq!(r.device, Some(presets::nominal_taper()));
        assert_eq!(r.cell, Some(presets::nominal_periodic_cell()));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("schema_version = 1\nsed = 3\n", "t").unwrap_err();
        assert!(err.to_string().contains("sed"));
        let err = RunConfig::parse("schema_version = 1\n[grid]\nlo = 1\nhi = 2\nstep = 1\nwidth = 3\n", "t").unwrap_err();
        assert!(err.to_string().contains("width"));
    }

    #[test]
    fn schema_version_checked() {
        assert!(RunConfig::parse("schema_version = 7\n", "t").is_err());
        assert!(RunConfig::parse("seed = 1\n", "t").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::load("nominal_reflector").unwrap();
        c.command = Some(Command::Reflect);
        c.loss = Some(1e-3);
        assert_eq!(RunConfig::parse(&c.to_toml(), "echo").unwrap(), c);
    }
}
