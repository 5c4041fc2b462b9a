//! `photonkit`: reflector design, calibration and readout statistics from
//! the command line.
//!
//! Every run writes its artifacts and a `manifest.json` into the output
//! directory. Exit status: 0 on success, 1 for invalid input, 2 when a
//! numerical routine fails.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use photonkit_core::fitkit::{FitKind, G2Options};
use photonkit_core::{Convention, DarkWindow, ErrorKind};

use config::{Command, CrcSettings, FitSettings, Grid, RunConfig, SaturationSettings};
use manifest::{digest_inputs, Manifest, MANIFEST_NAME};

pub const OUT_DIR_ENV: &str = "PHOTONKIT_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "photonkit-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl From<photonkit_core::Error> for CliError {
    fn from(e: photonkit_core::Error) -> Self {
        match e.kind() {
            ErrorKind::Invalid => CliError::Invalid(e.to_string()),
            ErrorKind::Numerical => CliError::Numerical(e.to_string()),
            ErrorKind::Io => CliError::Io(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "photonkit", version, about = "Corrugated reflector modelling, reflectance calibration and single-shot readout statistics")]
#[command(after_help = "Units: frequencies THz, lengths nm, times µs, count rates cps, powers nW, microwave detunings MHz.\n\
Exit status: 0 success, 1 invalid input, 2 numerical failure.")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Config document: a TOML file or a bundled preset (si_table1, nominal_reflector).
    #[arg(long)]
    config: Option<String>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
    /// RNG seed, recorded in the manifest.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
struct GridArgs {
    /// Lower grid edge, THz.
    #[arg(long)]
    lo: Option<f64>,
    /// Upper grid edge, THz.
    #[arg(long)]
    hi: Option<f64>,
    /// Grid step, THz.
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct DeviceArgs {
    /// Imaginary index added to the corrugated layers (dimensionless).
    #[arg(long)]
    loss: Option<f64>,
    /// Slices per unit cell in the layer decomposition.
    #[arg(long)]
    slices: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Sample the corrugation half-width profile of a taper (nm) to profile.csv.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Sample spacing along the beam, nm.
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Band scan and bandgaps (THz) of the periodic unit cell.
    Bands {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Slices per unit cell in the layer decomposition.
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Reflection, transmission and scattering spectra (THz) of a finite device.
    Reflect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        device: DeviceArgs,
        /// Reflectance level defining the operating range.
        #[arg(long)]
        operating_threshold: Option<f64>,
    },
    /// Reflectance versus the number of periodic cells behind the taper.
    Converge {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        device: DeviceArgs,
        /// Largest number of periodic cells (at least 12).
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Maximise the mean reflectance over a THz window by varying taper dimensions (nm).
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Objective evaluations; 0 picks 20 per free parameter.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Calibrated reflectance from four "nu_THz,intensity" spectra.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sig_r: Option<PathBuf>,
        #[arg(long)]
        ref_r: Option<PathBuf>,
        #[arg(long)]
        sig_t: Option<PathBuf>,
        #[arg(long)]
        ref_t: Option<PathBuf>,
        /// Retro-reflector efficiency (0, 1].
        #[arg(long)]
        eta_retro: Option<f64>,
    },
    /// Reflectance from saturation intensities (cps) with and without the reflector.
    SatReflect {
        #[command(flatten)]
        common: Common,
        /// Saturation intensity of the reference emitter, cps.
        #[arg(long)]
        is_ref: Option<f64>,
        #[arg(long)]
        is_ref_err: Option<f64>,
        /// Saturation intensity of the emitter in front of the reflector, cps.
        #[arg(long)]
        is_wg: Option<f64>,
        #[arg(long)]
        is_wg_err: Option<f64>,
    },
    /// Single-shot readout fidelity and photon-number distributions (rates in cps, times in µs).
    Ssr {
        #[command(flatten)]
        common: Common,
        /// Counts strictly above this are assigned "bright".
        #[arg(long)]
        threshold: Option<u64>,
        /// kernel-normalized or decay-density.
        #[arg(long, value_parser = parse_convention)]
        convention: Option<Convention>,
        /// Dark-state window: single (T) or double (2T).
        #[arg(long, value_parser = parse_dark_window)]
        dark_window: Option<DarkWindow>,
        /// Monte Carlo shots for histogram.csv; 0 skips the simulation.
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Fidelity and success rate over a list of readout models.
    SsrSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: Option<u64>,
    },
    /// Charge-resonance-check post-selection of "crc_counts,readout_counts" records.
    CrcFilter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: Option<PathBuf>,
        /// Shots with check counts strictly above this are kept.
        #[arg(long)]
        threshold: Option<u64>,
        /// Readout window, µs.
        #[arg(long)]
        readout_window: Option<f64>,
    },
    /// Simulate charge-resonance-check records for a blinking emitter (rates in cps).
    CrcSim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long)]
        threshold: Option<u64>,
    },
    /// Fit saturation (nW, cps), ODMR lines (MHz) or pulsed g2 histograms (ns).
    Fit {
        #[command(flatten)]
        common: Common,
        /// saturation, voigt, lorentzian or g2.
        #[arg(long, value_parser = parse_fit_kind)]
        kind: Option<FitKind>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Saturation fits: add a linear background.
        #[arg(long)]
        with_background: bool,
        /// g2 fits: repetition period, ns.
        #[arg(long)]
        pulse_period: Option<f64>,
        /// g2 fits: side peaks on each side of zero delay.
        #[arg(long)]
        side_peaks: Option<usize>,
        /// g2 fits: accidental coincidences per bin.
        #[arg(long)]
        dark_level: Option<f64>,
    },
    /// Replay a run from a manifest.json or execute a config naming its command.
    Run {
        /// manifest.json of an earlier run, or a TOML config with `command`.
        source: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
        out: PathBuf,
    },
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_convention(s: &str) -> Result<Convention, String> {
    parse_enum(s)
}

fn parse_dark_window(s: &str) -> Result<DarkWindow, String> {
    parse_enum(s)
}

fn parse_fit_kind(s: &str) -> Result<FitKind, String> {
    parse_enum(s)
}

fn base_config(common: &Common, command: Command) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(src) => RunConfig::load(src)?,
        None => RunConfig::empty(),
    };
    if let Some(c) = cfg.command {
        if c != command {
            return Err(CliError::Invalid(format!("command = {}: config is for {}, not {}", c.name(), c.name(), command.name())));
        }
    }
    cfg.command = Some(command);
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn merge_grid(current: Option<Grid>, g: &GridArgs, fallback: Grid) -> Option<Grid> {
    if g.lo.is_none() && g.hi.is_none() && g.step.is_none() {
        return current;
    }
    let base = current.unwrap_or(fallback);
    Some(Grid { lo: g.lo.unwrap_or(base.lo), hi: g.hi.unwrap_or(base.hi), step: g.step.unwrap_or(base.step) })
}

fn apply_device(cfg: &mut RunConfig, d: &DeviceArgs) {
    if d.loss.is_some() {
        cfg.loss = d.loss;
    }
    if let Some(n) = d.slices {
        cfg.model = Some(config::ModelSettings { n_slices_per_cell: n, ..cfg.model.unwrap_or_default() });
    }
}

fn missing(command: Command, what: &str) -> CliError {
    CliError::Invalid(format!("{} needs {what}", command.name()))
}

/// Merge flags into the config document.
fn resolve(sub: Sub) -> Result<(RunConfig, PathBuf), CliError> {
    let (cfg, out) = match sub {
        Sub::Profile { common, spacing } => {
            let mut cfg = base_config(&common, Command::Profile)?;
            cfg.spacing = spacing.or(cfg.spacing);
            (cfg, common.out)
        }
        Sub::Bands { common, grid, slices } => {
            let mut cfg = base_config(&common, Command::Bands)?;
            cfg.band_scan = merge_grid(cfg.band_scan, &grid, commands::BAND_SCAN);
            apply_device(&mut cfg, &DeviceArgs { loss: None, slices });
            (cfg, common.out)
        }
        Sub::Reflect { common, grid, device, operating_threshold } => {
            let mut cfg = base_config(&common, Command::Reflect)?;
            cfg.grid = merge_grid(cfg.grid, &grid, Grid::default());
            apply_device(&mut cfg, &device);
            cfg.operating_threshold = operating_threshold.or(cfg.operating_threshold);
            (cfg, common.out)
        }
        Sub::Converge { common, grid, device, n_max } => {
            let mut cfg = base_config(&common, Command::Converge)?;
            cfg.grid = merge_grid(cfg.grid, &grid, Grid::default());
            apply_device(&mut cfg, &device);
            cfg.n_max = n_max.or(cfg.n_max);
            (cfg, common.out)
        }
        Sub::Optimize { common, budget } => {
            let mut cfg = base_config(&common, Command::Optimize)?;
            if let (Some(b), Some(o)) = (budget, cfg.optimize.as_mut()) {
                o.budget = b;
            }
            (cfg, common.out)
        }
        Sub::Calibrate { common, sig_r, ref_r, sig_t, ref_t, eta_retro } => {
            let mut cfg = base_config(&common, Command::Calibrate)?;
            let c = match cfg.calibrate.take() {
                Some(mut c) => {
                    c.sig_r = sig_r.unwrap_or(c.sig_r);
                    c.ref_r = ref_r.unwrap_or(c.ref_r);
                    c.sig_t = sig_t.unwrap_or(c.sig_t);
                    c.ref_t = ref_t.unwrap_or(c.ref_t);
                    c.eta_retro = eta_retro.unwrap_or(c.eta_retro);
                    c
                }
                None => config::CalibrateSettings {
                    sig_r: sig_r.ok_or_else(|| missing(Command::Calibrate, "--sig-r"))?,
                    ref_r: ref_r.ok_or_else(|| missing(Command::Calibrate, "--ref-r"))?,
                    sig_t: sig_t.ok_or_else(|| missing(Command::Calibrate, "--sig-t"))?,
                    ref_t: ref_t.ok_or_else(|| missing(Command::Calibrate, "--ref-t"))?,
                    eta_retro: eta_retro.unwrap_or(1.0),
                },
            };
            cfg.calibrate = Some(c);
            (cfg, common.out)
        }
        Sub::SatReflect { common, is_ref, is_ref_err, is_wg, is_wg_err } => {
            let mut cfg = base_config(&common, Command::SatReflect)?;
            let base = cfg.saturation;
            let pick = |flag: Option<f64>, cur: Option<f64>, name: &str| flag.or(cur).ok_or_else(|| missing(Command::SatReflect, name));
            cfg.saturation = Some(SaturationSettings {
                is_ref: pick(is_ref, base.map(|s| s.is_ref), "--is-ref")?,
                is_ref_err: pick(is_ref_err, base.map(|s| s.is_ref_err), "--is-ref-err")?,
                is_wg: pick(is_wg, base.map(|s| s.is_wg), "--is-wg")?,
                is_wg_err: pick(is_wg_err, base.map(|s| s.is_wg_err), "--is-wg-err")?,
            });
            (cfg, common.out)
        }
        Sub::Ssr { common, threshold, convention, dark_window, shots } => {
            let mut cfg = base_config(&common, Command::Ssr)?;
            cfg.threshold = threshold.or(cfg.threshold);
            cfg.shots = shots.or(cfg.shots);
            if let Some(m) = cfg.readout.as_mut() {
                m.convention = convention.unwrap_or(m.convention);
                m.dark_window = dark_window.unwrap_or(m.dark_window);
            }
            (cfg, common.out)
        }
        Sub::SsrSweep { common, threshold } => {
            let mut cfg = base_config(&common, Command::SsrSweep)?;
            cfg.threshold = threshold.or(cfg.threshold);
            (cfg, common.out)
        }
        Sub::CrcFilter { common, records, threshold, readout_window } => {
            let mut cfg = base_config(&common, Command::CrcFilter)?;
            let mut c = cfg.crc.take().unwrap_or(CrcSettings {
                records: None,
                threshold: photonkit_core::crc::DEFAULT_THRESHOLD,
                sequence: Default::default(),
                telegraph: None,
                shots: 0,
            });
            c.records = records.or(c.records);
            c.threshold = threshold.unwrap_or(c.threshold);
            if let Some(w) = readout_window {
                c.sequence.readout_window = w;
            }
            cfg.crc = Some(c);
            (cfg, common.out)
        }
        Sub::CrcSim { common, shots, threshold } => {
            let mut cfg = base_config(&common, Command::CrcSim)?;
            if let Some(c) = cfg.crc.as_mut() {
                c.shots = shots.unwrap_or(c.shots);
                c.threshold = threshold.unwrap_or(c.threshold);
            }
            (cfg, common.out)
        }
        Sub::Fit { common, kind, data, with_background, pulse_period, side_peaks, dark_level } => {
            let mut cfg = base_config(&common, Command::Fit)?;
            let mut f = match cfg.fit.take() {
                Some(f) => f,
                None => FitSettings {
                    kind: kind.ok_or_else(|| missing(Command::Fit, "--kind"))?,
                    data: data.clone().ok_or_else(|| missing(Command::Fit, "--data"))?,
                    with_background: false,
                    g2: None,
                },
            };
            f.kind = kind.unwrap_or(f.kind);
            f.data = data.unwrap_or(f.data);
            f.with_background |= with_background;
            if pulse_period.is_some() || side_peaks.is_some() || dark_level.is_some() {
                let g = f.g2.unwrap_or(G2Options { pulse_period: 0.0, n_side_peaks: 2, dark_level: 0.0, center: 0.0 });
                f.g2 = Some(G2Options {
                    pulse_period: pulse_period.unwrap_or(g.pulse_period),
                    n_side_peaks: side_peaks.unwrap_or(g.n_side_peaks),
                    dark_level: dark_level.unwrap_or(g.dark_level),
                    ..g
                });
            }
            cfg.fit = Some(f);
            (cfg, common.out)
        }
        Sub::Run { source, out } => {
            let text = std::fs::read_to_string(&source).map_err(|e| CliError::Invalid(format!("source = {}: {e}", source.display())))?;
            let cfg = if text.trim_start().starts_with('{') {
                let m = Manifest::read(&source)?;
                m.check_inputs()?;
                m.config
            } else {
                let cfg = RunConfig::load(&source.display().to_string())?;
                if cfg.command.is_none() {
                    return Err(CliError::Invalid(format!("source = {}: config names no command", source.display())));
                }
                cfg
            };
            (cfg, out)
        }
    };
    Ok((cfg, out))
}

fn run(sub: Sub) -> Result<(), CliError> {
    let (mut cfg, out) = resolve(sub)?;
    cfg.validate_paths()?;
    let inputs = digest_inputs(&cfg.input_paths())?;
    let artifacts = commands::execute(&cfg)?;
    let manifest = Manifest::new(&cfg, inputs, &artifacts);
    manifest::write_run(&out, &artifacts, &manifest)?;
    let summary = serde_json::json!({
        "command": manifest.command,
        "out": out.display().to_string(),
        "manifest": out.join(MANIFEST_NAME).display().to_string(),
        "result": artifacts.summary,
    });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Invalid("x".into()).exit_code(), 1);
        assert_eq!(CliError::Io("x".into()).exit_code(), 1);
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 2);
        let lm = photonkit_core::Error::Numerical { routine: "levenberg-marquardt", reason: "no convergence".into() };
        assert_eq!(CliError::from(lm).exit_code(), 2);
        let domain = photonkit_core::readout::ssr_metrics(
            &photonkit_core::ReadoutModel { lambda_b: -1.0, ..photonkit_core::presets::nominal_readout() },
            0,
        )
        .unwrap_err();
        let e = CliError::from(domain);
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("lambda_b"));
    }
}
