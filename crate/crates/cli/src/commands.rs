//! Subcommand bodies. Each one turns a resolved [`RunConfig`] into a set of
//! in-memory artifacts; nothing here touches the output directory.

use photonkit_core::bloch::{band_structure, find_bandgaps, slice_unit_cell_with_reference, write_band_scan_csv, write_gaps_csv};
use photonkit_core::calib::{reflectance_from_saturation, reflectance_from_spectra, CalibrationInputs, Measured};
use photonkit_core::crc::{filter_shots, read_records_csv, simulate_crc, write_records_csv};
use photonkit_core::fitkit::{fit_g2_pulsed, fit_lorentzian, fit_saturation, fit_voigt, single_photon, FitKind};
use photonkit_core::geometry::{build_taper, write_profile_csv, DEFAULT_SPACING_NM};
use photonkit_core::readout::{simulate_histogram, ssr_metrics, sweep_metrics, write_histogram_csv, HistogramMode};
use photonkit_core::scatter::{
    band_average, convergence_scan, DEFAULT_THRESHOLD, frequency_grid, operating_range, reflectance_spectrum_with, write_spectrum_csv,
};
use photonkit_core::taperopt::{optimize, write_trace_csv, OptimizationProblem};
use serde::Serialize;
use serde_json::json;

use crate::config::{require, Command, Grid, RunConfig};
use crate::CliError;

/// Default Bloch scan.
pub const BAND_SCAN: Grid = Grid { lo: 100.0, hi: 600.0, step: 0.5 };
/// Default number of periodic cells in a convergence scan.
const DEFAULT_N_MAX: usize = 40;
/// Default optimiser budget per free parameter.
const BUDGET_PER_PARAMETER: usize = 20;

#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    /// Compact JSON summary printed to stdout.
    pub summary: serde_json::Value,
}

impl Artifacts {
    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        buf.push(b'\n');
        self.files.push((name.to_string(), buf));
        Ok(())
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let command = cfg.command.ok_or_else(|| CliError::Invalid("config names no command".into()))?;
    let mut out = Artifacts::default();
    match command {
        Command::Profile => profile(cfg, &mut out)?,
        Command::Bands => bands(cfg, &mut out)?,
        Command::Reflect => reflect(cfg, &mut out)?,
        Command::Converge => converge(cfg, &mut out)?,
        Command::Optimize => run_optimize(cfg, &mut out)?,
        Command::Calibrate => calibrate(cfg, &mut out)?,
        Command::SatReflect => sat_reflect(cfg, &mut out)?,
        Command::Ssr => ssr(cfg, &mut out)?,
        Command::SsrSweep => ssr_sweep(cfg, &mut out)?,
        Command::CrcFilter => crc_filter(cfg, &mut out)?,
        Command::CrcSim => crc_sim(cfg, &mut out)?,
        Command::Fit => fit(cfg, &mut out)?,
    }
    Ok(out)
}

fn grid_of(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let g = cfg.grid.unwrap_or_default();
    check_grid(&g)?;
    Ok(frequency_grid(g.lo, g.hi, g.step))
}

fn check_grid(g: &Grid) -> Result<(), CliError> {
    if !(g.lo > 0.0 && g.hi >= g.lo && g.step > 0.0) {
        return Err(CliError::Invalid(format!("grid = [{}, {}] step {}: need 0 < lo <= hi and step > 0", g.lo, g.hi, g.step)));
    }
    Ok(())
}

fn profile(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let device = require(&cfg.device, "device", Command::Profile)?;
    let spacing = cfg.spacing.unwrap_or(DEFAULT_SPACING_NM);
    let profile = build_taper(device, spacing)?;
    let (z0, z1) = profile.z_range();
    out.csv("profile.csv", |b| write_profile_csv(&profile, b))?;
    out.summary = json!({ "length_nm": z1 - z0, "samples": profile.samples.len(), "spacing_nm": spacing });
    Ok(())
}

fn bands(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let cell = require(&cfg.cell, "cell", Command::Bands)?;
    let model = cfg.model.unwrap_or_default();
    let grid = cfg.band_scan.unwrap_or(BAND_SCAN);
    check_grid(&grid)?;
    let stack = slice_unit_cell_with_reference(cell, model.n_slices_per_cell, &model.index()?)?;
    let scan = band_structure(&stack, grid.lo, grid.hi, grid.step)?;
    let gaps = find_bandgaps(&stack, grid.lo, grid.hi, grid.step)?;
    out.csv("bands.csv", |b| write_band_scan_csv(&scan, b))?;
    out.csv("gaps.csv", |b| write_gaps_csv(&gaps, b))?;
    out.json("gaps.json", &gaps)?;
    out.summary = json!({ "gaps": gaps });
    Ok(())
}

fn reflect(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let device = require(&cfg.device, "device", Command::Reflect)?;
    let model = cfg.model.unwrap_or_default().device_model()?;
    let grid = grid_of(cfg)?;
    let loss = cfg.loss.unwrap_or(0.0);
    let spec = reflectance_spectrum_with(device, &grid, loss, &model)?;
    let threshold = cfg.operating_threshold.unwrap_or(DEFAULT_THRESHOLD);
    let range = operating_range(&spec, threshold)?;
    let (mean_r, std_r) = band_average(&spec, grid[0], grid[grid.len() - 1])?;
    let max_r = spec.r.iter().copied().fold(0.0, f64::max);
    out.csv("spectrum.csv", |b| write_spectrum_csv(&spec, b))?;
    let summary = json!({
        "mean_r": mean_r,
        "std_r": std_r,
        "max_r": max_r,
        "conservation_error": spec.conservation_error(),
        "operating_range": range,
    });
    out.json("summary.json", &summary)?;
    out.json("operating_range.json", &range)?;
    out.summary = summary;
    Ok(())
}

fn converge(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let device = require(&cfg.device, "device", Command::Converge)?;
    let model = cfg.model.unwrap_or_default().device_model()?;
    let grid = grid_of(cfg)?;
    let n_max = cfg.n_max.unwrap_or(DEFAULT_N_MAX);
    let scan = convergence_scan(device, n_max, &grid, cfg.loss.unwrap_or(0.0), &model)?;
    let steps: Vec<(usize, f64)> = scan
        .windows(2)
        .map(|w| (w[0].0, w[0].1.r.iter().zip(&w[1].1.r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)))
        .collect();
    out.csv("convergence.csv", |b| {
        use std::io::Write;
        writeln!(b, "n_periodic,nu_THz,R")?;
        for (n, s) in &scan {
            for (nu, r) in s.nu.iter().zip(&s.r) {
                writeln!(b, "{n},{nu},{r}")?;
            }
        }
        Ok(())
    })?;
    let summary = json!({
        "n_max": n_max,
        "max_step_change": steps.iter().map(|&(n, d)| json!({ "n_periodic": n, "max_abs_dr": d })).collect::<Vec<_>>(),
    });
    out.json("convergence.json", &summary)?;
    out.summary = json!({ "n_max": n_max, "final_step_change": steps.last().map(|s| s.1) });
    Ok(())
}

fn run_optimize(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let device = require(&cfg.device, "device", Command::Optimize)?;
    let settings = require(&cfg.optimize, "optimize", Command::Optimize)?;
    let problem = OptimizationProblem {
        base: device.clone(),
        free: settings.free.clone(),
        window: settings.window,
        settings: settings.eval.clone(),
    };
    let budget = if settings.budget == 0 { BUDGET_PER_PARAMETER * settings.free.len() } else { settings.budget };
    let result = optimize(&problem, budget, cfg.seed)?;
    out.json("optimize.json", &result)?;
    out.csv("trace.csv", |b| write_trace_csv(&result.trace, b))?;
    out.summary = json!({
        "best_objective": result.best_objective,
        "parameters": result.parameters,
        "evaluations": result.evaluations,
    });
    Ok(())
}

fn calibrate(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let c = require(&cfg.calibrate, "calibrate", Command::Calibrate)?;
    let inputs = CalibrationInputs::from_csv(&c.sig_r, &c.ref_r, &c.sig_t, &c.ref_t, c.eta_retro)?;
    let cal = reflectance_from_spectra(&inputs)?;
    out.csv("reflectance.csv", |b| write_spectrum_csv(&cal.spectrum, b))?;
    let summary = json!({ "points": cal.spectrum.len(), "out_of_range": cal.out_of_range, "warnings": cal.warnings });
    out.json("calibrate.json", &summary)?;
    out.summary = summary;
    Ok(())
}

fn sat_reflect(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let s = require(&cfg.saturation, "saturation", Command::SatReflect)?;
    let r = reflectance_from_saturation(Measured::new(s.is_ref, s.is_ref_err), Measured::new(s.is_wg, s.is_wg_err))?;
    out.json("sat_reflect.json", &r)?;
    out.summary = json!({ "r_v2": r.r_v2.value, "r_v2_err": r.r_v2.err, "collection_fraction": r.collection_fraction });
    Ok(())
}

fn ssr(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let model = require(&cfg.readout, "readout", Command::Ssr)?;
    let threshold = cfg.threshold.unwrap_or(0);
    let result = ssr_metrics(model, threshold)?;
    let metrics = result.metrics();
    out.json("metrics.json", &metrics)?;
    out.csv("pmf_bright.csv", |b| result.pmf_bright.write_csv(b))?;
    out.csv("pmf_dark.csv", |b| result.pmf_dark.write_csv(b))?;
    let shots = cfg.shots.unwrap_or(0);
    if shots > 0 {
        let hist = simulate_histogram(model, shots, cfg.seed, HistogramMode::BrightDouble)?;
        out.csv("histogram.csv", |b| write_histogram_csv(&hist, b))?;
    }
    out.summary = serde_json::to_value(metrics).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn ssr_sweep(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let base = require(&cfg.readout, "readout", Command::SsrSweep)?;
    let entries = require(&cfg.sweep, "sweep", Command::SsrSweep)?;
    let models: Vec<(String, photonkit_core::ReadoutModel)> = entries.iter().map(|e| (e.label.clone(), e.apply(base))).collect();
    let threshold = cfg.threshold.unwrap_or(0);
    let rows = sweep_metrics(&models, threshold)?;
    let records: Vec<serde_json::Value> = rows
        .iter()
        .map(|(label, row)| match row {
            Ok(r) => json!({ "label": label, "fidelity": r.fidelity, "success_rate": r.success_rate }),
            Err(e) => json!({ "label": label, "error": e.to_string() }),
        })
        .collect();
    out.csv("sweep.csv", |b| {
        use std::io::Write;
        writeln!(b, "label,fidelity,success_rate,error")?;
        for (label, row) in &rows {
            match row {
                Ok(r) => writeln!(b, "{label},{},{},", r.fidelity, r.success_rate)?,
                Err(e) => writeln!(b, "{label},,,\"{}\"", e.to_string().replace('"', "'"))?,
            }
        }
        Ok(())
    })?;
    out.json("sweep.json", &records)?;
    out.summary = json!({ "threshold": threshold, "rows": records });
    Ok(())
}

fn crc_filter(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let c = require(&cfg.crc, "crc", Command::CrcFilter)?;
    let path = c.records.as_ref().ok_or_else(|| CliError::Invalid("crc-filter needs crc.records (a CSV of shot records)".into()))?;
    let records = read_records_csv(path)?;
    let mut result = filter_shots(&records, c.threshold)?;
    result.fit(c.sequence.readout_window)?;
    let report = result.report();
    out.json("filter.json", &report)?;
    out.csv("kept.csv", |b| write_records_csv(&result.kept, b))?;
    out.summary = serde_json::to_value(report).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn crc_sim(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let c = require(&cfg.crc, "crc", Command::CrcSim)?;
    let telegraph = c.telegraph.ok_or_else(|| CliError::Invalid("crc-sim needs a [crc.telegraph] section".into()))?;
    let records = simulate_crc(&c.sequence, &telegraph, c.shots, cfg.seed)?;
    let mut result = filter_shots(&records, c.threshold)?;
    result.fit(c.sequence.readout_window)?;
    out.csv("records.csv", |b| write_records_csv(&records, b))?;
    let report = result.report();
    out.json("filter.json", &report)?;
    out.summary = serde_json::to_value(report).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn fit(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let f = require(&cfg.fit, "fit", Command::Fit)?;
    let data = f.kind.read(&f.data)?;
    let value = match f.kind {
        FitKind::Saturation => serde_json::to_value(fit_saturation(&data, f.with_background)?),
        FitKind::Voigt => serde_json::to_value(fit_voigt(&data)?),
        FitKind::Lorentzian => serde_json::to_value(fit_lorentzian(&data)?),
        FitKind::G2 => {
            let opts = f.g2.ok_or_else(|| CliError::Invalid("g2 fits need a [fit.g2] section".into()))?;
            let g = fit_g2_pulsed(&data, &opts)?;
            let verdict = single_photon(&g);
            let mut v = serde_json::to_value(&g).map_err(|e| CliError::Io(e.to_string()))?;
            v["single_photon"] = json!(verdict);
            Ok(v)
        }
    }
    .map_err(|e| CliError::Io(e.to_string()))?;
    out.json("fit.json", &value)?;
    out.summary = value;
    Ok(())
}
