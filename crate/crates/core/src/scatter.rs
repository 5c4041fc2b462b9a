//! Reflection, transmission and loss spectra of finite reflectors.
//!
//! The device is a waveguide lead, the taper cells, `n_periodic` copies of
//! the periodic cell and a second lead, all reduced to effective-index
//! layers. Scattering out of the beam is represented by one global
//! imaginary index added to the corrugated layers; whatever is neither
//! reflected nor transmitted is booked as scatter `S = 1 − R − T`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{slice_interval, EffectiveIndexModel, Layer};
use crate::geometry::TaperSpec;
use crate::optics::{stack_matrix, Mat2};
use crate::stats::{mean, population_std};
use crate::{Error, Result};

/// Lead length in nm on each side of the reflector.
pub const DEFAULT_LEAD_LENGTH_NM: f64 = 5000.0;
pub const DEFAULT_SLICES_PER_CELL: usize = 64;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Energy bookkeeping tolerance.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// The default probe grid: 260–380 THz at 1 THz.
pub fn default_grid() -> Vec<f64> {
    frequency_grid(260.0, 380.0, 1.0)
}

/// Inclusive grid `lo, lo + step, …, hi` (the last point snapped to `hi`
/// when it falls within 1e-9 of it).
pub fn frequency_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub nu: Vec<f64>,
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// Largest `|R + T + S − 1|` over the grid.
    pub fn conservation_error(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.r[i] + self.t[i] + self.s[i] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingRange {
    pub lo: f64,
    pub hi: f64,
    #[serde(rename = "mean_R")]
    pub mean_r: f64,
    #[serde(rename = "std_R")]
    pub std_r: f64,
    pub threshold: f64,
}

/// How a device is reduced to layers.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    pub index: EffectiveIndexModel,
    pub n_slices_per_cell: usize,
    pub lead_length: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        DeviceModel {
            index: EffectiveIndexModel::default(),
            n_slices_per_cell: DEFAULT_SLICES_PER_CELL,
            lead_length: DEFAULT_LEAD_LENGTH_NM,
        }
    }
}

/// Layer decomposition of a device: taper slices and one periodic cell
/// (repeated `n_periodic` times), between leads of index `n_lead`.
#[derive(Debug, Clone)]
pub struct DeviceStack {
    pub n_lead: f64,
    pub lead_length: f64,
    pub taper: Vec<Layer>,
    pub periodic_cell: Vec<Layer>,
    pub n_periodic: usize,
}

impl DeviceStack {
    pub fn build(spec: &TaperSpec, model: &DeviceModel) -> Result<Self> {
        if model.n_slices_per_cell < 2 {
            return Err(Error::domain("n_slices_per_cell", model.n_slices_per_cell, "need at least 2 slices"));
        }
        if !(model.lead_length >= 0.0) {
            return Err(Error::domain("lead_length", model.lead_length, "must be non-negative"));
        }
        // One periodic cell is enough to describe the repeated section.
        let geom = TaperSpec { n_periodic: spec.n_periodic.min(1), ..spec.clone() }.geometry()?;
        let b = geom.boundaries();
        let mut taper = Vec::with_capacity(spec.cells.len() * model.n_slices_per_cell);
        for i in 0..spec.cells.len() {
            taper.extend(slice_interval(&geom, b[i], b[i + 1], model.n_slices_per_cell, &model.index));
        }
        let periodic_cell = if spec.n_periodic > 0 {
            let i = spec.cells.len();
            slice_interval(&geom, b[i], b[i + 1], model.n_slices_per_cell, &model.index)
        } else {
            Vec::new()
        };
        Ok(DeviceStack {
            n_lead: model.index.uniform_index(spec.waveguide_half_width),
            lead_length: model.lead_length,
            taper,
            periodic_cell,
            n_periodic: spec.n_periodic,
        })
    }

    fn response(&self, nu: f64, loss: f64) -> (f64, f64) {
        let lossy = |l: &Layer| (Complex64::new(l.n_eff, loss), l.thickness);
        let lead = Mat2::layer(Complex64::new(self.n_lead, 0.0), self.lead_length, nu);
        let taper = stack_matrix(self.taper.iter().map(lossy), nu);
        let cell = stack_matrix(self.periodic_cell.iter().map(lossy), nu).pow(self.n_periodic);
        let m = lead.mul(&taper).mul(&cell).mul(&lead);
        m.reflect_transmit(self.n_lead, self.n_lead)
    }

    pub fn spectrum(&self, nu_grid: &[f64], loss: f64) -> Result<Spectrum> {
        check_grid(nu_grid)?;
        if !(loss >= 0.0) {
            return Err(Error::domain("loss", loss, "imaginary index must be non-negative"));
        }
        let rt: Vec<(f64, f64)> = nu_grid.par_iter().map(|&nu| self.response(nu, loss)).collect();
        assemble(nu_grid, rt)
    }
}

fn check_grid(nu_grid: &[f64]) -> Result<()> {
    if nu_grid.is_empty() {
        return Err(Error::domain("nu_grid", "[]", "frequency grid is empty"));
    }
    if let Some(w) = nu_grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::domain("nu_grid", format!("{} -> {}", w[0], w[1]), "grid must be strictly increasing"));
    }
    if !(nu_grid[0] > 0.0) {
        return Err(Error::domain("nu_grid", nu_grid[0], "frequencies must be positive"));
    }
    Ok(())
}

fn assemble(nu_grid: &[f64], rt: Vec<(f64, f64)>) -> Result<Spectrum> {
    let mut spec = Spectrum {
        nu: nu_grid.to_vec(),
        r: Vec::with_capacity(rt.len()),
        t: Vec::with_capacity(rt.len()),
        s: Vec::with_capacity(rt.len()),
    };
    for (i, (r, t)) in rt.into_iter().enumerate() {
        let s = 1.0 - r - t;
        if s < -CONSERVATION_TOLERANCE || !s.is_finite() {
            return Err(Error::numerical(
                "reflectance_spectrum",
                format!("R + T = {} exceeds 1 at nu = {} THz", r + t, nu_grid[i]),
            ));
        }
        spec.r.push(r);
        spec.t.push(t);
        spec.s.push(s);
    }
    Ok(spec)
}

/// Spectrum of an arbitrary stack of `(complex index, thickness)` layers
/// between two ambient media.
pub fn stack_spectrum(n_in: f64, layers: &[(Complex64, f64)], n_out: f64, nu_grid: &[f64]) -> Result<Spectrum> {
    check_grid(nu_grid)?;
    if !(n_in >= 1.0 && n_out >= 1.0) {
        return Err(Error::domain("n_in", n_in, format!("ambient indices must be >= 1 (n_out = {n_out})")));
    }
    let rt: Vec<(f64, f64)> = nu_grid
        .par_iter()
        .map(|&nu| stack_matrix(layers.iter().copied(), nu).reflect_transmit(n_in, n_out))
        .collect();
    assemble(nu_grid, rt)
}

/// Spectrum of a reflector device with the default effective-index model.
pub fn reflectance_spectrum(device: &TaperSpec, nu_grid: &[f64], loss: f64, n_slices_per_cell: usize) -> Result<Spectrum> {
    let model = DeviceModel { n_slices_per_cell, ..DeviceModel::default() };
    reflectance_spectrum_with(device, nu_grid, loss, &model)
}

pub fn reflectance_spectrum_with(device: &TaperSpec, nu_grid: &[f64], loss: f64, model: &DeviceModel) -> Result<Spectrum> {
    DeviceStack::build(device, model)?.spectrum(nu_grid, loss)
}

/// Widest contiguous run of grid points with `R > threshold`; ties go to
/// the lower-frequency run.
pub fn operating_range(spec: &Spectrum, threshold: f64) -> Result<Option<OperatingRange>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::domain("threshold", threshold, "must lie in (0, 1)"));
    }
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < spec.len() {
        if spec.r[i] > threshold {
            let start = i;
            while i + 1 < spec.len() && spec.r[i + 1] > threshold {
                i += 1;
            }
            let width = spec.nu[i] - spec.nu[start];
            let better = match best {
                None => true,
                Some((s, e)) => width > spec.nu[e] - spec.nu[s],
            };
            if better {
                best = Some((start, i));
            }
        }
        i += 1;
    }
    Ok(best.map(|(s, e)| {
        let r = &spec.r[s..=e];
        OperatingRange { lo: spec.nu[s], hi: spec.nu[e], mean_r: mean(r), std_r: population_std(r), threshold }
    }))
}

/// Mean and population standard deviation of `R` over grid points in
/// `[lo, hi]`.
pub fn band_average(spec: &Spectrum, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let r: Vec<f64> = spec
        .nu
        .iter()
        .zip(&spec.r)
        .filter(|(nu, _)| **nu >= lo && **nu <= hi)
        .map(|(_, r)| *r)
        .collect();
    if r.is_empty() {
        return Err(Error::domain("lo", lo, format!("band [{lo}, {hi}] THz contains no grid point")));
    }
    Ok((mean(&r), population_std(&r)))
}

/// Spectra for 1..=n_max periodic cells behind a fixed taper.
pub fn convergence_scan(
    template: &TaperSpec,
    n_max: usize,
    nu_grid: &[f64],
    loss: f64,
    model: &DeviceModel,
) -> Result<Vec<(usize, Spectrum)>> {
    if n_max < 12 {
        return Err(Error::domain("n_max", n_max, "convergence scans need at least 12 periodic cells"));
    }
    let mut base = template.clone();
    base.n_periodic = 1;
    let stack = DeviceStack::build(&base, model)?;
    (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let s = DeviceStack { n_periodic: n, ..stack.clone() };
            Ok((n, s.spectrum(nu_grid, loss)?))
        })
        .collect()
}

pub fn write_spectrum_csv<W: Write>(spec: &Spectrum, out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "nu_THz,R,T,S")?;
    for i in 0..spec.len() {
        writeln!(w, "{},{},{},{}", spec.nu[i], spec.r[i], spec.t[i], spec.s[i])?;
    }
    w.flush()
}
