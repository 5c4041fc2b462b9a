//! Pulsed second-order correlation histograms.
//!
//! Every peak is a two-sided bi-exponential with decay constants shared by
//! all peaks. `g²(0)` is the dark-subtracted area of the zero-delay peak over
//! the mean area of the side peaks, each integrated over one period centred
//! on the peak.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmSettings, Residuals};
use super::peaks::rows;
use super::{FitDiagnostics, G2Fit};
use crate::calib::Measured;
use crate::quad::integrate;
use crate::{Error, Result};

/// Peaks closer than this many decay constants trigger an overlap warning.
pub const OVERLAP_FACTOR: f64 = 6.0;
/// Number of most sensitive parameters varied in the maximum-error estimate.
pub const MAX_CORNER_PARAMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Options {
    /// Repetition period in ns.
    pub pulse_period: f64,
    /// Side peaks fitted on each side of zero delay.
    pub n_side_peaks: usize,
    /// Accidental coincidences per bin.
    pub dark_level: f64,
    /// Delay of the zero-delay peak in ns.
    #[serde(default)]
    pub center: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakAmplitudes {
    /// Peak index, 0 at zero delay.
    pub index: i64,
    pub delay: f64,
    pub fast: Measured,
    pub slow: Measured,
}

struct Histogram<'a> {
    tau: &'a [f64],
    counts: &'a [f64],
    opts: &'a G2Options,
}

impl Histogram<'_> {
    fn n_peaks(&self) -> usize {
        2 * self.opts.n_side_peaks + 1
    }

    fn delay(&self, j: usize) -> f64 {
        self.opts.center + (j as f64 - self.opts.n_side_peaks as f64) * self.opts.pulse_period
    }
}

// Parameters: tau1, tau2, then (fast, slow) amplitude pairs per peak from the
// most negative delay upward.
impl Residuals for Histogram<'_> {
    fn n_params(&self) -> usize {
        2 + 2 * self.n_peaks()
    }

    fn n_residuals(&self) -> usize {
        self.tau.len()
    }

    fn residuals(&self, q: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut y = self.opts.dark_level;
            for j in 0..self.n_peaks() {
                let d = (self.tau[i] - self.delay(j)).abs();
                y += q[2 + 2 * j] * (-d / q[0]).exp() + q[3 + 2 * j] * (-d / q[1]).exp();
            }
            *o = y - self.counts[i];
        }
    }

    fn jacobian(&self, q: &[f64], jac: &mut DMatrix<f64>) {
        for i in 0..self.tau.len() {
            jac[(i, 0)] = 0.0;
            jac[(i, 1)] = 0.0;
            for j in 0..self.n_peaks() {
                let d = (self.tau[i] - self.delay(j)).abs();
                let e1 = (-d / q[0]).exp();
                let e2 = (-d / q[1]).exp();
                jac[(i, 0)] += q[2 + 2 * j] * e1 * d / (q[0] * q[0]);
                jac[(i, 1)] += q[3 + 2 * j] * e2 * d / (q[1] * q[1]);
                jac[(i, 2 + 2 * j)] = e1;
                jac[(i, 3 + 2 * j)] = e2;
            }
        }
    }

    fn lower_bounds(&self) -> Vec<f64> {
        let mut lb = vec![0.0; self.n_params()];
        lb[0] = 1e-9 * self.opts.pulse_period;
        lb[1] = 1e-9 * self.opts.pulse_period;
        lb
    }
}

/// Area of one peak over `±period/2`, integrated numerically.
fn peak_area(a1: f64, a2: f64, tau1: f64, tau2: f64, period: f64) -> Result<f64> {
    let scale = a1.abs() * tau1 + a2.abs() * tau2;
    let half = integrate(|t| a1 * (-t / tau1).exp() + a2 * (-t / tau2).exp(), 0.0, period / 2.0, 1e-14 * scale + f64::MIN_POSITIVE)?;
    Ok(2.0 * half)
}

fn areas(q: &[f64], n_peaks: usize, period: f64) -> Result<Vec<f64>> {
    (0..n_peaks).map(|j| peak_area(q[2 + 2 * j], q[3 + 2 * j], q[0], q[1], period)).collect()
}

fn ratio(areas: &[f64], centre: usize) -> Result<f64> {
    let side: Vec<f64> = areas.iter().enumerate().filter(|(j, _)| *j != centre).map(|(_, a)| *a).collect();
    let mean = side.iter().sum::<f64>() / side.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::numerical("g2 fit", "side peaks have no area"));
    }
    Ok(areas[centre] / mean)
}

pub fn fit_g2_pulsed(histogram: &[(f64, f64)], opts: &G2Options) -> Result<G2Fit> {
    if !(opts.pulse_period > 0.0) {
        return Err(Error::domain("pulse_period", opts.pulse_period, "must be positive"));
    }
    if opts.n_side_peaks < 2 {
        return Err(Error::domain("n_side_peaks", opts.n_side_peaks, "need at least 2 side peaks on each side"));
    }
    if !(opts.dark_level >= 0.0) {
        return Err(Error::domain("dark_level", opts.dark_level, "must be non-negative"));
    }
    let mut data = histogram.to_vec();
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (tau, counts): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
    let reach = opts.n_side_peaks as f64 * opts.pulse_period;
    if tau.is_empty() || tau[0] > opts.center - reach || tau[tau.len() - 1] < opts.center + reach {
        return Err(Error::invalid(
            "g2 histogram",
            format!("delays must cover {} ± {reach} ns to include every fitted peak", opts.center),
        ));
    }
    let model = Histogram { tau: &tau, counts: &counts, opts };
    let n_peaks = model.n_peaks();
    let period = opts.pulse_period;

    let mut start = vec![period / 10.0, period / 3.0];
    for j in 0..n_peaks {
        let c = model.delay(j);
        let h = tau
            .iter()
            .zip(&counts)
            .filter(|(t, _)| (**t - c).abs() <= period / 10.0)
            .map(|(_, y)| y - opts.dark_level)
            .fold(0.0, f64::max);
        start.push(0.5 * h);
        start.push(0.5 * h);
    }
    let out = minimize(&model, &start, &LmSettings::default())?;
    let q = &out.params;
    let centre = opts.n_side_peaks;
    let area = areas(q, n_peaks, period)?;
    let g2_0 = ratio(&area, centre)?;
    let g2_0_err = max_error(q, &out.std_errors, n_peaks, period, centre, g2_0, &model.lower_bounds())?;

    let mut warnings = Vec::new();
    let tmax = q[0].max(q[1]);
    if period < OVERLAP_FACTOR * tmax {
        warnings.push(format!(
            "pulse period {period} ns is below {OVERLAP_FACTOR} decay constants ({tmax:.3} ns); neighbouring peaks overlap their windows"
        ));
    }
    let peaks = (0..n_peaks)
        .map(|j| PeakAmplitudes {
            index: j as i64 - centre as i64,
            delay: model.delay(j),
            fast: Measured::new(q[2 + 2 * j], out.std_errors[2 + 2 * j]),
            slow: Measured::new(q[3 + 2 * j], out.std_errors[3 + 2 * j]),
        })
        .collect();
    Ok(G2Fit {
        tau1: Measured::new(q[0], out.std_errors[0]),
        tau2: Measured::new(q[1], out.std_errors[1]),
        peaks,
        dark_count_level: opts.dark_level,
        areas: area,
        g2_0,
        g2_0_err,
        warnings,
        covariance: rows(&out.covariance),
        diagnostics: FitDiagnostics::from(&out),
    })
}

/// Largest deviation of `g²(0)` over the ±1σ corners of the most sensitive
/// parameters.
fn max_error(q: &[f64], err: &[f64], n_peaks: usize, period: f64, centre: usize, g0: f64, lb: &[f64]) -> Result<f64> {
    let eval = |p: &[f64]| -> Result<f64> { ratio(&areas(p, n_peaks, period)?, centre) };
    let shifted = |i: usize, s: f64| {
        let mut p = q.to_vec();
        p[i] = (q[i] + s).max(lb[i]);
        p
    };
    let mut sens = Vec::with_capacity(q.len());
    for i in 0..q.len() {
        let e = err[i];
        if e == 0.0 {
            continue;
        }
        if e.is_infinite() {
            // An undetermined parameter only matters if g²(0) depends on it.
            let h = 1e-6 * q[i].abs().max(1e-3);
            if (eval(&shifted(i, h))? - g0).abs() > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        let s = (eval(&shifted(i, e))? - g0).abs().max((eval(&shifted(i, -e))? - g0).abs());
        sens.push((i, s));
    }
    sens.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sens.truncate(MAX_CORNER_PARAMS);
    let mut worst: f64 = 0.0;
    for mask in 0u32..(1 << sens.len()) {
        let mut p = q.to_vec();
        for (bit, &(i, _)) in sens.iter().enumerate() {
            let sign = if mask >> bit & 1 == 1 { 1.0 } else { -1.0 };
            p[i] = (q[i] + sign * err[i]).max(lb[i]);
        }
        worst = worst.max((eval(&p)? - g0).abs());
    }
    Ok(worst)
}
