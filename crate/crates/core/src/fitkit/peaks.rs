//! Saturation curves and single spectral lines.

use nalgebra::DMatrix;

use super::faddeeva::{voigt, voigt_fwhm, voigt_with_derivatives};
use super::lm::{minimize, LmOutput, LmSettings, Residuals};
use super::{FitDiagnostics, SaturationFit, VoigtFit, LorentzFit};
use crate::calib::Measured;
use crate::stats::median;
use crate::{Error, Result};

fn measured(out: &LmOutput, i: usize) -> Measured {
    Measured::new(out.params[i], out.std_errors[i])
}

fn sorted(points: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(p) = points.iter().find(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::invalid("fit data", format!("non-finite point ({}, {})", p.0, p.1)));
    }
    let mut v = points.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(v.into_iter().unzip())
}

struct Saturation {
    p: Vec<f64>,
    i: Vec<f64>,
    background: bool,
    p_floor: f64,
}

impl Residuals for Saturation {
    fn n_params(&self) -> usize {
        2 + usize::from(self.background)
    }

    fn n_residuals(&self) -> usize {
        self.p.len()
    }

    fn residuals(&self, q: &[f64], out: &mut [f64]) {
        let c = if self.background { q[2] } else { 0.0 };
        for k in 0..self.p.len() {
            let p = self.p[k];
            out[k] = q[0] * p / (p + q[1]) + c * p - self.i[k];
        }
    }

    fn jacobian(&self, q: &[f64], jac: &mut DMatrix<f64>) {
        for k in 0..self.p.len() {
            let p = self.p[k];
            let d = p + q[1];
            jac[(k, 0)] = p / d;
            jac[(k, 1)] = -q[0] * p / (d * d);
            if self.background {
                jac[(k, 2)] = p;
            }
        }
    }

    fn lower_bounds(&self) -> Vec<f64> {
        let mut lb = vec![0.0, self.p_floor];
        if self.background {
            lb.push(f64::NEG_INFINITY);
        }
        lb
    }
}

/// Fit `I(P) = I_s·P/(P + P_s)`, optionally plus a linear background
/// `c·P`. Powers in nW, intensities in counts/s.
pub fn fit_saturation(points: &[(f64, f64)], with_linear_background: bool) -> Result<SaturationFit> {
    let need = if with_linear_background { 4 } else { 3 };
    if points.len() < need {
        return Err(Error::invalid("saturation data", format!("need at least {need} points, got {}", points.len())));
    }
    let (p, i) = sorted(points)?;
    if p.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("saturation data", "power values must be distinct"));
    }
    if p.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid("saturation data", "powers must be non-negative"));
    }
    let p0 = [i.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0), median(&p)];
    let mut start = p0.to_vec();
    if with_linear_background {
        start.push(0.0);
    }
    let p_floor = 1e-12 * p.iter().copied().fold(0.0, f64::max);
    let model = Saturation { p, i, background: with_linear_background, p_floor };
    let out = minimize(&model, &start, &LmSettings::default())?;
    Ok(SaturationFit {
        i_s: measured(&out, 0),
        p_s: measured(&out, 1),
        background_slope: with_linear_background.then(|| measured(&out, 2)),
        covariance: rows(&out.covariance),
        diagnostics: FitDiagnostics::from(&out),
    })
}

pub(super) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Starting values for a single line: centre at the largest deviation from
/// the median, width from the half-maximum crossings around it.
struct LineGuess {
    center: f64,
    fwhm: f64,
    height: f64,
    offset: f64,
}

fn guess_line(x: &[f64], y: &[f64]) -> LineGuess {
    let offset = median(y);
    let (imax, _) = y
        .iter()
        .enumerate()
        .map(|(k, v)| (k, (v - offset).abs()))
        .fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
    let height = y[imax] - offset;
    let half = 0.5 * height.abs();
    let span = x[x.len() - 1] - x[0];
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for k in range {
            let d = (y[k] - offset).abs();
            if d <= half {
                let dp = (y[prev] - offset).abs();
                let frac = if dp > d { (dp - half) / (dp - d) } else { 0.0 };
                return Some(x[prev] + frac * (x[k] - x[prev]));
            }
            prev = k;
        }
        None
    };
    let left = crossing(&mut (0..imax).rev());
    let right = crossing(&mut (imax + 1..x.len()));
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (x[imax] - l),
        (None, Some(r)) => 2.0 * (r - x[imax]),
        (None, None) => span / 4.0,
    };
    let fwhm = if fwhm > 0.0 { fwhm } else { span / 4.0 };
    LineGuess { center: x[imax], fwhm, height, offset }
}

fn check_line_data(points: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if points.len() < 6 {
        return Err(Error::invalid("line data", format!("need at least 6 points, got {}", points.len())));
    }
    let (x, y) = sorted(points)?;
    if x[x.len() - 1] <= x[0] {
        return Err(Error::invalid("line data", "all abscissae coincide"));
    }
    Ok((x, y))
}

struct Voigt {
    x: Vec<f64>,
    y: Vec<f64>,
    width_floor: f64,
}

// Parameters: centre, sigma, gamma, area, offset.
impl Residuals for Voigt {
    fn n_params(&self) -> usize {
        5
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, q: &[f64], out: &mut [f64]) {
        for k in 0..self.x.len() {
            out[k] = q[3] * voigt(self.x[k] - q[0], q[1], q[2]) + q[4] - self.y[k];
        }
    }

    fn jacobian(&self, q: &[f64], jac: &mut DMatrix<f64>) {
        for k in 0..self.x.len() {
            let (v, dx, ds, dg) = voigt_with_derivatives(self.x[k] - q[0], q[1], q[2]);
            jac[(k, 0)] = -q[3] * dx;
            jac[(k, 1)] = q[3] * ds;
            jac[(k, 2)] = q[3] * dg;
            jac[(k, 3)] = v;
            jac[(k, 4)] = 1.0;
        }
    }

    fn lower_bounds(&self) -> Vec<f64> {
        vec![f64::NEG_INFINITY, 0.0, self.width_floor, f64::NEG_INFINITY, f64::NEG_INFINITY]
    }
}

/// Voigt line on a constant offset. Frequencies in MHz; `amplitude` is the
/// line area.
pub fn fit_voigt(points: &[(f64, f64)]) -> Result<VoigtFit> {
    let (x, y) = check_line_data(points)?;
    let g = guess_line(&x, &y);
    // Equal Gaussian and Lorentzian widths reproduce the observed FWHM.
    let f = g.fwhm / 1.6376;
    let sigma = f / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let gamma = f / 2.0;
    let area = g.height / voigt(0.0, sigma, gamma);
    let model = Voigt { x, y, width_floor: 1e-9 * g.fwhm };
    let out = minimize(&model, &[g.center, sigma, gamma, area, g.offset], &LmSettings::default())?;
    let (s, gm) = (out.params[1], out.params[2]);
    Ok(VoigtFit {
        center: measured(&out, 0),
        gaussian_sigma: measured(&out, 1),
        lorentzian_gamma: measured(&out, 2),
        amplitude: measured(&out, 3),
        offset: measured(&out, 4),
        peak_height: out.params[3] * voigt(0.0, s, gm),
        fwhm: voigt_fwhm(s, gm),
        diagnostics: FitDiagnostics::from(&out),
    })
}

struct Lorentz {
    x: Vec<f64>,
    y: Vec<f64>,
    width_floor: f64,
}

// Parameters: centre, half-width, peak height, offset.
impl Residuals for Lorentz {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, q: &[f64], out: &mut [f64]) {
        for k in 0..self.x.len() {
            let d = self.x[k] - q[0];
            out[k] = q[2] * q[1] * q[1] / (d * d + q[1] * q[1]) + q[3] - self.y[k];
        }
    }

    fn jacobian(&self, q: &[f64], jac: &mut DMatrix<f64>) {
        let h2 = q[1] * q[1];
        for k in 0..self.x.len() {
            let d = self.x[k] - q[0];
            let den = d * d + h2;
            let shape = h2 / den;
            jac[(k, 0)] = q[2] * 2.0 * d * h2 / (den * den);
            jac[(k, 1)] = q[2] * 2.0 * q[1] * d * d / (den * den);
            jac[(k, 2)] = shape;
            jac[(k, 3)] = 1.0;
        }
    }

    fn lower_bounds(&self) -> Vec<f64> {
        vec![f64::NEG_INFINITY, self.width_floor, f64::NEG_INFINITY, f64::NEG_INFINITY]
    }
}

/// Lorentzian line on a constant offset; `amplitude` is the peak height.
pub fn fit_lorentzian(points: &[(f64, f64)]) -> Result<LorentzFit> {
    let (x, y) = check_line_data(points)?;
    let g = guess_line(&x, &y);
    let model = Lorentz { x, y, width_floor: 1e-9 * g.fwhm };
    let out = minimize(&model, &[g.center, g.fwhm / 2.0, g.height, g.offset], &LmSettings::default())?;
    let hw = measured(&out, 1);
    Ok(LorentzFit {
        center: measured(&out, 0),
        fwhm: Measured::new(2.0 * hw.value, 2.0 * hw.err),
        half_width: hw,
        amplitude: measured(&out, 2),
        offset: measured(&out, 3),
        diagnostics: FitDiagnostics::from(&out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn sat_curve(is: f64, ps: f64) -> Vec<(f64, f64)> {
        (1..=20).map(|k| {
            let p = 2.5 * k as f64;
            (p, is * p / (p + ps))
        }).collect()
    }

    #[test]
    fn saturation_noiseless() {
        let fit = fit_saturation(&sat_curve(100e3, 10.0), false).unwrap();
        assert!(rel(fit.i_s.value, 100e3) < 1e-6);
        assert!(rel(fit.p_s.value, 10.0) < 1e-6);
        assert!(fit.diagnostics.residual_norm <= fit.diagnostics.initial_residual_norm);
        let with_bg: Vec<_> = sat_curve(100e3, 10.0).into_iter().map(|(p, i)| (p, i + 150.0 * p)).collect();
        let fit = fit_saturation(&with_bg, true).unwrap();
        assert!(rel(fit.i_s.value, 100e3) < 1e-6);
        assert!(rel(fit.background_slope.unwrap().value, 150.0) < 1e-6);
    }

    #[test]
    fn saturation_half_point() {
        let fit = fit_saturation(&sat_curve(50.0, 7.0), false).unwrap();
        let at = fit.i_s.value * fit.p_s.value / (2.0 * fit.p_s.value);
        assert!((at - fit.i_s.value / 2.0).abs() < 1e-12);
    }

    #[test]
    fn saturation_preconditions() {
        assert!(fit_saturation(&[(1.0, 1.0), (2.0, 2.0)], false).is_err());
        assert!(fit_saturation(&[(1.0, 1.0), (2.0, 2.0), (3.0, 2.5)], true).is_err());
        assert!(fit_saturation(&[(1.0, 1.0), (1.0, 2.0), (3.0, 2.5)], false).is_err());
    }

    #[test]
    fn pure_background_is_ill_conditioned() {
        let pts: Vec<_> = (1..=12).map(|k| (k as f64, 3.0 * k as f64)).collect();
        let fit = fit_saturation(&pts, true).unwrap();
        assert!(fit.diagnostics.ill_conditioned);
        assert!(fit.covariance.iter().flatten().any(|v| v.is_infinite()));
    }

    #[test]
    fn covariance_shrinks_with_noise() {
        let clean = sat_curve(100e3, 10.0);
        let mut prev = f64::INFINITY;
        for sd in [1e3, 1e2, 1e1, 1.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let n = Normal::new(0.0, sd).unwrap();
            let pts: Vec<_> = clean.iter().map(|&(p, i)| (p, i + n.sample(&mut rng))).collect();
            let fit = fit_saturation(&pts, false).unwrap();
            let tr = fit.covariance[0][0] + fit.covariance[1][1];
            assert!(tr < prev);
            prev = tr;
        }
        assert!(prev < 10.0);
    }

    fn lorentz_points(c: f64, fwhm: f64, h: f64, off: f64) -> Vec<(f64, f64)> {
        let hw = fwhm / 2.0;
        (0..201).map(|k| {
            let x = c - 150.0 + 1.5 * k as f64;
            (x, h * hw * hw / ((x - c).powi(2) + hw * hw) + off)
        }).collect()
    }

    #[test]
    fn lorentz_noiseless() {
        let fit = fit_lorentzian(&lorentz_points(12.0, 40.99, 5.0, 0.3)).unwrap();
        assert!(rel(fit.center.value, 12.0) < 1e-6);
        assert!(rel(fit.fwhm.value, 40.99) < 1e-6);
        assert_eq!(fit.fwhm.value, 2.0 * fit.half_width.value);
        assert!(rel(fit.amplitude.value, 5.0) < 1e-6);
    }

    #[test]
    fn lorentz_flat_data() {
        let pts: Vec<_> = (0..30).map(|k| (k as f64, 2.0)).collect();
        let fit = fit_lorentzian(&pts).unwrap();
        assert!(fit.amplitude.value.abs() < 1e-12);
        assert!(fit.diagnostics.ill_conditioned);
    }

    fn voigt_points(c: f64, s: f64, g: f64, area: f64, off: f64) -> Vec<(f64, f64)> {
        (0..241).map(|k| {
            let x = c - 60.0 + 0.5 * k as f64;
            (x, area * voigt(x - c, s, g) + off)
        }).collect()
    }

    #[test]
    fn voigt_noiseless() {
        let fit = fit_voigt(&voigt_points(67.15, 4.0, 5.0, 0.5, 0.01)).unwrap();
        assert!(rel(fit.center.value, 67.15) < 1e-6);
        assert!(rel(fit.gaussian_sigma.value, 4.0) < 1e-6);
        assert!(rel(fit.lorentzian_gamma.value, 5.0) < 1e-6);
        assert!(rel(fit.amplitude.value, 0.5) < 1e-6);
    }

    #[test]
    fn voigt_symmetric_centre() {
        let fit = fit_voigt(&voigt_points(0.0, 3.0, 2.0, 1.0, 0.0)).unwrap();
        assert!(fit.center.value.abs() < 1e-9);
    }

    #[test]
    fn voigt_reduces_to_lorentzian() {
        let pts = lorentz_points(5.0, 20.0, 1.0, 0.1);
        let l = fit_lorentzian(&pts).unwrap();
        let v = fit_voigt(&pts).unwrap();
        assert!((v.center.value - l.center.value).abs() < 1e-4);
        assert!((v.fwhm - l.fwhm.value).abs() < 1e-4 * l.fwhm.value);
        assert!(v.gaussian_sigma.value < 1e-2);
    }

    #[test]
    fn dips_are_fitted() {
        let pts: Vec<_> = lorentz_points(0.0, 30.0, -0.05, 1.0);
        let fit = fit_lorentzian(&pts).unwrap();
        assert!(rel(fit.amplitude.value, -0.05) < 1e-6);
    }
}
