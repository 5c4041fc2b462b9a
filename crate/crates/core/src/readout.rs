//! Photon-number statistics of optical single-shot spin readout.
//!
//! A bright-state readout emits at `lambda_b` until the spin leaves the
//! optical cycle at a random time `t`, after which only the background
//! `lambda_d` is counted for the rest of the window `T`. The escape time is
//! bi-exponential with weights `a_prime`, `a_dprime` and rates
//! `gamma_prime`, `gamma_dprime`. A dark-state readout is pure background.
//!
//! Rates are stored in counts/s and converted to counts/µs internally;
//! times are in µs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quad::integrate;
use crate::stats::{poisson_pmf, poisson_upper_tail};
use crate::{Error, Result};

pub const DEFAULT_K_MAX: usize = 64;
/// Largest tolerated probability mass above `k_max`.
pub const TAIL_BOUND: f64 = 1e-9;
/// Absolute quadrature tolerance per photon number.
pub const QUAD_TOL: f64 = 1e-9;
const WEIGHT_SUM_TOL: f64 = 1e-9;
const SHOTS_PER_BATCH: u64 = 1 << 16;

/// How the escape-time kernel enters the bright-state distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Weight `a′e^{−γ′t} + a″e^{−γ″t}` normalised to unit mass on `[0, T]`.
    #[default]
    KernelNormalized,
    /// Escape-time density `a′γ′e^{−γ′t} + a″γ″e^{−γ″t}` on `[0, T]` with the
    /// surviving mass placed at `t = T`.
    DecayDensity,
}

impl std::fmt::Display for Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Convention::KernelNormalized => "kernel_normalized",
            Convention::DecayDensity => "decay_density",
        })
    }
}

/// Length of the dark-state window that bright double readouts are
/// compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkWindow {
    /// One window `T`.
    #[default]
    Single,
    /// Two windows, `2T`.
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutModel {
    /// Bright-state count rate, counts/s.
    pub lambda_b: f64,
    /// Dark-state count rate, counts/s.
    pub lambda_d: f64,
    pub a_prime: f64,
    pub a_dprime: f64,
    /// Escape rates in 1/µs.
    pub gamma_prime: f64,
    pub gamma_dprime: f64,
    /// Readout window in µs.
    #[serde(rename = "T")]
    pub t_window: f64,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub dark_window: DarkWindow,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_b", self.lambda_b),
            ("lambda_d", self.lambda_d),
            ("a_prime", self.a_prime),
            ("a_dprime", self.a_dprime),
            ("gamma_prime", self.gamma_prime),
            ("gamma_dprime", self.gamma_dprime),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "must be finite and non-negative"));
            }
        }
        if ((self.a_prime + self.a_dprime) - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::domain("a_prime + a_dprime", self.a_prime + self.a_dprime, "weights must sum to 1"));
        }
        if !(self.t_window > 0.0 && self.t_window.is_finite()) {
            return Err(Error::domain("T", self.t_window, "readout window must be positive"));
        }
        if !(self.lambda_b >= self.lambda_d) {
            return Err(Error::domain("lambda_b", self.lambda_b, format!("must not be below lambda_d = {}", self.lambda_d)));
        }
        if self.k_max == 0 {
            return Err(Error::domain("k_max", 0, "must be positive"));
        }
        Ok(())
    }

    /// Bright rate in counts/µs.
    pub fn rate_b(&self) -> f64 {
        self.lambda_b * 1e-6
    }

    /// Dark rate in counts/µs.
    pub fn rate_d(&self) -> f64 {
        self.lambda_d * 1e-6
    }

    /// Mean counts when the spin escapes at time `t`.
    pub fn mean_counts(&self, t: f64) -> f64 {
        self.rate_b() * t + self.rate_d() * (self.t_window - t)
    }

    fn components(&self) -> [(f64, f64); 2] {
        [(self.a_prime, self.gamma_prime), (self.a_dprime, self.gamma_dprime)]
    }

    /// Mass of the continuous part of the escape-time weight on `[0, T]`
    /// and the atom at `T`, in the model's convention. Both sum to one.
    fn continuous_weight(&self, t: f64) -> f64 {
        match self.convention {
            Convention::KernelNormalized => {
                let z: f64 = self.components().iter().map(|&(a, g)| a * kernel_mass(g, self.t_window)).sum();
                self.components().iter().map(|&(a, g)| a * (-g * t).exp()).sum::<f64>() / z
            }
            Convention::DecayDensity => self.components().iter().map(|&(a, g)| a * g * (-g * t).exp()).sum(),
        }
    }

    fn survival_atom(&self) -> f64 {
        match self.convention {
            Convention::KernelNormalized => 0.0,
            Convention::DecayDensity => self.components().iter().map(|&(a, g)| a * (-g * self.t_window).exp()).sum(),
        }
    }

    /// The convention's normalised escape-time weight at `t` (continuous
    /// part only).
    pub fn normalized_weight(&self, t: f64) -> f64 {
        self.continuous_weight(t)
    }

    /// Probability mass at `t = T` (zero unless the convention keeps a
    /// survival atom).
    pub fn atom_at_window_end(&self) -> f64 {
        self.survival_atom()
    }

    fn dark_mean(&self) -> f64 {
        self.rate_d() * self.t_window
    }

    fn bright_mean_max(&self) -> f64 {
        self.rate_b().max(self.rate_d()) * self.t_window
    }
}

/// `∫₀ᵀ e^{−γt} dt`.
fn kernel_mass(gamma: f64, t: f64) -> f64 {
    if gamma * t < 1e-12 {
        t
    } else {
        -(-gamma * t).exp_m1() / gamma
    }
}

/// Photon-number probabilities `p(0..=k_max)` with an upper bound on the
/// mass beyond `k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonPmf {
    pub probs: Vec<f64>,
    pub truncation: f64,
}

impl PhotonPmf {
    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// `P(K > threshold)`, computed as one minus the head so that the
    /// truncated tail is counted.
    pub fn tail_above(&self, threshold: u64) -> f64 {
        let head: f64 = self.probs.iter().take(threshold as usize + 1).sum();
        (1.0 - head).max(0.0)
    }

    /// Distribution of the sum of two independent draws, truncated at the
    /// same `k_max`.
    pub fn self_convolve(&self) -> PhotonPmf {
        let n = self.probs.len();
        let probs = (0..n).map(|k| (0..=k).map(|j| self.probs[j] * self.probs[k - j]).sum()).collect();
        PhotonPmf { probs, truncation: 2.0 * self.truncation }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "k,probability")?;
        for (k, p) in self.probs.iter().enumerate() {
            writeln!(w, "{k},{p:e}")?;
        }
        w.flush()
    }
}

fn check_tail(model: &ReadoutModel, mean: f64) -> Result<f64> {
    let tail = poisson_upper_tail(model.k_max as u64, mean);
    if tail > TAIL_BOUND {
        return Err(Error::domain(
            "k_max",
            model.k_max,
            format!("leaves {tail:.2e} of the mass above it at mean {mean}; raise it"),
        ));
    }
    Ok(tail)
}

pub fn pmf_dark(model: &ReadoutModel) -> Result<PhotonPmf> {
    model.validate()?;
    dark_pmf_with_mean(model, model.dark_mean())
}

fn dark_pmf_with_mean(model: &ReadoutModel, mu: f64) -> Result<PhotonPmf> {
    let truncation = check_tail(model, mu)?;
    let probs = (0..=model.k_max as u64).map(|k| poisson_pmf(k, mu)).collect();
    Ok(PhotonPmf { probs, truncation })
}

pub fn pmf_bright_single(model: &ReadoutModel) -> Result<PhotonPmf> {
    model.validate()?;
    let truncation = check_tail(model, model.bright_mean_max())?;
    let t_end = model.t_window;
    let atom = model.survival_atom();
    let end_mean = model.mean_counts(t_end);
    let probs = (0..=model.k_max as u64)
        .into_par_iter()
        .map(|k| {
            let cont = integrate(|t| model.continuous_weight(t) * poisson_pmf(k, model.mean_counts(t)), 0.0, t_end, QUAD_TOL)?;
            Ok(cont + atom * poisson_pmf(k, end_mean))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PhotonPmf { probs, truncation })
}

/// Two independent bright readouts, as with a nuclear-spin memory.
pub fn pmf_bright_double(model: &ReadoutModel) -> Result<PhotonPmf> {
    let single = pmf_bright_single(model)?;
    let mut double = single.self_convolve();
    double.truncation = check_tail(model, 2.0 * model.bright_mean_max())?.max(double.truncation);
    Ok(double)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsrResult {
    pub threshold: u64,
    pub fidelity: f64,
    pub success_rate: f64,
    pub discard_fraction: f64,
    pub convention: Convention,
    pub dark_window: DarkWindow,
    pub pmf_bright: PhotonPmf,
    pub pmf_dark: PhotonPmf,
}

/// The scalar part of an [`SsrResult`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsrMetrics {
    pub threshold: u64,
    pub fidelity: f64,
    pub success_rate: f64,
    pub discard_fraction: f64,
    pub convention: Convention,
}

impl SsrResult {
    pub fn metrics(&self) -> SsrMetrics {
        SsrMetrics {
            threshold: self.threshold,
            fidelity: self.fidelity,
            success_rate: self.success_rate,
            discard_fraction: self.discard_fraction,
            convention: self.convention,
        }
    }
}

/// Assign "bright" when a double readout shows more than `threshold`
/// counts.
pub fn ssr_metrics(model: &ReadoutModel, threshold: u64) -> Result<SsrResult> {
    let pmf_bright = pmf_bright_double(model)?;
    let dark_mu = match model.dark_window {
        DarkWindow::Single => model.dark_mean(),
        DarkWindow::Double => 2.0 * model.dark_mean(),
    };
    let pmf_dark = dark_pmf_with_mean(model, dark_mu)?;
    let p_b = pmf_bright.tail_above(threshold);
    let p_d = poisson_upper_tail(threshold, dark_mu);
    if p_b + p_d <= 0.0 {
        return Err(Error::numerical(
            "ssr_metrics",
            format!("fidelity undefined at threshold {threshold}: both tail probabilities vanish"),
        ));
    }
    Ok(SsrResult {
        threshold,
        fidelity: p_b / (p_b + p_d),
        success_rate: p_b,
        discard_fraction: 1.0 - p_b,
        convention: model.convention,
        dark_window: model.dark_window,
        pmf_bright,
        pmf_dark,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fidelity: f64,
    pub success_rate: f64,
}

/// [`ssr_metrics`] for each labelled model in order. Failures are kept in
/// their row.
pub fn sweep_metrics(models: &[(String, ReadoutModel)], threshold: u64) -> Result<Vec<(String, Result<SweepRow>)>> {
    if models.is_empty() {
        return Err(Error::invalid("sweep", "no models given"));
    }
    Ok(models
        .par_iter()
        .map(|(label, m)| {
            let row = ssr_metrics(m, threshold).map(|r| SweepRow { fidelity: r.fidelity, success_rate: r.success_rate });
            (label.clone(), row)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    BrightDouble,
    DarkSingle,
}

/// Escape-time sampler for the model's convention.
struct EscapeSampler {
    /// Probability of the first component.
    p_first: f64,
    gammas: [f64; 2],
    /// `1 − e^{−γT}` per component.
    reach: [f64; 2],
    convention: Convention,
    t_end: f64,
}

impl EscapeSampler {
    fn new(m: &ReadoutModel) -> Self {
        let t = m.t_window;
        let gammas = [m.gamma_prime, m.gamma_dprime];
        let reach = gammas.map(|g| -(-g * t).exp_m1());
        let p_first = match m.convention {
            Convention::KernelNormalized => {
                let w1 = m.a_prime * kernel_mass(m.gamma_prime, t);
                let w2 = m.a_dprime * kernel_mass(m.gamma_dprime, t);
                w1 / (w1 + w2)
            }
            Convention::DecayDensity => m.a_prime,
        };
        EscapeSampler { p_first, gammas, reach, convention: m.convention, t_end: t }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let c = usize::from(rng.random::<f64>() >= self.p_first);
        let g = self.gammas[c];
        let u: f64 = rng.random();
        match self.convention {
            Convention::KernelNormalized => {
                if g * self.t_end < 1e-12 {
                    u * self.t_end
                } else {
                    (-(-u * self.reach[c]).ln_1p() / g).min(self.t_end)
                }
            }
            Convention::DecayDensity => {
                if g == 0.0 {
                    self.t_end
                } else {
                    (-(-u).ln_1p() / g).min(self.t_end)
                }
            }
        }
    }
}

fn poisson_draw<R: Rng>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    Poisson::new(mu).expect("positive finite mean").sample(rng) as u64
}

/// Monte Carlo histogram of photon counts. Shots are split into fixed
/// batches, each with its own ChaCha stream, so the result depends only on
/// `seed` and not on the thread count.
pub fn simulate_histogram(model: &ReadoutModel, shots: u64, seed: u64, mode: HistogramMode) -> Result<Vec<u64>> {
    model.validate()?;
    if shots == 0 {
        return Err(Error::domain("shots", 0, "need at least one shot"));
    }
    let sampler = EscapeSampler::new(model);
    let n_batches = shots.div_ceil(SHOTS_PER_BATCH);
    let hists: Vec<Vec<u64>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = SHOTS_PER_BATCH.min(shots - b * SHOTS_PER_BATCH);
            let mut h = Vec::new();
            for _ in 0..n {
                let k = match mode {
                    HistogramMode::DarkSingle => poisson_draw(model.dark_mean(), &mut rng),
                    HistogramMode::BrightDouble => {
                        let t1 = sampler.sample(&mut rng);
                        let k1 = poisson_draw(model.mean_counts(t1), &mut rng);
                        let t2 = sampler.sample(&mut rng);
                        k1 + poisson_draw(model.mean_counts(t2), &mut rng)
                    }
                } as usize;
                if h.len() <= k {
                    h.resize(k + 1, 0);
                }
                h[k] += 1;
            }
            h
        })
        .collect();
    let len = hists.iter().map(Vec::len).max().unwrap_or(1);
    let mut total = vec![0u64; len];
    for h in hists {
        for (k, c) in h.into_iter().enumerate() {
            total[k] += c;
        }
    }
    Ok(total)
}

/// Normalise a histogram to frequencies.
pub fn empirical_pmf(hist: &[u64]) -> Vec<f64> {
    let n: u64 = hist.iter().sum();
    hist.iter().map(|&c| c as f64 / n as f64).collect()
}

pub fn write_histogram_csv<W: Write>(hist: &[u64], out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "k,count")?;
    for (k, c) in hist.iter().enumerate() {
        writeln!(w, "{k},{c}")?;
    }
    w.flush()
}
