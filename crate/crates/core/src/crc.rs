//! Charge-resonance-check post-selection: filter shots on their check
//! counts, fit the retained readouts with a Poisson law and convert to a
//! count rate.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: u64 = 5;
const SHOTS_PER_BATCH: u64 = 1 << 14;

/// Pulse durations in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub repump_duration: f64,
    pub crc_window: f64,
    pub readout_window: f64,
}

impl Default for PulseSequence {
    fn default() -> Self {
        PulseSequence { repump_duration: 10.0, crc_window: 20.0, readout_window: 100.0 }
    }
}

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("repump_duration", self.repump_duration), ("crc_window", self.crc_window), ("readout_window", self.readout_window)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "duration must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub crc_counts: u64,
    pub readout_counts: u64,
}

/// Two-state emitter: on resonance with probability `p_on`, otherwise off.
/// Rates in counts/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Telegraph {
    pub rate_on: f64,
    pub rate_off: f64,
    pub p_on: f64,
}

impl Telegraph {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_on) {
            return Err(Error::domain("p_on", self.p_on, "must lie in [0, 1]"));
        }
        for (name, v) in [("rate_on", self.rate_on), ("rate_off", self.rate_off)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "rate must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub threshold: u64,
    pub total: usize,
    pub kept: Vec<ShotRecord>,
    pub discard_fraction: f64,
    /// Mean readout counts per window, filled in by [`FilterResult::fit`].
    pub lambda_hat: Option<f64>,
    pub lambda_err: Option<f64>,
    /// Count rate in counts/s.
    pub rate: Option<f64>,
    pub rate_err: Option<f64>,
}

/// Plot-ready summary of a [`FilterResult`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub threshold: u64,
    pub kept: usize,
    pub total: usize,
    pub discard_fraction: f64,
    pub lambda_hat: Option<f64>,
    pub lambda_err: Option<f64>,
    pub rate_cps: Option<f64>,
    pub rate_err_cps: Option<f64>,
}

impl FilterResult {
    /// Poisson fit of the kept readouts and conversion to a rate for a
    /// readout window in µs. Leaves the fit fields empty when nothing was
    /// kept.
    pub fn fit(&mut self, readout_window: f64) -> Result<()> {
        if self.kept.is_empty() {
            return Ok(());
        }
        let (l, e) = fit_poisson(&self.kept)?;
        let (r, re) = rescale_to_rate(l, e, readout_window)?;
        self.lambda_hat = Some(l);
        self.lambda_err = Some(e);
        self.rate = Some(r);
        self.rate_err = Some(re);
        Ok(())
    }

    pub fn report(&self) -> FilterReport {
        FilterReport {
            threshold: self.threshold,
            kept: self.kept.len(),
            total: self.total,
            discard_fraction: self.discard_fraction,
            lambda_hat: self.lambda_hat,
            lambda_err: self.lambda_err,
            rate_cps: self.rate,
            rate_err_cps: self.rate_err,
        }
    }
}

/// Keep shots whose check counts strictly exceed `threshold`.
pub fn filter_shots(records: &[ShotRecord], threshold: u64) -> Result<FilterResult> {
    if records.is_empty() {
        return Err(Error::domain("records", 0, "no shots to filter"));
    }
    let kept: Vec<ShotRecord> = records.iter().copied().filter(|r| r.crc_counts > threshold).collect();
    Ok(FilterResult {
        threshold,
        total: records.len(),
        discard_fraction: 1.0 - kept.len() as f64 / records.len() as f64,
        kept,
        lambda_hat: None,
        lambda_err: None,
        rate: None,
        rate_err: None,
    })
}

/// Maximum-likelihood Poisson mean of the readout counts and its `√λ`
/// uncertainty.
pub fn fit_poisson(records: &[ShotRecord]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::domain("records", 0, "need at least one kept shot"));
    }
    let sum: u64 = records.iter().map(|r| r.readout_counts).sum();
    let lambda = sum as f64 / records.len() as f64;
    Ok((lambda, lambda.sqrt()))
}

/// Counts per window of `window_us` µs to counts per second.
pub fn rescale_to_rate(lambda: f64, err: f64, window_us: f64) -> Result<(f64, f64)> {
    if !(window_us > 0.0) {
        return Err(Error::domain("window", window_us, "must be positive"));
    }
    let per_s = 1e6 / window_us;
    Ok((lambda * per_s, err * per_s))
}

fn draw<R: Rng>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        0
    } else {
        Poisson::new(mu).expect("positive finite mean").sample(rng) as u64
    }
}

/// Synthetic shots from a two-state emitter. Batches of shots use their own
/// ChaCha stream so the output depends only on `seed`.
pub fn simulate_crc(sequence: &PulseSequence, telegraph: &Telegraph, shots: u64, seed: u64) -> Result<Vec<ShotRecord>> {
    sequence.validate()?;
    telegraph.validate()?;
    let n_batches = shots.div_ceil(SHOTS_PER_BATCH);
    let batches: Vec<Vec<ShotRecord>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = SHOTS_PER_BATCH.min(shots - b * SHOTS_PER_BATCH);
            (0..n)
                .map(|_| {
                    let on = rng.random::<f64>() < telegraph.p_on;
                    let rate = if on { telegraph.rate_on } else { telegraph.rate_off } * 1e-6;
                    let crc_counts = draw(rate * sequence.crc_window, &mut rng);
                    let readout_counts = draw(rate * sequence.readout_window, &mut rng);
                    ShotRecord { crc_counts, readout_counts }
                })
                .collect()
        })
        .collect();
    Ok(batches.concat())
}

pub fn write_records_csv<W: Write>(records: &[ShotRecord], out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "crc_counts,readout_counts")?;
    for r in records {
        writeln!(w, "{},{}", r.crc_counts, r.readout_counts)?;
    }
    w.flush()
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ShotRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records_from(file).map_err(|reason| Error::Parse { path: path.to_path_buf(), reason })
}

pub fn read_records_from<R: std::io::Read>(reader: R) -> std::result::Result<Vec<ShotRecord>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(str::to_owned).collect();
    if header != ["crc_counts", "readout_counts"] {
        return Err(format!("expected header \"crc_counts,readout_counts\", found {:?}", header.join(",")));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| e.to_string())?;
            let field = |j: usize| rec[j].parse::<u64>().map_err(|e| format!("row {}: {:?}: {e}", i + 1, &rec[j]));
            Ok(ShotRecord { crc_counts: field(0)?, readout_counts: field(1)? })
        })
        .collect()
}
