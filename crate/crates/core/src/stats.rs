//! Small statistics helpers shared across modules.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with the `1/n` normalisation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `ln k!`.
pub fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Poisson probability of `k` events at mean `mu`.
pub fn poisson_pmf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mu.ln() - mu - ln_factorial(k)).exp()
}

/// `P(K > k)` for a Poisson variable of mean `mu`, summed upward so that
/// tiny tails keep their relative precision.
pub fn poisson_upper_tail(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let mut term = poisson_pmf(k + 1, mu);
    let mut total = 0.0;
    let mut j = k + 1;
    while term > 0.0 {
        total += term;
        j += 1;
        term *= mu / j as f64;
        if term < total * 1e-18 && j as f64 > mu {
            break;
        }
    }
    total
}

/// Total-variation distance between two distributions on the same support
/// (the shorter one is padded with zeros).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
