//! Faddeeva function in the upper half plane and the Voigt profile built
//! on it.
//!
//! Uses Weideman's rational expansion with 40 terms, accurate to about
//! 1e-11 relative for `Im z > 0`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use num_complex::Complex64;

const N: usize = 40;

struct Expansion {
    l: f64,
    coeffs: [f64; N],
}

fn expansion() -> &'static Expansion {
    static CELL: OnceLock<Expansion> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = 2 * N as i64;
        let l = (N as f64 / SQRT_2).sqrt();
        // Samples of e^{-t²}(L² + t²) at t = L·tan(θ/2), θ = kπ/M.
        let samples: Vec<(f64, f64)> = (1 - m..m)
            .map(|k| {
                let t = l * (k as f64 * PI / (2 * m) as f64).tan();
                (k as f64, (-t * t).exp() * (l * l + t * t))
            })
            .collect();
        // The samples are even in k, so the DFT reduces to a cosine sum.
        let mut coeffs = [0.0; N];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let j = (j + 1) as f64;
            let s: f64 = samples.iter().map(|(k, f)| f * (PI * j * k / m as f64).cos()).sum();
            *c = s / (2 * m) as f64;
        }
        Expansion { l, coeffs }
    })
}

/// `w(z) = e^{−z²} erfc(−iz)` for `Im z ≥ 0`.
pub fn faddeeva(z: Complex64) -> Complex64 {
    let e = expansion();
    let i = Complex64::i();
    let lz = Complex64::new(e.l, 0.0) - i * z;
    let zz = (Complex64::new(e.l, 0.0) + i * z) / lz;
    let mut p = Complex64::new(0.0, 0.0);
    for c in e.coeffs.iter().rev() {
        p = p * zz + c;
    }
    2.0 * p / (lz * lz) + 1.0 / (PI.sqrt() * lz)
}

/// Area-normalised Voigt profile: a Gaussian of standard deviation `sigma`
/// convolved with a Lorentzian of half-width `gamma`, at offset `x` from
/// the centre.
pub fn voigt(x: f64, sigma: f64, gamma: f64) -> f64 {
    voigt_with_derivatives(x, sigma, gamma).0
}

/// Profile value and its derivatives with respect to `x`, `sigma` and
/// `gamma`.
pub fn voigt_with_derivatives(x: f64, sigma: f64, gamma: f64) -> (f64, f64, f64, f64) {
    if sigma <= 1e-9 * gamma {
        let d = x * x + gamma * gamma;
        let v = gamma / (PI * d);
        return (v, -2.0 * x * v / d, 0.0, (d - 2.0 * gamma * gamma) / (PI * d * d));
    }
    let s2 = sigma * SQRT_2;
    let norm = sigma * (2.0 * PI).sqrt();
    let z = Complex64::new(x, gamma) / s2;
    let w = faddeeva(z);
    let dw = -2.0 * z * w + Complex64::new(0.0, 2.0 / PI.sqrt());
    let v = w.re / norm;
    let dx = dw.re / (s2 * norm);
    let dgamma = -dw.im / (s2 * norm);
    let dsigma = (dw * (-z / sigma)).re / norm - v / sigma;
    (v, dx, dsigma, dgamma)
}

/// Full width at half maximum of the Voigt profile (Olivero–Longbothum).
pub fn voigt_fwhm(sigma: f64, gamma: f64) -> f64 {
    let fg = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma;
    let fl = 2.0 * gamma;
    0.5346 * fl + (0.2166 * fl * fl + fg * fg).sqrt()
}
