//! Normal-incidence characteristic (Abelès) matrices for stratified media.
//!
//! A layer of complex index `n` and thickness `d` at vacuum wavenumber `k0`
//! has phase `δ = k0·n·d` and matrix
//!
//! ```text
//! [ cos δ        -i sin δ / n ]
//! [ -i n sin δ    cos δ       ]
//! ```
//!
//! Products of these matrices have unit determinant, and for lossless
//! layers the diagonal is real, so half the trace is the Bloch
//! dispersion function of a periodic cell.

use num_complex::Complex64;

use crate::SPEED_OF_LIGHT_NM_THZ;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[Complex64; 2]; 2],
}

impl Mat2 {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Mat2 { m: [[one, zero], [zero, one]] }
    }

    /// Characteristic matrix of one homogeneous layer.
    pub fn layer(n: Complex64, thickness_nm: f64, nu_thz: f64) -> Self {
        let delta = n * (wavenumber(nu_thz) * thickness_nm);
        let (c, s) = (delta.cos(), delta.sin());
        let i = Complex64::i();
        Mat2 { m: [[c, -i * s / n], [-i * n * s, c]] }
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        Mat2 {
            m: [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ],
        }
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn half_trace(&self) -> Complex64 {
        0.5 * (self.m[0][0] + self.m[1][1])
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, mut n: usize) -> Mat2 {
        let mut base = *self;
        let mut acc = Mat2::identity();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        acc
    }

    /// Amplitude reflection and transmission coefficients for a stack
    /// with this matrix between ambient media of real index `n_in` and
    /// `n_out`.
    pub fn coefficients(&self, n_in: f64, n_out: f64) -> (Complex64, Complex64) {
        let [[m11, m12], [m21, m22]] = self.m;
        let a = n_in * m11 + n_in * n_out * m12;
        let b = m21 + n_out * m22;
        let den = a + b;
        ((a - b) / den, Complex64::new(2.0 * n_in, 0.0) / den)
    }

    /// Power reflectance and transmittance.
    pub fn reflect_transmit(&self, n_in: f64, n_out: f64) -> (f64, f64) {
        let (r, t) = self.coefficients(n_in, n_out);
        (r.norm_sqr(), n_out / n_in * t.norm_sqr())
    }
}

/// Vacuum wavenumber `2πν/c` in rad/nm.
pub fn wavenumber(nu_thz: f64) -> f64 {
    2.0 * std::f64::consts::PI * nu_thz / SPEED_OF_LIGHT_NM_THZ
}

/// Ordered product of layer matrices for `(index, thickness)` pairs.
pub fn stack_matrix<I>(layers: I, nu_thz: f64) -> Mat2
where
    I: IntoIterator<Item = (Complex64, f64)>,
{
    layers
        .into_iter()
        .fold(Mat2::identity(), |acc, (n, d)| acc.mul(&Mat2::layer(n, d, nu_thz)))
}
