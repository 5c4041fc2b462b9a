//! Bounded Levenberg–Marquardt least squares.
//!
//! Damping follows Nielsen's update with Marquardt's diagonal scaling, which
//! makes the iteration invariant under rescaling of individual parameters
//! and of the residuals. Lower bounds are enforced by projecting each trial
//! point.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
const RCOND: f64 = 1e-10;
/// A parameter whose null-space weight exceeds this is reported as
/// undetermined.
const NULL_WEIGHT: f64 = 1e-6;

pub trait Residuals {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// `model − data` at `p`.
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Jacobian of the residuals (rows: residuals, columns: parameters).
    /// Defaults to central differences.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        numerical_jacobian(self, p, jac)
    }
    fn lower_bounds(&self) -> Vec<f64> {
        vec![f64::NEG_INFINITY; self.n_params()]
    }
}

pub fn numerical_jacobian<R: Residuals + ?Sized>(model: &R, p: &[f64], jac: &mut DMatrix<f64>) {
    let m = model.n_residuals();
    let mut hi = vec![0.0; m];
    let mut lo = vec![0.0; m];
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = f64::EPSILON.cbrt() * p[j].abs().max(1e-8);
        q[j] = p[j] + h;
        model.residuals(&q, &mut hi);
        q[j] = p[j] - h;
        model.residuals(&q, &mut lo);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (hi[i] - lo[i]) / (2.0 * h);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this
    /// fraction.
    pub ftol: f64,
    /// Stop when every component of the step is below this fraction of
    /// the parameter magnitude.
    pub xtol: f64,
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings { max_iterations: 2000, ftol: 1e-15, xtol: 1e-13, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutput {
    pub params: Vec<f64>,
    /// `s²·(JᵀJ)⁻¹` with `s² = ‖r‖²/(m − n)`. Rows and columns of
    /// undetermined parameters are infinite.
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub iterations: usize,
    pub ill_conditioned: bool,
}

fn project(p: &mut [f64], lb: &[f64]) {
    for (x, l) in p.iter_mut().zip(lb) {
        if *x < *l {
            *x = *l;
        }
    }
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

pub fn minimize<R: Residuals + ?Sized>(model: &R, p0: &[f64], settings: &LmSettings) -> Result<LmOutput> {
    let n = model.n_params();
    let m = model.n_residuals();
    if p0.len() != n {
        return Err(Error::invalid("fit", format!("{} initial values for {n} parameters", p0.len())));
    }
    if m < n {
        return Err(Error::invalid("fit", format!("{m} data points cannot determine {n} parameters")));
    }
    let lb = model.lower_bounds();
    let mut p = p0.to_vec();
    project(&mut p, &lb);
    let mut r = vec![0.0; m];
    model.residuals(&p, &mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("levenberg-marquardt", "model is not finite at the initial point"));
    }
    let mut f = cost(&r);
    let initial_residual_norm = (2.0 * f).sqrt();
    let mut jac = DMatrix::zeros(m, n);
    model.jacobian(&p, &mut jac);

    let mut mu = settings.initial_damping;
    let mut nu = 2.0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut converged = f == 0.0;
    let mut iterations = 0;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let dmax = a.diagonal().max();
        if dmax == 0.0 {
            converged = true;
            break;
        }
        let d = a.diagonal().map(|v| v.max(dmax * 1e-15));
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += mu * d[i];
        }
        let Some(chol) = damped.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let h = chol.solve(&(-&g));
        for i in 0..n {
            trial[i] = p[i] + h[i];
        }
        project(&mut trial, &lb);
        let step: Vec<f64> = (0..n).map(|i| trial[i] - p[i]).collect();
        let small_step = step.iter().zip(&p).all(|(s, x)| s.abs() <= settings.xtol * (x.abs() + settings.xtol));

        model.residuals(&trial, &mut r_trial);
        let f_trial = if r_trial.iter().all(|v| v.is_finite()) { cost(&r_trial) } else { f64::INFINITY };
        let sv = DVector::from_column_slice(&step);
        let predicted = -(g.dot(&sv)) - 0.5 * (sv.transpose() * &a * &sv)[(0, 0)];
        let rho = if predicted > 0.0 { (f - f_trial) / predicted } else { -1.0 };

        if f_trial < f && rho > 0.0 {
            let reduction = (f - f_trial) / f;
            p.copy_from_slice(&trial);
            std::mem::swap(&mut r, &mut r_trial);
            f = f_trial;
            model.jacobian(&p, &mut jac);
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if f == 0.0 || reduction < settings.ftol || small_step {
                converged = true;
            }
        } else {
            if small_step {
                converged = true;
            }
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                converged = true;
            }
        }
    }
    let residual_norm = (2.0 * f).sqrt();
    if !converged {
        return Err(Error::numerical(
            "levenberg-marquardt",
            format!("no convergence after {iterations} iterations; residual norm {residual_norm:.6e}"),
        ));
    }
    let (covariance, ill_conditioned) = covariance(&jac, 2.0 * f, m, n);
    let std_errors = (0..n).map(|i| covariance[(i, i)].sqrt()).collect();
    Ok(LmOutput { params: p, covariance, std_errors, residual_norm, initial_residual_norm, iterations, ill_conditioned })
}

/// Parameter covariance from the Jacobian at the solution.
fn covariance(jac: &DMatrix<f64>, ssr: f64, m: usize, n: usize) -> (DMatrix<f64>, bool) {
    let s2 = if m > n { ssr / (m - n) as f64 } else { 0.0 };
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let mut cov = DMatrix::zeros(n, n);
    let mut null_weight = vec![0.0; n];
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if smax == 0.0 || s <= RCOND * smax {
            for i in 0..n {
                null_weight[i] += v_t[(k, i)] * v_t[(k, i)];
            }
            continue;
        }
        let w = s2 / (s * s);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += w * v_t[(k, i)] * v_t[(k, j)];
            }
        }
    }
    // Rank-deficient directions: the undetermined parameters get infinite
    // variance rather than a misleadingly small pseudo-inverse value.
    let mut ill = false;
    for i in 0..n {
        if null_weight[i] > NULL_WEIGHT {
            ill = true;
            for j in 0..n {
                cov[(i, j)] = f64::INFINITY;
                cov[(j, i)] = f64::INFINITY;
            }
        }
    }
    (cov, ill)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Residuals for Exp {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for i in 0..self.x.len() {
                out[i] = p[0] * (-p[1] * self.x[i]).exp() - self.y[i];
            }
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let y = x.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let out = minimize(&Exp { x, y }, &[1.0, 0.1], &LmSettings::default()).unwrap();
        assert!((out.params[0] - 3.0).abs() < 1e-9);
        assert!((out.params[1] - 0.7).abs() < 1e-9);
        assert!(out.residual_norm <= out.initial_residual_norm);
        assert!(!out.ill_conditioned);
    }

    #[test]
    fn degenerate_direction_is_flagged() {
        // Only the product p0·p1 is determined.
        struct Product;
        impl Residuals for Product {
            fn n_params(&self) -> usize {
                2
            }
            fn n_residuals(&self) -> usize {
                3
            }
            fn residuals(&self, p: &[f64], out: &mut [f64]) {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = p[0] * p[1] * (i + 1) as f64 - 2.0 * (i + 1) as f64;
                }
            }
        }
        let out = minimize(&Product, &[1.0, 1.0], &LmSettings::default()).unwrap();
        assert!((out.params[0] * out.params[1] - 2.0).abs() < 1e-9);
        assert!(out.ill_conditioned);
        assert!(out.std_errors.iter().all(|e| e.is_infinite()));
    }

    #[test]
    fn bounds_hold() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = x.iter().map(|t| -2.0 * (-0.3 * t).exp()).collect();
        struct Bounded(Exp);
        impl Residuals for Bounded {
            fn n_params(&self) -> usize {
                2
            }
            fn n_residuals(&self) -> usize {
                self.0.x.len()
            }
            fn residuals(&self, p: &[f64], out: &mut [f64]) {
                self.0.residuals(p, out)
            }
            fn lower_bounds(&self) -> Vec<f64> {
                vec![0.0, 0.0]
            }
        }
        let out = minimize(&Bounded(Exp { x, y }), &[1.0, 0.3], &LmSettings::default()).unwrap();
        assert_eq!(out.params[0], 0.0);
    }
}
