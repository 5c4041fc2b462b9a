//! Bounded Nelder–Mead simplex search with Latin-hypercube restarts.
//!
//! The search works in unit-cube coordinates; every trial point is clamped
//! to the box, so returned points satisfy the bounds exactly. Restarts run
//! concurrently and are merged in restart order, which keeps results
//! independent of thread scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

/// A function to maximise over a box.
pub trait Objective: Sync {
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn start(&self) -> Vec<f64>;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct SearchSettings {
    pub budget: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Initial simplex edge as a fraction of each parameter range.
    pub initial_step: f64,
    /// Stop a restart once the simplex is smaller than this (unit-cube).
    pub xtol: f64,
    pub ftol: f64,
}

impl SearchSettings {
    pub fn new(budget: usize, seed: u64) -> Self {
        SearchSettings { budget, seed, restarts: 4, initial_step: 0.1, xtol: 1e-9, ftol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `(evaluation index, incumbent objective)` after every evaluation.
    pub trace: Vec<(usize, f64)>,
    pub evaluations: usize,
}

struct Box_ {
    bounds: Vec<(f64, f64)>,
}

impl Box_ {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(&u, &(lo, hi))| {
                let u = u.clamp(0.0, 1.0);
                if u == 0.0 {
                    lo
                } else if u == 1.0 {
                    hi
                } else {
                    (lo + u * (hi - lo)).clamp(lo, hi)
                }
            })
            .collect()
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(&x, &(lo, hi))| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
    }
}

struct RestartOutcome {
    /// Objective per evaluation (−∞ when infeasible).
    values: Vec<f64>,
    best_x: Vec<f64>,
    best: f64,
    start_error: Option<String>,
}

struct Counter<'a, O: Objective> {
    obj: &'a O,
    space: &'a Box_,
    budget: usize,
    values: Vec<f64>,
    best: f64,
    best_x: Vec<f64>,
    first_error: Option<String>,
}

impl<O: Objective> Counter<'_, O> {
    fn exhausted(&self) -> bool {
        self.values.len() >= self.budget
    }

    /// Returns the value to minimise (negated objective).
    fn eval(&mut self, u: &[f64]) -> f64 {
        let x = self.space.to_x(u);
        let v = match self.obj.evaluate(&x) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                if self.first_error.is_none() {
                    self.first_error = Some(e.to_string());
                }
                f64::NEG_INFINITY
            }
        };
        self.values.push(v);
        if v > self.best {
            self.best = v;
            self.best_x = x;
        }
        -v
    }
}

fn nelder_mead<O: Objective>(c: &mut Counter<'_, O>, u0: Vec<f64>, step: f64, xtol: f64, ftol: f64) {
    let d = u0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let f0 = c.eval(&u0);
    simplex.push((u0.clone(), f0));
    for i in 0..d {
        if c.exhausted() {
            return;
        }
        let mut u = u0.clone();
        u[i] = if u[i] + step <= 1.0 { u[i] + step } else { u[i] - step };
        let f = c.eval(&u);
        simplex.push((u, f));
    }
    let clamp = |u: Vec<f64>| u.into_iter().map(|x| x.clamp(0.0, 1.0)).collect::<Vec<f64>>();
    while !c.exhausted() {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .map(|(u, _)| u.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let (fbest, fworst) = (simplex[0].1, simplex[d].1);
        if size < xtol || (fworst - fbest).abs() <= ftol * (fbest.abs() + 1e-300) {
            return;
        }
        let centroid: Vec<f64> =
            (0..d).map(|j| simplex[..d].iter().map(|(u, _)| u[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            clamp(centroid.iter().zip(&simplex[d].0).map(|(c, w)| c + t * (w - c)).collect())
        };
        let ur = along(-1.0);
        let fr = c.eval(&ur);
        if fr < simplex[0].1 {
            if c.exhausted() {
                simplex[d] = (ur, fr);
                return;
            }
            let ue = along(-2.0);
            let fe = c.eval(&ue);
            simplex[d] = if fe < fr { (ue, fe) } else { (ur, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (ur, fr);
            continue;
        }
        if c.exhausted() {
            return;
        }
        let (uc, fc) = if fr < simplex[d].1 {
            let u = along(-0.5);
            let f = c.eval(&u);
            (u, f)
        } else {
            let u = along(0.5);
            let f = c.eval(&u);
            (u, f)
        };
        if fc < simplex[d].1.min(fr) {
            simplex[d] = (uc, fc);
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            if c.exhausted() {
                return;
            }
            let u: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
            let f = c.eval(&u);
            *v = (u, f);
        }
    }
}

/// Latin-hypercube sample of `n` points in the unit cube.
fn latin_hypercube(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            pts[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Maximise `obj` within its bounds.
pub fn maximize<O: Objective>(obj: &O, settings: &SearchSettings) -> Result<SearchResult> {
    let bounds = obj.bounds();
    let d = bounds.len();
    if d == 0 {
        return Err(Error::invalid("optimization problem", "no free parameters"));
    }
    if let Some((i, b)) = bounds.iter().enumerate().find(|(_, b)| !(b.0 < b.1)) {
        return Err(Error::invalid("optimization problem", format!("parameter {i}: bounds {b:?} are empty")));
    }
    if settings.budget < d + 1 {
        return Err(Error::domain("budget", settings.budget, format!("need at least {} evaluations", d + 1)));
    }
    let space = Box_ { bounds };
    let restarts = settings.restarts.clamp(1, (settings.budget / (d + 1)).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut starts = vec![space.to_u(&obj.start())];
    starts.extend(latin_hypercube(restarts - 1, d, &mut rng));

    let per = settings.budget / restarts;
    let outcomes: Vec<RestartOutcome> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, u0)| {
            let budget = if r + 1 == restarts { settings.budget - per * (restarts - 1) } else { per };
            let mut c = Counter {
                obj,
                space: &space,
                budget,
                values: Vec::with_capacity(budget),
                best: f64::NEG_INFINITY,
                best_x: space.to_x(&u0),
                first_error: None,
            };
            nelder_mead(&mut c, u0, settings.initial_step, settings.xtol, settings.ftol);
            let start_error = if c.values[0].is_finite() { None } else { c.first_error.clone() };
            RestartOutcome { values: c.values, best_x: c.best_x, best: c.best, start_error }
        })
        .collect();

    if outcomes.iter().all(|o| o.start_error.is_some()) {
        let reasons: Vec<String> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| format!("start {i}: {}", o.start_error.as_deref().unwrap_or("non-finite objective")))
            .collect();
        return Err(Error::invalid("optimization problem", format!("every start is infeasible; {}", reasons.join("; "))));
    }

    let mut trace = Vec::new();
    let mut incumbent = f64::NEG_INFINITY;
    let mut k = 0;
    for o in &outcomes {
        for &v in &o.values {
            k += 1;
            incumbent = incumbent.max(v);
            if incumbent.is_finite() {
                trace.push((k, incumbent));
            }
        }
    }
    // Strict comparison: the lowest restart index wins ties.
    let mut best: Option<&RestartOutcome> = None;
    for o in &outcomes {
        if o.best.is_finite() && best.is_none_or(|b| o.best > b.best) {
            best = Some(o);
        }
    }
    let best = best.ok_or_else(|| Error::numerical("optimize", "no feasible evaluation"))?;
    Ok(SearchResult { x: best.best_x.clone(), objective: best.best, trace, evaluations: k })
}
