//! One-dimensional Bloch dispersion of corrugated unit cells under an
//! effective-index reduction.
//!
//! A cell is cut into equal-thickness slices along the beam axis. Each
//! slice gets an effective index from its mean cross-sectional area ratio
//! (see [`crate::geometry::fill_fraction`]) through a monotone
//! [`IndexMap`]. Only normal-incidence scalar waves are modelled, so the
//! reported gaps carry no TE/TM label.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{TaperGeometry, TaperSpec, UnitCellSpec};
use crate::optics::{stack_matrix, Mat2};
use crate::{Error, Result};

/// Refractive index of the beam material used by the default map.
pub const DEFAULT_MATERIAL_INDEX: f64 = 2.6;

/// Fixed reference half-width (nm) of the default effective-index model:
/// the boundary half-width of the nominal periodic cell.
pub const DEFAULT_REFERENCE_HALF_WIDTH_NM: f64 = 403.2;

/// Gap edges are bisected until the bracket is narrower than this (THz).
pub const EDGE_TOLERANCE_THZ: f64 = 1e-9;

/// `|half_trace| - 1` must exceed this to count as a gap.
const GAP_THRESHOLD: f64 = 1e-12;

/// Monotone map from area fill fraction to effective index.
#[derive(Clone)]
pub struct IndexMap {
    label: String,
    map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for IndexMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndexMap").field("label", &self.label).finish()
    }
}

impl IndexMap {
    /// Wrap a user map. It must satisfy `map(0) = 1` and be nondecreasing;
    /// both are checked on a grid over `f ∈ [0, 4]`.
    pub fn new(label: impl Into<String>, map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let at_zero = map(0.0);
        if (at_zero - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("index map", format!("map(0) = {at_zero}, expected 1")));
        }
        let mut prev = at_zero;
        for i in 1..=4000 {
            let f = i as f64 * 1e-3;
            let n = map(f);
            if !n.is_finite() || n < prev {
                return Err(Error::invalid(
                    "index map",
                    format!("not monotone nondecreasing near fill {f}: {n} < {prev}"),
                ));
            }
            prev = n;
        }
        Ok(IndexMap { label: label.into(), map: Arc::new(map) })
    }

    /// Permittivity volume average `n = sqrt(f·n_mat² + (1 − f))`.
    pub fn volume_average(n_material: f64) -> Result<Self> {
        if !(n_material >= 1.0) {
            return Err(Error::domain("n_mat", n_material, "material index must be >= 1"));
        }
        let eps = n_material * n_material;
        IndexMap::new(format!("volume-average(n_mat={n_material})"), move |f| {
            (f * eps + (1.0 - f)).max(0.0).sqrt()
        })
    }

    pub fn n_eff(&self, fill: f64) -> f64 {
        (self.map)(fill)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Index map plus the fixed half-width that fill fractions are measured
/// against.
#[derive(Debug, Clone)]
pub struct EffectiveIndexModel {
    pub map: IndexMap,
    pub reference_half_width: f64,
}

impl Default for EffectiveIndexModel {
    fn default() -> Self {
        EffectiveIndexModel {
            map: IndexMap::volume_average(DEFAULT_MATERIAL_INDEX).expect("default map is valid"),
            reference_half_width: DEFAULT_REFERENCE_HALF_WIDTH_NM,
        }
    }
}

impl EffectiveIndexModel {
    pub fn new(n_material: f64, reference_half_width: f64) -> Result<Self> {
        if !(reference_half_width > 0.0) {
            return Err(Error::domain("reference_half_width", reference_half_width, "must be positive"));
        }
        Ok(EffectiveIndexModel { map: IndexMap::volume_average(n_material)?, reference_half_width })
    }

    /// Effective index of a uniform section of the given half-width.
    pub fn uniform_index(&self, half_width: f64) -> f64 {
        let r = half_width / self.reference_half_width;
        self.map.n_eff(r * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_eff: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if !(l.thickness > 0.0) {
                return Err(Error::invalid("layer stack", format!("layer {i}: thickness {} must be positive", l.thickness)));
            }
            if !(l.n_eff >= 1.0) {
                return Err(Error::invalid("layer stack", format!("layer {i}: n_eff {} must be >= 1", l.n_eff)));
            }
        }
        if layers.is_empty() {
            return Err(Error::invalid("layer stack", "no layers"));
        }
        Ok(LayerStack { layers })
    }

    /// Two-layer cell.
    pub fn bilayer(n1: f64, d1: f64, n2: f64, d2: f64) -> Result<Self> {
        LayerStack::new(vec![Layer { n_eff: n1, thickness: d1 }, Layer { n_eff: n2, thickness: d2 }])
    }

    /// Quarter-wave bilayer for the design frequency `nu0` (THz).
    pub fn quarter_wave(n1: f64, n2: f64, nu0: f64) -> Result<Self> {
        let lambda = crate::SPEED_OF_LIGHT_NM_THZ / nu0;
        LayerStack::bilayer(n1, lambda / (4.0 * n1), n2, lambda / (4.0 * n2))
    }

    pub fn period(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    pub fn scaled(&self, s: f64) -> LayerStack {
        LayerStack {
            layers: self.layers.iter().map(|l| Layer { n_eff: l.n_eff, thickness: l.thickness * s }).collect(),
        }
    }

    pub fn matrix(&self, nu: f64) -> Mat2 {
        stack_matrix(self.layers.iter().map(|l| (Complex64::new(l.n_eff, 0.0), l.thickness)), nu)
    }
}

/// Slice `[z_lo, z_hi]` of a geometry into `n_slices` equal layers.
pub(crate) fn slice_interval(
    geom: &TaperGeometry,
    z_lo: f64,
    z_hi: f64,
    n_slices: usize,
    model: &EffectiveIndexModel,
) -> Vec<Layer> {
    let d = (z_hi - z_lo) / n_slices as f64;
    (0..n_slices)
        .map(|j| {
            let lo = z_lo + j as f64 * d;
            let hi = if j + 1 == n_slices { z_hi } else { lo + d };
            let fill = geom.integrate_area_ratio(lo, hi, model.reference_half_width) / (hi - lo);
            Layer { n_eff: model.map.n_eff(fill), thickness: hi - lo }
        })
        .collect()
}

fn single_cell_geometry(cell: &UnitCellSpec) -> Result<TaperGeometry> {
    TaperSpec { n_periodic: 1, ..TaperSpec::bare_waveguide(cell.max_halfwidth(), *cell) }.geometry()
}

/// Slice a periodic cell with fill fractions relative to a caller-chosen
/// reference half-width.
pub fn slice_unit_cell_with_reference(
    cell: &UnitCellSpec,
    n_slices: usize,
    model: &EffectiveIndexModel,
) -> Result<LayerStack> {
    if n_slices < 2 {
        return Err(Error::domain("n_slices", n_slices, "need at least 2 slices"));
    }
    let geom = single_cell_geometry(cell)?;
    LayerStack::new(slice_interval(&geom, 0.0, cell.a, n_slices, model))
}

/// Slice a periodic cell with fill fractions relative to the cell's own
/// maximum half-width `2A + g`.
pub fn slice_unit_cell(cell: &UnitCellSpec, n_slices: usize, index_map: &IndexMap) -> Result<LayerStack> {
    let model = EffectiveIndexModel { map: index_map.clone(), reference_half_width: cell.max_halfwidth() };
    slice_unit_cell_with_reference(cell, n_slices, &model)
}

/// Half the trace of the cell transfer matrix at `nu` (THz).
pub fn half_trace(stack: &LayerStack, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::domain("nu", nu, "frequency must be positive"));
    }
    Ok(stack.matrix(nu).half_trace().re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandgap {
    pub lo: f64,
    pub hi: f64,
    pub midgap: f64,
    pub gap_midgap_ratio: f64,
}

impl Bandgap {
    pub fn new(lo: f64, hi: f64) -> Self {
        let midgap = 0.5 * (lo + hi);
        Bandgap { lo, hi, midgap, gap_midgap_ratio: (hi - lo) / midgap }
    }

    pub fn contains(&self, nu: f64) -> bool {
        nu > self.lo && nu < self.hi
    }
}

fn grid(nu_lo: f64, nu_hi: f64, resolution: f64) -> Vec<f64> {
    let n = ((nu_hi - nu_lo) / resolution).ceil().max(1.0) as usize;
    let step = (nu_hi - nu_lo) / n as f64;
    (0..=n).map(|i| if i == n { nu_hi } else { nu_lo + i as f64 * step }).collect()
}

/// Locate maximal frequency intervals with `|half_trace| > 1`.
pub fn find_bandgaps(stack: &LayerStack, nu_lo: f64, nu_hi: f64, resolution: f64) -> Result<Vec<Bandgap>> {
    if !(nu_lo > 0.0) {
        return Err(Error::domain("nu_lo", nu_lo, "frequency must be positive"));
    }
    if !(nu_hi > nu_lo) {
        return Err(Error::domain("nu_hi", nu_hi, format!("must exceed nu_lo = {nu_lo}")));
    }
    if !(resolution > 0.0) {
        return Err(Error::domain("resolution", resolution, "must be positive"));
    }
    if resolution > (nu_hi - nu_lo) / 10.0 {
        return Err(Error::domain(
            "resolution",
            resolution,
            format!("coarser than (nu_hi - nu_lo)/10 = {}; gaps could be missed", (nu_hi - nu_lo) / 10.0),
        ));
    }
    let excess = |nu: f64| stack.matrix(nu).half_trace().re.abs() - 1.0;
    let nus = grid(nu_lo, nu_hi, resolution);
    let inside: Vec<bool> = nus.par_iter().map(|&nu| excess(nu) > GAP_THRESHOLD).collect();

    // Bisect between a point outside and one inside a gap.
    let refine = |mut out: f64, mut inn: f64| {
        while (inn - out).abs() > EDGE_TOLERANCE_THZ {
            let mid = 0.5 * (out + inn);
            if mid == out || mid == inn {
                break;
            }
            if excess(mid) > GAP_THRESHOLD {
                inn = mid;
            } else {
                out = mid;
            }
        }
        0.5 * (out + inn)
    };

    let mut gaps = Vec::new();
    let mut start: Option<f64> = None;
    for i in 0..nus.len() {
        match (inside[i], start) {
            (true, None) => {
                start = Some(if i == 0 { nus[0] } else { refine(nus[i - 1], nus[i]) });
            }
            (false, Some(lo)) => {
                gaps.push(Bandgap::new(lo, refine(nus[i], nus[i - 1])));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(lo) = start {
        gaps.push(Bandgap::new(lo, nu_hi));
    }
    Ok(gaps)
}

/// Scan of the dispersion function and the propagating Bloch points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    /// `(k_z in rad/nm, ν in THz)` for every propagating grid point.
    pub points: Vec<(f64, f64)>,
    pub trace_values: Vec<(f64, f64)>,
}

pub fn band_structure(stack: &LayerStack, nu_lo: f64, nu_hi: f64, resolution: f64) -> Result<BandStructure> {
    if !(nu_lo > 0.0 && nu_hi > nu_lo && resolution > 0.0) {
        return Err(Error::domain("nu_lo", nu_lo, format!("bad scan [{nu_lo}, {nu_hi}] step {resolution}")));
    }
    let period = stack.period();
    let trace_values: Vec<(f64, f64)> = grid(nu_lo, nu_hi, resolution)
        .into_par_iter()
        .map(|nu| (nu, stack.matrix(nu).half_trace().re))
        .collect();
    let points = trace_values
        .iter()
        .filter(|(_, h)| h.abs() <= 1.0)
        .map(|&(nu, h)| (h.acos() / period, nu))
        .collect();
    Ok(BandStructure { points, trace_values })
}

pub fn write_band_scan_csv<W: Write>(bands: &BandStructure, out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "nu_THz,half_trace")?;
    for (nu, h) in &bands.trace_values {
        writeln!(w, "{nu},{h}")?;
    }
    w.flush()
}

pub fn write_gaps_csv<W: Write>(gaps: &[Bandgap], out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "lo_THz,hi_THz,midgap_THz,ratio")?;
    for g in gaps {
        writeln!(w, "{},{},{},{}", g.lo, g.hi, g.midgap, g.gap_midgap_ratio)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_taper, fill_fraction};
    use crate::presets;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn uniform_cell_gives_identical_layers() {
        let cell = UnitCellSpec { a: 300.0, amplitude: 0.0, e: 4, g: 120.0, delta: 54.0 };
        let map = IndexMap::volume_average(2.6).unwrap();
        let stack = slice_unit_cell(&cell, 16, &map).unwrap();
        let n0 = stack.layers[0].n_eff;
        assert!(stack.layers.iter().all(|l| (l.n_eff - n0).abs() < 1e-12));
        assert_relative_eq!(n0, 2.6, epsilon = 1e-12);
    }

    #[test]
    fn two_slices_make_a_bilayer() {
        let map = IndexMap::volume_average(2.6).unwrap();
        let stack = slice_unit_cell(&presets::nominal_periodic_cell(), 2, &map).unwrap();
        assert_eq!(stack.layers.len(), 2);
        // the cell is mirror symmetric about its centre
        assert_relative_eq!(stack.layers[0].n_eff, stack.layers[1].n_eff, epsilon = 1e-12);
        assert!(slice_unit_cell(&presets::nominal_periodic_cell(), 1, &map).is_err());
    }

    #[test]
    fn slices_match_brute_force_fill() {
        let cell = presets::nominal_periodic_cell();
        let map = IndexMap::volume_average(2.6).unwrap();
        let stack = slice_unit_cell(&cell, 64, &map).unwrap();
        assert_relative_eq!(stack.period(), cell.a, epsilon = 1e-6);
        let spec = TaperSpec { n_periodic: 1, ..TaperSpec::bare_waveguide(403.2, cell) };
        let prof = build_taper(&spec, 0.01).unwrap();
        let d = cell.a / 64.0;
        for (j, layer) in stack.layers.iter().enumerate() {
            let f = fill_fraction(&prof, j as f64 * d, (j + 1) as f64 * d, cell.max_halfwidth()).unwrap();
            let n = (f * 2.6 * 2.6 + 1.0 - f).sqrt();
            assert_relative_eq!(layer.n_eff, n, max_relative = 1e-6);
        }
    }

    #[test]
    fn non_monotone_map_rejected() {
        assert!(IndexMap::new("dip", |f| 1.0 + (f * 7.0).sin().abs()).is_err());
        assert!(IndexMap::new("offset", |f| 1.5 + f).is_err());
        assert!(IndexMap::new("linear", |f| 1.0 + f).is_ok());
    }

    #[test]
    fn homogeneous_stack_half_trace_is_cosine() {
        let stack = LayerStack::bilayer(1.7, 120.0, 1.7, 80.0).unwrap();
        for nu in [50.0, 213.0, 377.7] {
            let want = (2.0 * PI * nu * 1.7 * 200.0 / crate::SPEED_OF_LIGHT_NM_THZ).cos();
            assert_relative_eq!(half_trace(&stack, nu).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn quarter_wave_design_point() {
        let stack = LayerStack::quarter_wave(2.0, 1.0, 300.0).unwrap();
        assert_relative_eq!(half_trace(&stack, 300.0).unwrap(), -1.25, epsilon = 1e-12);
        let bilayer_formula = |nu: f64| {
            let k = 2.0 * PI * nu / crate::SPEED_OF_LIGHT_NM_THZ;
            let (p1, p2) = (k * 2.0 * stack.layers[0].thickness, k * stack.layers[1].thickness);
            p1.cos() * p2.cos() - 0.5 * (2.0 + 0.5) * p1.sin() * p2.sin()
        };
        for nu in [12.0, 150.0, 290.0, 455.0] {
            assert_relative_eq!(half_trace(&stack, nu).unwrap(), bilayer_formula(nu), epsilon = 1e-12);
        }
    }

    #[test]
    fn long_wavelength_limit() {
        let stack = slice_unit_cell(&presets::nominal_periodic_cell(), 32, &IndexMap::volume_average(2.6).unwrap()).unwrap();
        assert!((half_trace(&stack, 1e-4).unwrap() - 1.0).abs() < 1e-9);
        assert!(half_trace(&stack, 0.0).is_err());
    }

    #[test]
    fn quarter_wave_gap_ratio() {
        let stack = LayerStack::quarter_wave(2.0, 1.0, 300.0).unwrap();
        let gaps = find_bandgaps(&stack, 10.0, 500.0, 1.0).unwrap();
        let first = gaps[0];
        let want = 4.0 / PI * (1.0f64 / 3.0).asin();
        assert_relative_eq!(first.gap_midgap_ratio, want, epsilon = 1e-6);
        assert_relative_eq!(first.midgap, 300.0, epsilon = 1e-6);
    }

    #[test]
    fn uniform_stack_has_no_gap() {
        let stack = LayerStack::bilayer(1.5, 100.0, 1.5, 100.0).unwrap();
        assert!(find_bandgaps(&stack, 10.0, 2000.0, 1.0).unwrap().is_empty());
    }

    #[test]
    fn weak_contrast_gap_matches_dense_scan() {
        let stack = LayerStack::quarter_wave(1.05, 1.0, 300.0).unwrap();
        let gaps = find_bandgaps(&stack, 250.0, 350.0, 1.0).unwrap();
        assert_eq!(gaps.len(), 1);
        // oracle: dense scan at 1e-4 THz
        let mut lo = f64::NAN;
        let mut hi = f64::NAN;
        let n = 1_000_000;
        for i in 0..=n {
            let nu = 250.0 + 100.0 * i as f64 / n as f64;
            if half_trace(&stack, nu).unwrap().abs() > 1.0 {
                if lo.is_nan() {
                    lo = nu;
                }
                hi = nu;
            }
        }
        assert!((gaps[0].lo - lo).abs() <= 1e-4, "{} vs {lo}", gaps[0].lo);
        assert!((gaps[0].hi - hi).abs() <= 1e-4, "{} vs {hi}", gaps[0].hi);
    }

    #[test]
    fn coarse_resolution_rejected() {
        let stack = LayerStack::quarter_wave(2.0, 1.0, 300.0).unwrap();
        assert!(find_bandgaps(&stack, 100.0, 200.0, 11.0).is_err());
        assert!(find_bandgaps(&stack, 200.0, 100.0, 1.0).is_err());
    }

    #[test]
    fn band_points_satisfy_dispersion() {
        let stack = LayerStack::quarter_wave(2.0, 1.0, 300.0).unwrap();
        let bands = band_structure(&stack, 10.0, 600.0, 2.0).unwrap();
        assert!(!bands.points.is_empty());
        for &(k, nu) in &bands.points {
            let h = half_trace(&stack, nu).unwrap();
            assert_relative_eq!((k * stack.period()).cos(), h, epsilon = 1e-9);
        }
    }

    #[test]
    fn gap_csv_header() {
        let mut buf = Vec::new();
        write_gaps_csv(&[Bandgap::new(1.0, 3.0)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "lo_THz,hi_THz,midgap_THz,ratio\n1,3,2,1\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn unit_determinant(n in proptest::collection::vec((1.0..3.5f64, 5.0..300.0f64), 1..12), nu in 1.0..800.0f64) {
                let stack = LayerStack::new(n.iter().map(|&(n_eff, thickness)| Layer { n_eff, thickness }).collect()).unwrap();
                let m = stack.matrix(nu);
                prop_assert!((m.det() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
                // lossless stacks have a real half trace
                prop_assert!(m.half_trace().im.abs() < 1e-10 * m.half_trace().norm().max(1.0));
            }

            #[test]
            fn scaling_maps_gaps(s in 0.5..2.0f64) {
                let stack = LayerStack::quarter_wave(2.4, 1.3, 300.0).unwrap();
                let base = find_bandgaps(&stack, 50.0, 700.0, 0.5).unwrap();
                let scaled = find_bandgaps(&stack.scaled(s), 50.0 / s, 700.0 / s, 0.5 / s).unwrap();
                prop_assert_eq!(base.len(), scaled.len());
                for (b, g) in base.iter().zip(&scaled) {
                    prop_assert!((b.lo / s - g.lo).abs() < 1e-6);
                    prop_assert!((b.hi / s - g.hi).abs() < 1e-6);
                }
            }

            #[test]
            fn contrast_widens_first_gap(n1 in 1.05..3.0f64, dn in 0.01..1.0f64) {
                let first = |n1: f64| {
                    let stack = LayerStack::quarter_wave(n1, 1.0, 300.0).unwrap();
                    find_bandgaps(&stack, 100.0, 500.0, 0.5).unwrap()[0].gap_midgap_ratio
                };
                prop_assert!(first(n1 + dn) >= first(n1) - 1e-9);
            }
        }
    }
}
