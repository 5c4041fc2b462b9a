//! Reference device and readout parameters bundled for one-line runs.

use crate::geometry::{TaperCell, TaperSpec, UnitCellSpec};
use crate::readout::{Convention, DarkWindow, ReadoutModel};

/// Periodic reflector cell: a = 401.3 nm, A = 171.3 nm, e = 6, g = 60.6 nm,
/// δ = 54°.
pub fn nominal_periodic_cell() -> UnitCellSpec {
    UnitCellSpec { a: 401.3, amplitude: 171.3, e: 6, g: 60.6, delta: 54.0 }
}

/// Optimised five-cell taper followed by 13 periodic cells (18 cells total).
pub fn nominal_taper() -> TaperSpec {
    let a = [108.4, 247.2, 299.2, 326.7, 401.3];
    let x_plus = [339.1, 359.2, 371.4, 383.5, 403.2];
    let x_minus = [303.2, 216.1, 167.3, 137.7, 108.5];
    TaperSpec {
        cells: (0..5)
            .map(|i| TaperCell { a: a[i], x_plus: x_plus[i], x_minus: x_minus[i] })
            .collect(),
        e: 6,
        waveguide_half_width: 303.2,
        n_periodic: 13,
        periodic_cell: nominal_periodic_cell(),
    }
}

/// Untapered reflector: identical periodic cells butted directly against
/// the waveguide.
pub fn untapered_reflector(n_periodic: usize) -> TaperSpec {
    TaperSpec { n_periodic, ..TaperSpec::bare_waveguide(303.2, nominal_periodic_cell()) }
}

/// Single-shot readout parameters: λ_b = 105 kcps, λ_d = 490 cps,
/// a′ = 0.768, a″ = 0.232, γ′ = 1/0.48 µs⁻¹, γ″ = 1/3.15 µs⁻¹, T = 10 µs.
pub fn nominal_readout() -> ReadoutModel {
    ReadoutModel {
        lambda_b: 105e3,
        lambda_d: 490.0,
        a_prime: 0.768,
        a_dprime: 0.232,
        gamma_prime: 1.0 / 0.48,
        gamma_dprime: 1.0 / 3.15,
        t_window: 10.0,
        convention: Convention::KernelNormalized,
        dark_window: DarkWindow::Single,
        k_max: crate::readout::DEFAULT_K_MAX,
    }
}
