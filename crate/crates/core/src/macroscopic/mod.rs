//! Coupled polaron–crystal model, dielectric extraction and the macroscopic-limit harness.
//!
//! Macroscopic variables x and microscopic variables y = x/m: a supercell of L = box_cells/m unit
//! cells is the macroscopic box scaled by 1/m, with the same grid indices. A macroscopic density ρ
//! of particles with charge q enters the crystal as ν_m(y) = −q m³ρ(my), and the crystal energy
//! carries the prefactor m^{d−4}/q². The limit m → 0 does not depend on q; q = 1 is the physical
//! value, smaller q keeps one-dimensional supercells insulating.

mod cell;
mod coupled;
mod extraction;
mod limit;

use std::sync::Arc;

use crate::defect::resample;
use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};

pub use cell::{cell_eigenproblem, corrector, CellEigenResult};
pub use coupled::{coupled_energy, minimize_coupled, CoupledEnergy, CoupledModel, CoupledOptions, CoupledResult};
pub use extraction::{dipole_probes, extract_dielectric, probe_on_supercell, DielectricExtraction, DielectricFit, DielectricOptions};
pub use limit::{macrolimit_check, pekar_limit_check, MacrolimitEntry, MacrolimitReport, PekarLimitEntry, PekarLimitReport};

/// ν_m(y) = m^CHARGE_EXPONENT ρ(my).
pub const CHARGE_EXPONENT: i32 = 3;

/// m^{d−4}/q², so that the scaled F_crys[ν_m] tends to F^P[ρ] for the 4π/|k|² kernel in every dimension.
pub fn crystal_prefactor(m: f64, d: usize, charge: f64) -> f64 {
    m.powi(d as i32 - 4) / (charge * charge)
}

pub(crate) fn validate_charge(q: f64) -> Result<()> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Invalid(format!("particle charge must be positive, got {q}")));
    }
    Ok(())
}

/// Unit cells per axis of the supercell at mass m.
pub fn supercell_count(box_cells: f64, m: f64) -> Result<usize> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::Invalid(format!("mass must lie in (0, 1], got {m}")));
    }
    if !(box_cells > 0.0) {
        return Err(Error::Invalid(format!("box_cells must be positive, got {box_cells}")));
    }
    let l = box_cells / m;
    let r = l.round();
    if r < 1.0 || (l - r).abs() > 1e-9 * l {
        return Err(Error::Invalid(format!("incommensurate scales: box of {box_cells} cells at m = {m} holds {l} cells")));
    }
    Ok(r as usize)
}

pub fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Invalid("empty m ladder".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("m ladder must be strictly decreasing".into()));
    }
    Ok(())
}

/// sign · m³ ρ(m y) on `micro`; ρ may live on any grid over the macroscopic box.
pub fn scaled_density(rho: &ScalarField, micro: &Arc<Grid>, m: f64, sign: f64) -> Result<ScalarField> {
    let mac = micro.scaled(m);
    let r = resample(rho, &mac)?;
    let s = sign * m.powi(CHARGE_EXPONENT);
    ScalarField::new(micro.clone(), r.values().iter().map(|v| s * v).collect())
}
