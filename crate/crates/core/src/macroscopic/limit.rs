use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{crystal_prefactor, minimize_coupled, scaled_density, supercell_count, validate_ladder, CoupledOptions, CoupledResult};
use crate::crystal::CrystalGroundState;
use crate::defect::DefectSolver;
use crate::dielectric::DielectricTensor;
use crate::error::{Error, Result};
use crate::fields::{pekar_interaction_with, CoulombKernel, Coupling, Grid};
use crate::multipolaron::{cluster_state, NPolaronFunctional};
use crate::pekar::{box_center, Orbital, PekarFunctional};

/// Boundary-to-peak ratio above which a density is not localized in the macroscopic box.
const BOUNDARY_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacrolimitEntry {
    pub m: f64,
    pub supercell: usize,
    /// m^{d−4}q⁻² F_crys[ν_m].
    pub crystal: f64,
    pub pekar: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub defect_gap: Option<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacrolimitReport {
    pub entries: Vec<MacrolimitEntry>,
    pub pekar: f64,
    pub epsilon: Vec<Vec<f64>>,
    pub boundary_ratio: f64,
    pub decreasing: bool,
    pub final_relative_gap: f64,
    /// Some entry is unconverged.
    pub tainted: bool,
    pub box_cells: f64,
    pub charge: f64,
    pub cell_volume: f64,
}

impl MacrolimitReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,supercell,crystal,pekar,gap,relative_gap,iterations\n");
        for e in &self.entries {
            s += &format!(
                "{},{},{:.12e},{:.12e},{:.6e},{:.6e},{}\n",
                e.m, e.supercell, e.crystal, e.pekar, e.gap, e.relative_gap, e.iterations
            );
        }
        s
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.len() >= 2 && v.windows(2).all(|w| w[1] < w[0])
}

fn relative(gap: f64, reference: f64) -> f64 {
    if reference != 0.0 {
        gap / reference.abs()
    } else {
        gap
    }
}

fn check_box(grid: &Grid, ground: &CrystalGroundState, box_cells: f64) -> Result<()> {
    if !grid.cell().approx_eq(&ground.spec.cell.scaled(box_cells)) {
        return Err(Error::Invalid(format!("state must live on the unit cell scaled by {box_cells}")));
    }
    Ok(())
}

/// gap(m) = |m^{d−4}q⁻²F_crys[−q m³|ψ|²(m·)] − F^P_ε[|ψ|²]| over the ladder, on the periodic macroscopic box.
pub fn macrolimit_check(
    psi: &Orbital,
    ground: &CrystalGroundState,
    eps: &DielectricTensor,
    m_ladder: &[f64],
    box_cells: f64,
    charge: f64,
) -> Result<MacrolimitReport> {
    validate_ladder(m_ladder)?;
    super::validate_charge(charge)?;
    check_box(psi.grid(), ground, box_cells)?;
    let rho = psi.density();
    let d = ground.spec.dim();
    let pekar = pekar_interaction_with(&rho, &Coupling::Dielectric(eps.clone()), CoulombKernel::Periodic)?;
    let boundary_ratio = rho.boundary_ratio();
    let entries: Vec<MacrolimitEntry> = m_ladder
        .par_iter()
        .map(|&m| {
            let l = supercell_count(box_cells, m)?;
            let solver = DefectSolver::new(ground, l)?;
            let nu = scaled_density(&rho, solver.grid(), m, -charge)?;
            let sol = solver.solve(&nu)?;
            let crystal = crystal_prefactor(m, d, charge) * sol.energy;
            let gap = (crystal - pekar).abs();
            Ok(MacrolimitEntry {
                m,
                supercell: l,
                crystal,
                pekar,
                gap,
                relative_gap: relative(gap, pekar),
                iterations: sol.iterations,
                defect_gap: sol.gap,
                converged: boundary_ratio <= BOUNDARY_THRESHOLD,
            })
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = entries.iter().map(|e| e.gap).collect();
    Ok(MacrolimitReport {
        pekar,
        epsilon: eps.matrix().to_vec(),
        boundary_ratio,
        decreasing: strictly_decreasing(&gaps),
        final_relative_gap: entries.last().map(|e| e.relative_gap).unwrap_or(0.0),
        tainted: entries.iter().any(|e| !e.converged),
        entries,
        box_cells,
        charge,
        cell_volume: ground.spec.volume(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PekarLimitEntry {
    pub m: f64,
    pub coupled: f64,
    pub reference: f64,
    pub discrepancy: f64,
    pub relative: f64,
    /// The coupled minimization spread out; `coupled` is then the periodic threshold.
    pub spreading: bool,
    pub result: Option<CoupledResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PekarLimitReport {
    pub particles: usize,
    /// E^per = ∫_Γ V⁰ f^per.
    pub e_per: f64,
    pub cell_volume: f64,
    /// E^P_ε(N) on the macroscopic box.
    pub pekar: f64,
    /// ε = Id: the Pekar side has no minimizer and is reported as its infimum 0.
    pub degenerate: bool,
    pub entries: Vec<PekarLimitEntry>,
    pub decreasing: bool,
    pub final_relative: f64,
}

impl PekarLimitReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,coupled,reference,discrepancy,relative,spreading\n");
        for e in &self.entries {
            s += &format!(
                "{},{:.12e},{:.12e},{:.6e},{:.6e},{}\n",
                e.m, e.coupled, e.reference, e.discrepancy, e.relative, e.spreading
            );
        }
        s
    }
}

/// E^P_ε(N) on `grid` with the periodic kernel.
fn pekar_minimum(grid: &std::sync::Arc<Grid>, n: usize, eps: &DielectricTensor, opts: &CoupledOptions) -> Result<f64> {
    let coupling = Coupling::Dielectric(eps.clone());
    let lmin = grid.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    let w = opts.initial_width.unwrap_or(lmin / 20.0);
    let base = Orbital::gaussian(grid, w, box_center(grid));
    if n == 1 {
        let f = PekarFunctional::new(grid, coupling, CoulombKernel::Periodic)?;
        return Ok(f.minimize(&base, &opts.npolaron.descent)?.0.energy);
    }
    let (rep, _) = opts.npolaron.kernels(grid);
    let f = NPolaronFunctional::with_kernels(
        grid,
        n,
        coupling,
        CoulombKernel::Periodic,
        rep,
        opts.npolaron.convention,
        opts.npolaron.symmetry,
        &opts.npolaron.budget,
    )?;
    let init = cluster_state(&base, n, 2.0 * w, opts.npolaron.symmetry)?;
    Ok(f.minimize(&init, &opts.npolaron.descent)?.0.energy)
}

/// Compares E_m(N) with N·E^per/|Γ| + E^P_ε(N) along the ladder.
pub fn pekar_limit_check(
    ground: &CrystalGroundState,
    n: usize,
    m_ladder: &[f64],
    eps: &DielectricTensor,
    opts: &CoupledOptions,
) -> Result<PekarLimitReport> {
    validate_ladder(m_ladder)?;
    let cell = super::cell_eigenproblem(ground.potential(), m_ladder[0])?;
    let vol = cell.cell_volume;
    let e_per = cell.e_per;
    let degenerate = eps.is_identity();
    let pekar = if degenerate {
        0.0
    } else {
        let l = supercell_count(opts.box_cells, m_ladder[0])?;
        let grid = ground.spec.supercell(l).grid()?.scaled(m_ladder[0]);
        pekar_minimum(&grid, n, eps, opts)?
    };
    let reference = n as f64 * e_per / vol + pekar;
    let entries: Vec<PekarLimitEntry> = m_ladder
        .par_iter()
        .map(|&m| {
            let (coupled, spreading, result) = match minimize_coupled(ground, n, m, opts) {
                Ok(r) => (r.energy, false, Some(r)),
                Err(Error::Spreading { .. }) => {
                    let c = super::cell_eigenproblem(ground.potential(), m)?;
                    (n as f64 * c.eigenvalue / m, true, None)
                }
                Err(e) => return Err(e),
            };
            let discrepancy = (coupled - reference).abs();
            Ok(PekarLimitEntry { m, coupled, reference, discrepancy, relative: relative(discrepancy, reference), spreading, result })
        })
        .collect::<Result<_>>()?;
    let disc: Vec<f64> = entries.iter().map(|e| e.discrepancy).collect();
    Ok(PekarLimitReport {
        particles: n,
        e_per,
        cell_volume: vol,
        pekar,
        degenerate,
        decreasing: strictly_decreasing(&disc),
        final_relative: entries.last().map(|e| e.relative).unwrap_or(0.0),
        entries,
    })
}
