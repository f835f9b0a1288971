use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{cell_eigenproblem, crystal_prefactor, supercell_count, CellEigenResult, CHARGE_EXPONENT};
use crate::crystal::CrystalGroundState;
use crate::defect::{tile, DefectSolution, DefectSolver};
use crate::error::{Error, Result};
use crate::fields::{Coupling, Grid, ScalarField};
use crate::multipolaron::{
    cluster_state, tensor_kinetic, tensor_repulsion, ManyBodyWaveFunction, NPolaronFunctional, NPolaronOptions, Repulsion,
};
use crate::optimize;
use crate::pekar::{box_center, Orbital};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupledOptions {
    /// Macroscopic box in unit cells at m = 1.
    pub box_cells: f64,
    /// Charge q seen by the crystal.
    pub charge: f64,
    /// Kinetic/repulsion model and the inner descent.
    pub npolaron: NPolaronOptions,
    /// Width of the starting Gaussian envelope; defaults to 1/20 of the box.
    pub initial_width: Option<f64>,
    pub max_outer: usize,
    /// Relative energy change below which the outer loop may stop.
    pub energy_tolerance: f64,
    /// Euler–Lagrange residual required at the fixed point.
    pub tolerance: f64,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions {
            box_cells: 6.0,
            charge: 1.0,
            npolaron: NPolaronOptions::default(),
            initial_width: None,
            max_outer: 200,
            energy_tolerance: 1e-11,
            tolerance: 1e-5,
        }
    }
}

/// E_m[Ψ] = kinetic + repulsion + m⁻¹∫V⁰(x/m)ρ_Ψ + m^{d−4}q⁻²F_crys[ν_m], and the same energy in microscopic variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledEnergy {
    pub energy: f64,
    pub kinetic: f64,
    pub repulsion: f64,
    pub periodic: f64,
    pub crystal: f64,
    /// F_crys[ν_m] before the prefactor.
    pub crystal_raw: f64,
    pub micro_energy: f64,
    pub rescaling_defect: f64,
    pub crystal_iterations: usize,
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoupledResult {
    pub particles: usize,
    pub m: f64,
    pub supercell: usize,
    pub energy: f64,
    pub parts: CoupledEnergy,
    pub cell: CellEigenResult,
    /// m⁻¹ × lowest band minimum of (1/(2m))(−Δ) + V⁰ (one particle only).
    pub threshold: Option<f64>,
    pub margin: Option<f64>,
    pub binds: Option<bool>,
    pub residual: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    /// Energy resolution at the final state; history is non-increasing up to this amount.
    pub resolution: f64,
    pub reconstruction_defect: f64,
    #[serde(skip)]
    pub psi: Option<ManyBodyWaveFunction>,
    /// Ψ^pol = Ψ / Π_j u(x_j/m).
    #[serde(skip)]
    pub polaron: Vec<Complex64>,
}

/// One mass m: pristine supercell, cell eigenfunction and the macroscopic one-body potentials.
pub struct CoupledModel<'a> {
    ground: &'a CrystalGroundState,
    m: f64,
    n: usize,
    solver: DefectSolver,
    cell: CellEigenResult,
    grid: Arc<Grid>,
    periodic: Vec<f64>,
    potential: Vec<f64>,
    u: Vec<f64>,
    functional: NPolaronFunctional,
    repulsion: Repulsion,
    weight: f64,
    charge: f64,
}

impl<'a> CoupledModel<'a> {
    pub fn new(ground: &'a CrystalGroundState, n: usize, m: f64, opts: &CoupledOptions) -> Result<Self> {
        super::validate_charge(opts.charge)?;
        let l = supercell_count(opts.box_cells, m)?;
        let solver = DefectSolver::new(ground, l)?;
        let cell = cell_eigenproblem(ground.potential(), m)?;
        let micro = solver.grid().clone();
        let grid = micro.scaled(m);
        let potential = tile(ground.potential(), &micro)?.into_values();
        let periodic: Vec<f64> = potential.iter().map(|v| v / m).collect();
        let u = tile(cell.u(), &micro)?.into_values();
        let (repulsion, _) = opts.npolaron.kernels(&grid);
        let functional = NPolaronFunctional::with_kernels(
            &grid,
            n,
            Coupling::Isotropic { alpha: 0.0 },
            crate::fields::CoulombKernel::Periodic,
            repulsion,
            opts.npolaron.convention,
            opts.npolaron.symmetry,
            &opts.npolaron.budget,
        )?;
        let weight = opts.npolaron.convention.weight(n);
        Ok(CoupledModel { ground, m, n, solver, cell, grid, periodic, potential, u, functional, repulsion, weight, charge: opts.charge })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn micro_grid(&self) -> &Arc<Grid> {
        self.solver.grid()
    }

    pub fn cell(&self) -> &CellEigenResult {
        &self.cell
    }

    pub fn supercell(&self) -> usize {
        self.solver.supercell()
    }

    /// m⁻¹ × band minimum; the lowest band of a real periodic Schrödinger operator is smallest at ξ = 0.
    pub fn threshold(&self) -> f64 {
        self.cell.eigenvalue / self.m
    }

    /// Smallest resolvable change of E_m: the crystal term is a difference of supercell totals scaled by m^{d−4}/q².
    pub fn resolution(&self, energy: f64, opts: &CoupledOptions) -> f64 {
        let pre = crystal_prefactor(self.m, self.grid.dim(), self.charge);
        let total = self.solver.pristine().energy.abs().max(1.0);
        let tol = opts.energy_tolerance.max(self.ground.spec.scf.tolerance);
        tol * energy.abs().max(1.0) + 16.0 * f64::EPSILON * pre * total
    }

    fn density(&self, x: &[Complex64], dv: f64) -> Vec<f64> {
        let m = self.grid.len();
        let mut rho = vec![0.0; m];
        for mj in crate::multipolaron::marginals(x, m, self.n, dv) {
            for (a, b) in rho.iter_mut().zip(&mj) {
                *a += self.weight * b;
            }
        }
        rho
    }

    /// ν_m = −q m³ρ_Ψ(m·): the particles carry electron-sign charge.
    fn defect_density(&self, rho: &[f64]) -> Result<ScalarField> {
        let s = -self.charge * self.m.powi(CHARGE_EXPONENT);
        ScalarField::new(self.solver.grid().clone(), rho.iter().map(|v| s * v).collect())
    }

    fn check(&self, psi: &ManyBodyWaveFunction) -> Result<()> {
        if !psi.grid().same_as(&self.grid) {
            return Err(Error::Invalid("state grid is not the macroscopic grid of this mass".into()));
        }
        if psi.particles() != self.n {
            return Err(Error::Invalid(format!("state has {} particles, model {}", psi.particles(), self.n)));
        }
        Ok(())
    }

    fn evaluate_from(&self, psi: &ManyBodyWaveFunction, warm: Option<&ScalarField>) -> Result<(CoupledEnergy, DefectSolution)> {
        self.check(psi)?;
        let x = psi.values();
        let d = self.grid.dim();
        let m = self.m;
        let base = self.functional.raw_energy(x);
        let rho = self.density(x, self.grid.dv());
        let periodic = rho.iter().zip(&self.periodic).map(|(a, b)| a * b).sum::<f64>() * self.grid.dv();
        let nu = self.defect_density(&rho)?;
        let sol = self.solver.solve_from(&nu, warm)?;
        let crystal = crystal_prefactor(m, d, self.charge) * sol.energy;
        let energy = base.kinetic + base.repulsion + periodic + crystal;

        let micro = self.solver.grid();
        let s = m.powf((self.n * d) as f64 / 2.0);
        let phi: Vec<Complex64> = x.iter().map(|v| v * s).collect();
        let t_y = tensor_kinetic(micro, self.n, &phi);
        let rep_y = match self.repulsion {
            Repulsion::Soft { a } => Repulsion::Soft { a: a / m },
            Repulsion::Coulomb => Repulsion::Coulomb,
        };
        let r_y = tensor_repulsion(micro, self.n, rep_y, &phi);
        let rho_y = self.density(&phi, micro.dv());
        let v_y = rho_y.iter().zip(&self.potential).map(|(a, b)| a * b).sum::<f64>() * micro.dv();
        let q = self.charge * m.powi(CHARGE_EXPONENT - d as i32);
        let scale = nu.max_abs().max(1e-300);
        let nu_gap = rho_y.iter().zip(nu.values()).map(|(r, v)| (-q * r - v).abs()).fold(0.0, f64::max) / scale;
        let micro_energy = (t_y / m + r_y + v_y + m.powi(d as i32 - CHARGE_EXPONENT) * sol.energy / (self.charge * self.charge)) / m;
        let rescaling_defect = ((energy - micro_energy).abs() / energy.abs().max(1e-300)).max(nu_gap);
        if rescaling_defect > 1e-10 {
            return Err(Error::Rescaling(rescaling_defect));
        }
        Ok((
            CoupledEnergy {
                energy,
                kinetic: base.kinetic,
                repulsion: base.repulsion,
                periodic,
                crystal,
                crystal_raw: sol.energy,
                micro_energy,
                rescaling_defect,
                crystal_iterations: sol.iterations,
                gap: sol.gap,
            },
            sol,
        ))
    }

    pub fn energy(&self, psi: &ManyBodyWaveFunction) -> Result<CoupledEnergy> {
        Ok(self.evaluate_from(psi, None)?.0)
    }

    /// Gradient of the crystal term with respect to ρ_Ψ: (m q)⁻¹(ρ_Q ⋆ G)(x/m).
    fn response_potential(&self, sol: &DefectSolution) -> Vec<f64> {
        let s = 1.0 / (self.m * self.charge);
        self.solver.potential(sol.response.values()).iter().map(|v| v * s).collect()
    }

    /// HΨ with the crystal response frozen at Ψ: the derivative of E_m along δ is 2 Re⟨δ, HΨ⟩.
    pub fn gradient(&mut self, psi: &ManyBodyWaveFunction) -> Result<Vec<Complex64>> {
        let (_, sol) = self.evaluate_from(psi, None)?;
        let u = self.response_potential(&sol);
        let w: Vec<f64> = self.periodic.iter().zip(&u).map(|(a, b)| self.weight * (a + b)).collect();
        self.functional.set_external(w)?;
        Ok(self.functional.apply_h(psi.values()))
    }

    /// Gaussian envelope times u(x/m), clustered for N > 1.
    pub fn initial_state(&self, opts: &CoupledOptions) -> Result<ManyBodyWaveFunction> {
        let lmin = self.grid.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
        let w = opts.initial_width.unwrap_or(lmin / 20.0);
        let g = Orbital::gaussian(&self.grid, w, box_center(&self.grid));
        let vals: Vec<Complex64> = g.values().iter().zip(&self.u).map(|(a, b)| a * b).collect();
        let base = Orbital::normalized(crate::fields::ComplexField::new(self.grid.clone(), vals)?)?;
        if self.n == 1 {
            return Ok(ManyBodyWaveFunction::from_orbital(&base));
        }
        cluster_state(&base, self.n, 2.0 * w, opts.npolaron.symmetry)
    }

    /// Majorize–minimize: F_crys is concave, so its tangent at the current ν bounds it from above;
    /// each outer step minimizes the resulting one-body problem.
    pub fn minimize(&mut self, init: &ManyBodyWaveFunction, opts: &CoupledOptions) -> Result<CoupledResult> {
        let mut psi = init.clone();
        let (mut parts, mut sol) = self.evaluate_from(&psi, None)?;
        let mut history = vec![parts.energy];
        let mut converged = false;
        let mut residual;
        let mut outer = 0;
        let mut last_change = f64::INFINITY;
        let mut descent = opts.npolaron.descent.clone();
        descent.tolerance = descent.tolerance.min(0.1 * opts.tolerance);
        loop {
            let u = self.response_potential(&sol);
            let w: Vec<f64> = self.periodic.iter().zip(&u).map(|(a, b)| self.weight * (a + b)).collect();
            self.functional.set_external(w)?;
            let hx = self.functional.apply_h(psi.values());
            let dvn = psi.dv();
            let (_, r) = optimize::residual(psi.values(), &hx, dvn);
            residual = optimize::norm(&r, dvn);
            let resolution = self.resolution(parts.energy, opts);
            if residual <= opts.tolerance && last_change.abs() <= resolution {
                converged = true;
                break;
            }
            if outer >= opts.max_outer {
                break;
            }
            let (_, next) = self.functional.minimize(&psi, &descent)?;
            let (p2, s2) = self.evaluate_from(&next, Some(&sol.density))?;
            outer += 1;
            if p2.energy > parts.energy + resolution {
                return Err(Error::Stagnation(format!(
                    "coupled energy rose from {:.12e} to {:.12e} at outer step {outer}",
                    parts.energy, p2.energy
                )));
            }
            last_change = parts.energy - p2.energy;
            history.push(p2.energy);
            psi = next;
            parts = p2;
            sol = s2;
        }
        let u = &self.u;
        let mpts = self.grid.len();
        let mut idx = vec![0usize; self.n];
        let mut polaron = Vec::with_capacity(psi.values().len());
        let mut reconstruction_defect: f64 = 0.0;
        let scale = psi.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (flat, v) in psi.values().iter().enumerate() {
            crate::multipolaron::split_index(flat, mpts, &mut idx);
            let prod: f64 = idx.iter().map(|&i| u[i]).product();
            let p = v / prod;
            reconstruction_defect = reconstruction_defect.max((p * prod - v).norm() / scale);
            polaron.push(p);
        }
        let (threshold, margin, binds) = if self.n == 1 {
            let t = self.threshold();
            let margin = t - parts.energy;
            (Some(t), Some(margin), Some(margin > 10.0 * self.ground.spec.scf.tolerance))
        } else {
            (None, None, None)
        };
        let resolution = self.resolution(parts.energy, opts);
        Ok(CoupledResult {
            particles: self.n,
            m: self.m,
            supercell: self.supercell(),
            energy: parts.energy,
            parts,
            cell: self.cell.clone(),
            threshold,
            margin,
            binds,
            residual,
            outer_iterations: outer,
            converged,
            history,
            resolution,
            reconstruction_defect,
            psi: Some(psi),
            polaron,
        })
    }
}

pub fn coupled_energy(psi: &ManyBodyWaveFunction, ground: &CrystalGroundState, m: f64, opts: &CoupledOptions) -> Result<CoupledEnergy> {
    CoupledModel::new(ground, psi.particles(), m, opts)?.energy(psi)
}

pub fn minimize_coupled(ground: &CrystalGroundState, n: usize, m: f64, opts: &CoupledOptions) -> Result<CoupledResult> {
    let mut model = CoupledModel::new(ground, n, m, opts)?;
    let init = model.initial_state(opts)?;
    let r = model.minimize(&init, opts)?;
    if !r.converged {
        return Err(Error::Stagnation(format!(
            "coupled minimization stopped after {} outer steps (residual {:.3e})",
            r.outer_iterations, r.residual
        )));
    }
    Ok(r)
}
