//! Crystal response to a localized external charge: F_crys[ν] and ρ_Q from supercell SCF differences.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal::{scf_ground_state_with, CrystalGroundState, CrystalSpec};
use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{dot3, Grid, PeriodicGreen, ScalarField};

/// Gaussian charge with an optional dipole, placed at the supercell center plus `offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeBlob {
    #[serde(default)]
    pub charge: f64,
    #[serde(default)]
    pub dipole: Vec<f64>,
    pub width: f64,
    #[serde(default)]
    pub offset: Vec<f64>,
}

/// External density ν, with the sign of a nuclear charge.
#[derive(Clone, Debug)]
pub enum DefectDensity {
    Blobs(Vec<ChargeBlob>),
    /// Values on a grid over the supercell; resampled spectrally when the shapes differ.
    Field(ScalarField),
}

fn pad3(v: &[f64]) -> [f64; 3] {
    let mut r = [0.0; 3];
    r[..v.len().min(3)].copy_from_slice(&v[..v.len().min(3)]);
    r
}

/// Band-limited resampling of a periodic field onto a grid over the same cell.
pub fn resample(field: &ScalarField, grid: &Arc<Grid>) -> Result<ScalarField> {
    let src = field.grid();
    if !src.cell().approx_eq(grid.cell()) {
        return Err(Error::CellMismatch);
    }
    if src.shape() == grid.shape() {
        return ScalarField::new(grid.clone(), field.values().to_vec());
    }
    let d = src.dim();
    let mut c: Vec<Complex64> = field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftNd::cached(src.shape()).forward(&mut c);
    let scale = grid.len() as f64 / src.len() as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (i, v) in c.iter().enumerate() {
        let idx = src.multi_index(i);
        let mut f = [0i64; 3];
        let mut keep = true;
        for a in 0..d {
            f[a] = Grid::frequency(idx[a], src.shape()[a]);
            let lim = (src.shape()[a].min(grid.shape()[a]) / 2) as i64;
            keep &= f[a].abs() < lim;
        }
        if keep {
            out[grid.wrap_index(&f[..d])] += v * scale;
        }
    }
    FftNd::cached(grid.shape()).inverse(&mut out);
    ScalarField::new(grid.clone(), out.iter().map(|z| z.re).collect())
}

impl DefectDensity {
    pub fn blob(charge: f64, width: f64, offset: &[f64]) -> ChargeBlob {
        ChargeBlob { charge, dipole: Vec::new(), width, offset: offset.to_vec() }
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> Result<ScalarField> {
        match self {
            DefectDensity::Field(f) => resample(f, grid),
            DefectDensity::Blobs(blobs) => {
                let vol = grid.volume();
                let mut center = [0.0; 3];
                for a in grid.cell().vectors() {
                    for (c, v) in center.iter_mut().zip(a) {
                        *c += 0.5 * v;
                    }
                }
                let o = grid.origin();
                let mut c = vec![Complex64::new(0.0, 0.0); grid.len()];
                grid.for_each_k(|i, k| {
                    let k2 = dot3(&k, &k);
                    let mut s = Complex64::new(0.0, 0.0);
                    for b in blobs {
                        let off = pad3(&b.offset);
                        let p = pad3(&b.dipole);
                        let r = [center[0] + o[0] + off[0], center[1] + o[1] + off[1], center[2] + o[2] + off[2]];
                        let amp = Complex64::new(b.charge, -dot3(&p, &k));
                        s += amp * (-0.5 * b.width * b.width * k2).exp() * Complex64::from_polar(1.0, -dot3(&k, &r));
                    }
                    c[i] = s / vol;
                });
                let shift: Vec<Complex64> = {
                    // Coefficients refer to x measured from the origin; the grid starts at `o`.
                    let mut phase = vec![Complex64::new(0.0, 0.0); grid.len()];
                    grid.for_each_k(|i, k| phase[i] = Complex64::from_polar(1.0, dot3(&k, &o)));
                    phase
                };
                for (v, p) in c.iter_mut().zip(&shift) {
                    *v *= p;
                }
                FftNd::cached(grid.shape()).inverse_unnormalized(&mut c);
                ScalarField::new(grid.clone(), c.iter().map(|z| z.re).collect())
            }
        }
    }

    pub fn scaled(&self, t: f64) -> DefectDensity {
        match self {
            DefectDensity::Field(f) => DefectDensity::Field(f.scaled(t)),
            DefectDensity::Blobs(b) => DefectDensity::Blobs(
                b.iter()
                    .map(|x| ChargeBlob {
                        charge: t * x.charge,
                        dipole: x.dipole.iter().map(|p| t * p).collect(),
                        width: x.width,
                        offset: x.offset.clone(),
                    })
                    .collect(),
            ),
        }
    }

    /// Shifted by a Cartesian vector; fields must shift by whole grid steps.
    pub fn translated(&self, by: &[f64]) -> DefectDensity {
        match self {
            DefectDensity::Blobs(b) => DefectDensity::Blobs(
                b.iter()
                    .map(|x| {
                        let mut off = pad3(&x.offset);
                        for (o, s) in off.iter_mut().zip(by) {
                            *o += s;
                        }
                        ChargeBlob { offset: off[..by.len().max(x.offset.len())].to_vec(), ..x.clone() }
                    })
                    .collect(),
            ),
            DefectDensity::Field(f) => {
                let h = f.grid().spacing();
                let steps: Vec<i64> = by.iter().zip(&h).map(|(s, h)| (s / h).round() as i64).collect();
                DefectDensity::Field(f.shifted(&steps))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DefectDensity::Blobs(b) => b.iter().all(|x| x.charge == 0.0 && x.dipole.iter().all(|&p| p == 0.0)),
            DefectDensity::Field(f) => f.values().iter().all(|&v| v == 0.0),
        }
    }
}

/// Copies a cell-periodic field onto the L-supercell grid.
pub fn tile(field: &ScalarField, grid: &Arc<Grid>) -> Result<ScalarField> {
    let src = field.grid();
    let d = src.dim();
    if grid.dim() != d || (0..d).any(|a| grid.shape()[a] % src.shape()[a] != 0) {
        return Err(Error::GridMismatch);
    }
    let mut idx = [0usize; 3];
    let vals = (0..grid.len())
        .map(|i| {
            let m = grid.multi_index(i);
            for a in 0..d {
                idx[a] = m[a] % src.shape()[a];
            }
            field.values()[src.flat_index(&idx[..d])]
        })
        .collect();
    ScalarField::new(grid.clone(), vals)
}

#[derive(Clone, Debug)]
pub struct DefectSolution {
    /// F_crys[ν] on this supercell.
    pub energy: f64,
    /// ρ_Q = ρ(ν) − ρ(0).
    pub response: ScalarField,
    pub iterations: usize,
    pub gap: Option<f64>,
    /// ρ(ν), usable as a warm start.
    pub density: ScalarField,
}

/// Pristine L-supercell state, reused across defect densities.
pub struct DefectSolver {
    spec: CrystalSpec,
    pristine: CrystalGroundState,
    green: PeriodicGreen,
    supercell: usize,
}

impl DefectSolver {
    pub fn new(ground: &CrystalGroundState, l: usize) -> Result<DefectSolver> {
        if l == 0 {
            return Err(Error::Invalid("supercell size must be positive".into()));
        }
        let spec = ground.spec.supercell(l);
        let grid = spec.grid()?;
        let start = if ground.electrons() > 0 { Some(tile(ground.density(), &grid)?) } else { None };
        let pristine = scf_ground_state_with(&spec, None, start.as_ref())?;
        let green = PeriodicGreen::new(&grid).with_constant(0.0);
        Ok(DefectSolver { spec, pristine, green, supercell: l })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.pristine.grid()
    }

    pub fn supercell(&self) -> usize {
        self.supercell
    }

    pub fn spec(&self) -> &CrystalSpec {
        &self.spec
    }

    pub fn pristine(&self) -> &CrystalGroundState {
        &self.pristine
    }

    /// D_per(f, g) on the supercell, k = 0 omitted.
    pub fn coulomb(&self, f: &[f64], g: &[f64]) -> f64 {
        self.green.energy(f, g)
    }

    pub fn potential(&self, f: &[f64]) -> Vec<f64> {
        self.green.potential(f)
    }

    pub fn solve(&self, nu: &ScalarField) -> Result<DefectSolution> {
        self.solve_from(nu, None)
    }

    /// F_crys[ν] = E(ν) − E(0) − ½D(ν,ν) + ∫V⁰ν, which is the minimum over Q of Tr(H⁰Q) − D(ν,ρ_Q) + ½D(ρ_Q,ρ_Q).
    pub fn solve_from(&self, nu: &ScalarField, init: Option<&ScalarField>) -> Result<DefectSolution> {
        let grid = self.grid();
        if !nu.grid().same_as(grid) {
            return Err(Error::GridMismatch);
        }
        let rho0 = self.pristine.density();
        if nu.values().iter().all(|&v| v == 0.0) {
            return Ok(DefectSolution {
                energy: 0.0,
                response: ScalarField::zeros(grid.clone()),
                iterations: 0,
                gap: self.pristine.gap,
                density: rho0.clone(),
            });
        }
        let state = scf_ground_state_with(&self.spec, Some(nu), Some(init.unwrap_or(rho0))).map_err(|e| match e {
            Error::Metallic(m) => Error::GapClosed(m),
            e => e,
        })?;
        let v0 = self.pristine.potential().values();
        let dv = grid.dv();
        let nu_v0: f64 = nu.values().iter().zip(v0).map(|(a, b)| a * b).sum::<f64>() * dv;
        let energy = state.energy - self.pristine.energy - 0.5 * self.coulomb(nu.values(), nu.values()) + nu_v0;
        let response = state.density().combine(1.0, rho0, -1.0)?;
        Ok(DefectSolution {
            energy,
            response,
            iterations: state.iterations,
            gap: state.gap,
            density: state.density().clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectOptions {
    /// |ΔE(L_max) − ΔE(L_prev)| below which the ladder counts as converged.
    pub ladder_threshold: f64,
    /// Largest admissible |ν| on the supercell boundary relative to its maximum.
    pub boundary_threshold: f64,
}

impl Default for DefectOptions {
    fn default() -> Self {
        DefectOptions { ladder_threshold: 1e-4, boundary_threshold: 1e-8 }
    }
}

pub struct DefectProblem<'a> {
    pub ground: &'a CrystalGroundState,
    pub density: DefectDensity,
    pub ladder: Vec<usize>,
    pub options: DefectOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub supercell: usize,
    pub energy: f64,
    pub iterations: usize,
    pub gap: Option<f64>,
    pub response_norm: f64,
    pub boundary_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// F in ΔE(L) ≈ F + c/L.
    pub value: f64,
    pub slope: f64,
    pub residual: f64,
    pub model: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DefectResponse {
    pub ladder: Vec<LadderEntry>,
    pub extrapolation: Extrapolation,
    /// |ΔE(L_max) − ΔE(L_prev)|.
    pub ladder_difference: f64,
    pub converged: bool,
    /// The extrapolated value lies between or within the spread of the last two entries.
    pub within_spread: bool,
    #[serde(skip)]
    pub responses: Vec<ScalarField>,
}

impl DefectResponse {
    pub fn final_energy(&self) -> f64 {
        self.ladder.last().map(|e| e.energy).unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("supercell,energy,iterations,response_norm\n");
        for e in &self.ladder {
            s += &format!("{},{},{},{}\n", e.supercell, e.energy, e.iterations, e.response_norm);
        }
        s
    }
}

/// F + c/L through the two largest supercells; residual is the misfit over the whole ladder.
fn fit_inverse_l(ladder: &[LadderEntry]) -> Extrapolation {
    let n = ladder.len();
    if n < 2 {
        let v = ladder.first().map(|e| e.energy).unwrap_or(0.0);
        return Extrapolation { value: v, slope: 0.0, residual: 0.0, model: "F + c/L".into() };
    }
    let (p, q) = (&ladder[n - 2], &ladder[n - 1]);
    let (xp, xq) = (1.0 / p.supercell as f64, 1.0 / q.supercell as f64);
    let slope = if (xp - xq).abs() > 0.0 { (p.energy - q.energy) / (xp - xq) } else { 0.0 };
    let value = q.energy - slope * xq;
    let residual = ladder
        .iter()
        .map(|e| (value + slope / e.supercell as f64 - e.energy).powi(2))
        .sum::<f64>()
        .sqrt();
    Extrapolation { value, slope, residual, model: "F + c/L".into() }
}

fn norm_l2(f: &ScalarField) -> f64 {
    (f.values().iter().map(|v| v * v).sum::<f64>() * f.grid().dv()).sqrt()
}

/// ΔE(L) over the ladder, its F + c/L extrapolation and the response densities.
pub fn defect_energy(problem: &DefectProblem) -> Result<DefectResponse> {
    if problem.ladder.is_empty() {
        return Err(Error::Invalid("empty supercell ladder".into()));
    }
    let results: Vec<(LadderEntry, ScalarField)> = problem
        .ladder
        .par_iter()
        .map(|&l| {
            let solver = DefectSolver::new(problem.ground, l)?;
            let nu = problem.density.sample(solver.grid())?;
            let sol = solver.solve(&nu)?;
            let entry = LadderEntry {
                supercell: l,
                energy: sol.energy,
                iterations: sol.iterations,
                gap: sol.gap,
                response_norm: norm_l2(&sol.response),
                boundary_ratio: nu.boundary_ratio(),
            };
            Ok((entry, sol.response))
        })
        .collect::<Result<Vec<_>>>()?;
    let (ladder, responses): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let largest = ladder.iter().max_by_key(|e| e.supercell).unwrap();
    if largest.boundary_ratio > problem.options.boundary_threshold {
        return Err(Error::Invalid(format!(
            "defect density does not decay on the largest supercell: boundary ratio {:.3e}",
            largest.boundary_ratio
        )));
    }
    let extrapolation = fit_inverse_l(&ladder);
    let n = ladder.len();
    let (ladder_difference, within_spread) = if n >= 2 {
        let (a, b) = (ladder[n - 2].energy, ladder[n - 1].energy);
        let spread = (a - b).abs();
        let v = extrapolation.value;
        let between = (v - a.min(b)) >= -1e-12 && (a.max(b) - v) >= -1e-12;
        (spread, between || (v - b).abs() <= spread * (1.0 + 1e-9) + 1e-12)
    } else {
        (0.0, true)
    };
    Ok(DefectResponse {
        converged: ladder_difference <= problem.options.ladder_threshold,
        ladder,
        extrapolation,
        ladder_difference,
        within_spread,
        responses,
    })
}

/// ρ_Q on the largest supercell of the ladder.
pub fn response_density(problem: &DefectProblem) -> Result<ScalarField> {
    let l = *problem.ladder.iter().max().ok_or_else(|| Error::Invalid("empty supercell ladder".into()))?;
    let solver = DefectSolver::new(problem.ground, l)?;
    Ok(solver.solve(&problem.density.sample(solver.grid())?)?.response)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingRow {
    pub separation: usize,
    pub combined: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingTable {
    pub supercell: usize,
    pub first: f64,
    pub second: f64,
    pub rows: Vec<DecouplingRow>,
}

impl DecouplingTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("separation,combined,delta\n");
        for r in &self.rows {
            s += &format!("{},{},{}\n", r.separation, r.combined, r.delta);
        }
        s
    }
}

/// Δ(R) = F[ρ1 + ρ2(· − R a₁)] − F[ρ1] − F[ρ2] on one L-supercell, R in cells along the first axis.
pub fn decoupling_test(
    ground: &CrystalGroundState,
    rho1: &DefectDensity,
    rho2: &DefectDensity,
    separations: &[usize],
    supercell: usize,
) -> Result<DecouplingTable> {
    let rmax = separations.iter().copied().max().unwrap_or(0);
    if 2 * rmax + 2 > supercell {
        return Err(Error::Invalid(format!("supercell of {supercell} cells is too small for separation {rmax}")));
    }
    let solver = DefectSolver::new(ground, supercell)?;
    let grid = solver.grid().clone();
    let a0 = ground.spec.cell.vectors()[0];
    let d = ground.spec.dim();
    let first = solver.solve(&rho1.sample(&grid)?)?.energy;
    let second = solver.solve(&rho2.sample(&grid)?)?.energy;
    let rows = separations
        .par_iter()
        .map(|&r| {
            let shift: Vec<f64> = a0[..d].iter().map(|v| v * r as f64).collect();
            let half: Vec<f64> = shift.iter().map(|v| -0.5 * v).collect();
            let n1 = rho1.translated(&half).sample(&grid)?;
            let n2 = rho2.translated(&half).translated(&shift).sample(&grid)?;
            if rho2.is_zero() {
                return Ok(DecouplingRow { separation: r, combined: first, delta: 0.0 });
            }
            let combined = solver.solve(&n1.combine(1.0, &n2, 1.0)?)?.energy;
            Ok(DecouplingRow { separation: r, combined, delta: combined - first - second })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecouplingTable { supercell, first, second, rows })
}
