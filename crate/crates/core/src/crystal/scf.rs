use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::bands::{band_density, band_kinetic, bloch_bands, fermi_level, BlochState};
use super::spec::CrystalSpec;
use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{Grid, PeriodicGreen, ScalarField};

/// Self-consistent rHF state of the periodic crystal.
#[derive(Clone, Debug, Serialize)]
pub struct CrystalGroundState {
    pub spec: CrystalSpec,
    #[serde(skip)]
    grid: Arc<Grid>,
    #[serde(skip)]
    pub bands: Vec<BlochState>,
    /// None when there are no electrons.
    pub fermi_level: Option<f64>,
    pub gap: Option<f64>,
    #[serde(skip)]
    density: ScalarField,
    #[serde(skip)]
    potential: ScalarField,
    #[serde(skip)]
    external: ScalarField,
    /// Energy of one cell of `spec`, including the nuclear self-interaction.
    pub energy: f64,
    pub kinetic: f64,
    pub hartree: f64,
    pub residuals: Vec<f64>,
    /// Energy of the filled state at each iteration.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub cell_volume: f64,
}

impl CrystalGroundState {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// ρ⁰_per.
    pub fn density(&self) -> &ScalarField {
        &self.density
    }

    /// V⁰_per = (ρ⁰ − μ)⋆G with zero cell mean.
    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    /// μ⁰_per plus any external density the state was computed with.
    pub fn external(&self) -> &ScalarField {
        &self.external
    }

    pub fn electrons(&self) -> usize {
        self.spec.electrons
    }

    /// Bottom of the lowest band.
    pub fn band_minimum(&self) -> f64 {
        self.bands.iter().map(|b| b.energies[0]).fold(f64::INFINITY, f64::min)
    }

    /// Density of the filling of the stored bands, which diagonalize −½Δ + V⁰.
    pub fn refill(&self) -> Result<ScalarField> {
        if self.spec.electrons == 0 {
            return Ok(ScalarField::zeros(self.grid.clone()));
        }
        band_density(&self.bands, self.spec.electrons, &self.grid)
    }

    /// One application of the SCF map to ρ⁰: (ρ_out, energy of the filled state).
    pub fn scf_map(&self) -> Result<(ScalarField, f64)> {
        let ctx = Context::new(&self.spec, &self.external)?;
        let it = ctx.step(self.density.values())?;
        Ok((ScalarField::new(self.grid.clone(), it.rho)?, it.energy))
    }

    /// ‖refill − ρ⁰‖_{L²(Γ)}.
    pub fn euler_lagrange_residual(&self) -> Result<f64> {
        let r = self.refill()?;
        Ok(l2_distance(r.values(), self.density.values(), self.grid.dv()))
    }
}

struct Context<'a> {
    spec: &'a CrystalSpec,
    grid: Arc<Grid>,
    external: Vec<f64>,
    green: PeriodicGreen,
}

struct Iterate {
    rho: Vec<f64>,
    energy: f64,
}

impl<'a> Context<'a> {
    fn new(spec: &'a CrystalSpec, external: &ScalarField) -> Result<Self> {
        let grid = external.grid().clone();
        Ok(Context { spec, grid: grid.clone(), external: external.values().to_vec(), green: PeriodicGreen::new(&grid).with_constant(0.0) })
    }

    fn potential(&self, rho: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = rho.iter().zip(&self.external).map(|(r, m)| r - m).collect();
        let mut v = self.green.potential(&f);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        v
    }

    fn hartree(&self, rho: &[f64]) -> f64 {
        let f: Vec<f64> = rho.iter().zip(&self.external).map(|(r, m)| r - m).collect();
        0.5 * self.green.energy(&f, &f)
    }

    fn bands(&self, v: Vec<f64>) -> Result<Vec<BlochState>> {
        let field = ScalarField::new(self.grid.clone(), v)?;
        bloch_bands(&field, &self.spec.cell, self.spec.cutoff, &self.spec.kpoints, self.spec.bands())
    }

    fn step(&self, rho_in: &[f64]) -> Result<Iterate> {
        let z = self.spec.electrons;
        let bands = self.bands(self.potential(rho_in))?;
        if z == 0 {
            let rho = vec![0.0; self.grid.len()];
            let energy = self.hartree(&rho);
            return Ok(Iterate { rho, energy });
        }
        fermi_level(&bands, z)?;
        let rho = band_density(&bands, z, &self.grid)?.into_values();
        let kinetic = band_kinetic(&bands, z);
        let hartree = self.hartree(&rho);
        Ok(Iterate { rho, energy: kinetic + hartree })
    }
}

fn l2_distance(a: &[f64], b: &[f64], dv: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * dv).sqrt()
}

fn kerker(grid: &Grid, f: &mut [f64], k0: f64) {
    let plan = FftNd::cached(grid.shape());
    let mut c: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut c);
    grid.for_each_k(|i, k| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 > 0.0 {
            c[i] *= k2 / (k2 + k0 * k0);
        }
    });
    plan.inverse(&mut c);
    for (v, z) in f.iter_mut().zip(&c) {
        *v = z.re;
    }
}

struct Mixer {
    beta: f64,
    depth: usize,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Mixer {
    fn next(&mut self, x: &[f64], f: &[f64]) -> Vec<f64> {
        self.xs.push(x.to_vec());
        self.fs.push(f.to_vec());
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let m = self.xs.len() - 1;
        if self.depth == 0 || m == 0 {
            return x.iter().zip(f).map(|(a, b)| a + self.beta * b).collect();
        }
        let n = x.len();
        let df = DMatrix::from_fn(n, m, |i, j| self.fs[j + 1][i] - self.fs[j][i]);
        let dx = DMatrix::from_fn(n, m, |i, j| self.xs[j + 1][i] - self.xs[j][i]);
        let fv = DVector::from_column_slice(f);
        let mut normal = df.transpose() * &df;
        let scale = normal.diagonal().max().max(1e-300);
        for i in 0..m {
            normal[(i, i)] += 1e-12 * scale;
        }
        let gamma = match normal.lu().solve(&(df.transpose() * &fv)) {
            Some(g) => g,
            None => return x.iter().zip(f).map(|(a, b)| a + self.beta * b).collect(),
        };
        let xbar = DVector::from_column_slice(x) - dx * &gamma;
        let fbar = fv - df * &gamma;
        (xbar + fbar * self.beta).iter().copied().collect()
    }

    fn restart(&mut self) {
        self.xs.clear();
        self.fs.clear();
        self.beta = (0.5 * self.beta).max(0.01);
    }
}

/// Ground state with an additional external density ν (nuclear sign) and an optional starting density.
pub fn scf_ground_state_with(
    spec: &CrystalSpec,
    extra: Option<&ScalarField>,
    init: Option<&ScalarField>,
) -> Result<CrystalGroundState> {
    spec.validate()?;
    let grid = spec.grid()?;
    let mut external = spec.nuclear_density(&grid)?;
    if let Some(nu) = extra {
        if nu.grid().shape() != grid.shape() || !nu.grid().cell().approx_eq(grid.cell()) {
            return Err(Error::GridMismatch);
        }
        external = external.combine(1.0, nu, 1.0)?;
    }
    let ctx = Context::new(spec, &external)?;
    let z = spec.electrons;
    let controls = &spec.scf;
    let mut rho_in = match init {
        Some(r) => {
            if r.grid().shape() != grid.shape() {
                return Err(Error::GridMismatch);
            }
            r.values().to_vec()
        }
        None => vec![z as f64 / grid.volume(); grid.len()],
    };
    let mut residuals = Vec::new();
    let mut energies = Vec::new();
    let mut mixer = Mixer { beta: controls.mixing, depth: controls.anderson_depth, xs: Vec::new(), fs: Vec::new() };
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    let mut restarts = 0;
    let mut iterations = 0;
    let rho0 = loop {
        let it = ctx.step(&rho_in).map_err(|e| match e {
            Error::Metallic(m) => Error::Metallic(format!("{m} at SCF iteration {iterations}")),
            e => e,
        })?;
        iterations += 1;
        let res = l2_distance(&it.rho, &rho_in, grid.dv());
        residuals.push(res);
        energies.push(it.energy);
        if z == 0 || res <= controls.tolerance {
            break it.rho;
        }
        if iterations >= controls.max_iterations {
            return Err(Error::ScfNotConverged { iterations, residual: res });
        }
        if res < best {
            best = res;
            best_at = iterations;
        } else if iterations - best_at >= controls.stagnation_window {
            mixer.restart();
            restarts += 1;
            best_at = iterations;
        }
        let mut f: Vec<f64> = it.rho.iter().zip(&rho_in).map(|(a, b)| a - b).collect();
        if controls.kerker > 0.0 {
            kerker(&grid, &mut f, controls.kerker);
        }
        rho_in = mixer.next(&rho_in, &f);
    };
    let v0 = ctx.potential(&rho0);
    let bands = ctx.bands(v0.clone())?;
    let (edges, kinetic, hartree) = if z == 0 {
        (None, 0.0, ctx.hartree(&rho0))
    } else {
        let edges = fermi_level(&bands, z)?;
        let refill = band_density(&bands, z, &grid)?;
        (Some(edges), band_kinetic(&bands, z), ctx.hartree(refill.values()))
    };
    Ok(CrystalGroundState {
        spec: spec.clone(),
        grid: grid.clone(),
        bands,
        fermi_level: edges.map(|e| e.0),
        gap: edges.map(|e| e.1),
        density: ScalarField::new(grid.clone(), rho0)?,
        potential: ScalarField::new(grid.clone(), v0)?,
        external,
        energy: kinetic + hartree,
        kinetic,
        hartree,
        residuals,
        energies,
        iterations,
        restarts,
        cell_volume: spec.volume(),
    })
}

pub fn scf_ground_state(spec: &CrystalSpec) -> Result<CrystalGroundState> {
    scf_ground_state_with(spec, None, None)
}

/// One application of the fixed-point map ρ_in ↦ ρ_out; returns ρ_out and ‖ρ_out − ρ_in‖_{L²(Γ)}.
pub fn scf_step(spec: &CrystalSpec, rho_in: &ScalarField) -> Result<(ScalarField, f64)> {
    spec.validate()?;
    let grid = rho_in.grid().clone();
    let external = spec.nuclear_density(&grid)?;
    let ctx = Context::new(spec, &external)?;
    let it = ctx.step(rho_in.values())?;
    let res = l2_distance(&it.rho, rho_in.values(), grid.dv());
    Ok((ScalarField::new(grid, it.rho)?, res))
}

/// (kinetic + ½D_G(ρ − μ)) of the state filled from V[ρ].
pub fn cell_energy(spec: &CrystalSpec, rho: &ScalarField) -> Result<f64> {
    let external = spec.nuclear_density(rho.grid())?;
    Ok(Context::new(spec, &external)?.step(rho.values())?.energy)
}
