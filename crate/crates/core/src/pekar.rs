//! Single-polaron Pekar functional E[ψ] = ½∫|∇ψ|² + F^P[|ψ|²] and its minimization.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dielectric::DielectricTensor;
use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{ComplexField, Convolver, CoulombKernel, Grid, ScalarField};
use crate::optimize::{self, DescentOptions, SphereObjective};

pub use crate::fields::Coupling;

/// Normalized one-body wave function.
#[derive(Clone, Debug)]
pub struct Orbital {
    field: ComplexField,
    norm: f64,
}

impl Orbital {
    /// Rejects states whose L² norm differs from 1 by more than 1e-12.
    pub fn new(field: ComplexField) -> Result<Orbital> {
        let norm = field.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Orbital { field, norm })
    }

    /// Explicitly rescales to unit norm.
    pub fn normalized(field: ComplexField) -> Result<Orbital> {
        let n = field.norm();
        if !(n > 0.0) {
            return Err(Error::NotNormalized(n));
        }
        let grid = field.grid().clone();
        let values = field.into_values().into_iter().map(|v| v / n).collect();
        Orbital::new(ComplexField::new(grid, values)?)
    }

    /// Gaussian whose density has standard deviation `width`.
    pub fn gaussian(grid: &Arc<Grid>, width: f64, center: [f64; 3]) -> Orbital {
        let f = ComplexField::from_fn(grid.clone(), |x| {
            let r2: f64 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum();
            Complex64::new((-r2 / (4.0 * width * width)).exp(), 0.0)
        });
        Orbital::normalized(f).expect("Gaussian has positive norm")
    }

    /// ψ ∝ e^{−β|x − c|} in 3-D, represented by its Fourier transform
    /// restricted to the grid band (pointwise sampling would alias the cusp).
    pub fn hydrogenic(grid: &Arc<Grid>, beta: f64, center: [f64; 3]) -> Result<Orbital> {
        if grid.dim() != 3 {
            return Err(Error::Invalid("hydrogenic orbitals are 3-D".into()));
        }
        let o = grid.origin();
        let shift = [center[0] - o[0], center[1] - o[1], center[2] - o[2]];
        let amp = (beta.powi(3) / PI).sqrt() * 8.0 * PI * beta / grid.dv();
        let mut c = vec![Complex64::new(0.0, 0.0); grid.len()];
        grid.for_each_k(|i, k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let phase = -(k[0] * shift[0] + k[1] * shift[1] + k[2] * shift[2]);
            c[i] = Complex64::from_polar(amp / (beta * beta + k2).powi(2), phase);
        });
        FftNd::cached(grid.shape()).inverse(&mut c);
        Orbital::normalized(ComplexField::new(grid.clone(), c)?)
    }

    /// Pointwise samples of e^{−β|x − c|}, normalized on the grid.
    pub fn hydrogenic_sampled(grid: &Arc<Grid>, beta: f64, center: [f64; 3]) -> Orbital {
        let f = ComplexField::from_fn(grid.clone(), |x| {
            let r: f64 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>().sqrt();
            Complex64::new((-beta * r).exp(), 0.0)
        });
        Orbital::normalized(f).expect("positive norm")
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.field.grid()
    }

    pub fn values(&self) -> &[Complex64] {
        self.field.values()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn density(&self) -> ScalarField {
        self.field.density()
    }

    pub fn shifted(&self, shift: &[i64]) -> Orbital {
        Orbital { field: self.field.shifted(shift), norm: self.norm }
    }

    /// Continuous periodic translation by `d` through Fourier phases.
    pub fn translated(&self, d: [f64; 3]) -> Orbital {
        let grid = self.grid().clone();
        let plan = FftNd::cached(grid.shape());
        let mut c = self.values().to_vec();
        plan.forward(&mut c);
        grid.for_each_k(|i, k| {
            c[i] *= Complex64::from_polar(1.0, -(k[0] * d[0] + k[1] * d[1] + k[2] * d[2]));
        });
        plan.inverse(&mut c);
        Orbital { field: ComplexField::new(grid, c).unwrap(), norm: self.norm }
    }

    /// Center of |ψ|² with periodic (circular-mean) coordinates.
    pub fn center(&self) -> [f64; 3] {
        let grid = self.grid();
        let rho = self.density();
        let mut out = grid.origin();
        let lengths = grid.lengths();
        for ax in 0..grid.dim() {
            let n = grid.shape()[ax];
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, v) in rho.values().iter().enumerate() {
                let j = grid.multi_index(i)[ax];
                acc += v * Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
            }
            let frac = acc.arg().rem_euclid(2.0 * PI) / (2.0 * PI);
            out[ax] += frac * lengths[ax];
        }
        out
    }

    /// ∫|ψ|⁴, the inverse participation ratio.
    pub fn participation(&self) -> f64 {
        optimize::participation(self.values(), self.grid().dv())
    }
}

/// Energy decomposition and stationarity data; serialized with the documented record keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PekarResult {
    pub energy: f64,
    pub kinetic: f64,
    pub interaction: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted energies along the descent.
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Pekar functional on a fixed grid, with the polarization kernel precomputed.
pub struct PekarFunctional {
    grid: Arc<Grid>,
    coupling: Coupling,
    kernel: CoulombKernel,
    conv: Convolver,
    k2: Vec<f64>,
}

impl PekarFunctional {
    pub fn new(grid: &Arc<Grid>, coupling: Coupling, kernel: CoulombKernel) -> Result<PekarFunctional> {
        let conv = Convolver::pekar(grid, kernel, &coupling)?;
        Ok(PekarFunctional { grid: grid.clone(), coupling, kernel, conv, k2: grid.k2_table() })
    }

    pub fn dielectric(grid: &Arc<Grid>, eps: &DielectricTensor) -> Result<PekarFunctional> {
        PekarFunctional::new(grid, Coupling::Dielectric(eps.clone()), CoulombKernel::default_for(grid))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn kernel(&self) -> CoulombKernel {
        self.kernel
    }

    fn parts(&self, x: &[Complex64], want_h: bool) -> (f64, f64, Option<Vec<Complex64>>) {
        let plan = FftNd::cached(self.grid.shape());
        let dv = self.grid.dv();
        let n = x.len() as f64;
        let mut c = x.to_vec();
        plan.forward(&mut c);
        let t = 0.5 * c.iter().zip(&self.k2).map(|(v, k)| k * v.norm_sqr()).sum::<f64>() * dv / n;
        let rho: Vec<f64> = x.iter().map(|v| v.norm_sqr()).collect();
        let u = self.conv.apply(&rho);
        let f = 0.5 * rho.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() * dv;
        let h = want_h.then(|| {
            for (v, k) in c.iter_mut().zip(&self.k2) {
                *v *= 0.5 * k;
            }
            plan.inverse(&mut c);
            for ((hv, xv), uv) in c.iter_mut().zip(x).zip(&u) {
                *hv += uv * xv;
            }
            c
        });
        (t, f, h)
    }

    /// (T, F) for arbitrary grid values.
    pub fn raw_energy(&self, x: &[Complex64]) -> (f64, f64) {
        let (t, f, _) = self.parts(x, false);
        (t, f)
    }

    /// Hψ = −½Δψ + Uψ with U = ρ ⋆ (K_ε − K_1); dE = 2Re⟨Hψ, δψ⟩.
    pub fn apply_h(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.parts(x, true).2.unwrap()
    }

    /// Effective potential U of the density of ψ.
    pub fn potential(&self, psi: &Orbital) -> ScalarField {
        let rho = psi.density();
        ScalarField::new(self.grid.clone(), self.conv.apply(rho.values())).unwrap()
    }

    pub fn evaluate(&self, psi: &Orbital) -> Result<PekarResult> {
        self.check(psi)?;
        let (t, f, h) = self.parts(psi.values(), true);
        let dv = self.grid.dv();
        let (lambda, r) = optimize::residual(psi.values(), h.as_ref().unwrap(), dv);
        Ok(PekarResult {
            energy: t + f,
            kinetic: t,
            interaction: f,
            lambda,
            residual: optimize::norm(&r, dv),
            iterations: 0,
            converged: false,
            history: Vec::new(),
        })
    }

    /// (λ, ‖Hψ − λψ‖).
    pub fn residual(&self, psi: &Orbital) -> Result<(f64, f64)> {
        let r = self.evaluate(psi)?;
        Ok((r.lambda, r.residual))
    }

    pub fn minimize(&self, init: &Orbital, opts: &DescentOptions) -> Result<(PekarResult, Orbital)> {
        self.check(init)?;
        let mut obj = PekarObjective { f: self };
        let out = optimize::minimize_on_sphere(&mut obj, init.values().to_vec(), opts)?;
        let psi = Orbital::normalized(ComplexField::new(self.grid.clone(), out.x)?)?;
        let mut res = self.evaluate(&psi)?;
        res.iterations = out.iterations;
        res.converged = res.residual <= opts.tolerance;
        res.history = out.energies;
        Ok((res, psi))
    }

    fn check(&self, psi: &Orbital) -> Result<()> {
        crate::fields::check_same(psi.grid(), &self.grid)
    }

    /// Preconditioner 1/(1 + |k|²/2).
    pub(crate) fn precondition_values(&self, r: &mut [Complex64]) {
        precondition(&self.grid, &self.k2, r);
    }
}

pub(crate) fn precondition(grid: &Grid, k2: &[f64], r: &mut [Complex64]) {
    let plan = FftNd::cached(grid.shape());
    plan.forward(r);
    for (v, k) in r.iter_mut().zip(k2) {
        *v /= 1.0 + 0.5 * k;
    }
    plan.inverse(r);
}

struct PekarObjective<'a> {
    f: &'a PekarFunctional,
}

impl SphereObjective for PekarObjective<'_> {
    fn energy(&mut self, x: &[Complex64]) -> f64 {
        let (t, f) = self.f.raw_energy(x);
        t + f
    }

    fn energy_and_h(&mut self, x: &[Complex64]) -> (f64, Vec<Complex64>) {
        let (t, f, h) = self.f.parts(x, true);
        (t + f, h.unwrap())
    }

    fn precondition(&self, r: &mut [Complex64]) {
        self.f.precondition_values(r);
    }

    fn dv(&self) -> f64 {
        self.f.grid.dv()
    }
}

/// E = ½∫|∇ψ|² + F^P_ε[|ψ|²] with the default kernel of the grid.
pub fn pekar_energy(psi: &Orbital, eps: &DielectricTensor) -> Result<PekarResult> {
    PekarFunctional::dielectric(psi.grid(), eps)?.evaluate(psi)
}

pub fn choquard_residual(psi: &Orbital, eps: &DielectricTensor) -> Result<(f64, f64)> {
    PekarFunctional::dielectric(psi.grid(), eps)?.residual(psi)
}

pub fn minimize_pekar(init: &Orbital, eps: &DielectricTensor, opts: &DescentOptions) -> Result<(PekarResult, Orbital)> {
    PekarFunctional::dielectric(init.grid(), eps)?.minimize(init, opts)
}

/// Density width of the Gaussian trial minimizer for 3-D coupling α: s = 3√π/(2α).
pub fn initial_width(alpha: f64, dim: usize) -> f64 {
    match dim {
        3 => 1.5 * PI.sqrt() / alpha.max(1e-3),
        _ => 1.0 / alpha.max(1e-3),
    }
}

/// Gaussian start whose width follows the α-scaling law, centered in the box.
pub fn initial_orbital(grid: &Arc<Grid>, coupling: &Coupling) -> Orbital {
    let alpha = coupling.alpha().unwrap_or_else(|| match coupling {
        Coupling::Dielectric(e) => {
            let ev = e.eigenvalues();
            1.0 - ev.iter().map(|l| 1.0 / l).sum::<f64>() / ev.len() as f64
        }
        Coupling::Isotropic { alpha } => *alpha,
    });
    let width = initial_width(alpha, grid.dim());
    let center = box_center(grid);
    Orbital::gaussian(grid, width, center)
}

pub fn box_center(grid: &Grid) -> [f64; 3] {
    let mut c = grid.origin();
    for a in grid.cell().vectors() {
        for i in 0..3 {
            c[i] += 0.5 * a[i];
        }
    }
    c
}
