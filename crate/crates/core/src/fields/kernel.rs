use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::FftNd;
use super::field::{check_same, ScalarField};
use super::grid::Grid;
use super::lattice::LatticeCell;
use crate::dielectric::DielectricTensor;
use crate::error::{invalid, Error, Result};

/// Which Coulomb kernel a grid operation uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoulombKernel {
    /// Free space in 3-D: zero-padded grid, kernel cut off beyond the largest charge separation.
    Truncated,
    /// Torus: 4π/kᵀεk with the k = 0 mode dropped.
    Periodic,
    /// 1/√(|x|² + a²) with minimum-image distances.
    Soft { a: f64 },
}

impl CoulombKernel {
    pub fn default_for(grid: &Grid) -> CoulombKernel {
        if grid.dim() == 3 {
            CoulombKernel::Truncated
        } else {
            CoulombKernel::Periodic
        }
    }

    /// Soft kernel with a = one grid spacing.
    pub fn soft_for(grid: &Grid) -> CoulombKernel {
        CoulombKernel::Soft { a: grid.spacing()[0] }
    }
}

/// Strength of the polarization term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// F = 2π∫|ρ̂|²(1/kᵀεk − 1/|k|²).
    Dielectric(DielectricTensor),
    /// F = −(α/2) D(ρ, ρ).
    Isotropic { alpha: f64 },
}

impl Coupling {
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Coupling::Dielectric(e) => e.alpha(),
            Coupling::Isotropic { alpha } => Some(*alpha),
        }
    }

    pub fn is_trivial(&self) -> bool {
        match self {
            Coupling::Dielectric(e) => e.is_identity(),
            Coupling::Isotropic { alpha } => *alpha == 0.0,
        }
    }

    fn terms(&self, d: usize) -> Vec<(f64, DielectricTensor)> {
        match self {
            Coupling::Dielectric(e) => vec![(1.0, e.clone()), (-1.0, DielectricTensor::identity(d))],
            Coupling::Isotropic { alpha } => vec![(-alpha, DielectricTensor::identity(d))],
        }
    }
}

/// Precomputed convolution ρ ↦ ρ ⋆ K on a grid.
pub struct Convolver {
    grid: Arc<Grid>,
    padded: Option<Vec<usize>>,
    khat: Vec<f64>,
    zero: bool,
}

impl Convolver {
    /// K_ε: the Green function of −div(ε∇) = 4π.
    pub fn coulomb(grid: &Arc<Grid>, kernel: CoulombKernel, eps: &DielectricTensor) -> Result<Convolver> {
        Convolver::build(grid, kernel, &[(1.0, eps.clone())])
    }

    /// K_ε − K_1, or −αK_1.
    pub fn pekar(grid: &Arc<Grid>, kernel: CoulombKernel, coupling: &Coupling) -> Result<Convolver> {
        Convolver::build(grid, kernel, &coupling.terms(grid.dim()))
    }

    fn build(grid: &Arc<Grid>, kernel: CoulombKernel, terms: &[(f64, DielectricTensor)]) -> Result<Convolver> {
        let d = grid.dim();
        for (_, e) in terms {
            if e.dim() != d {
                return Err(Error::Dielectric(format!("tensor dimension {} on a {d}-D grid", e.dim())));
            }
        }
        let live: Vec<&(f64, DielectricTensor)> = terms.iter().filter(|(w, _)| *w != 0.0).collect();
        let zero = live.is_empty() || (live.len() == 2 && live[0].1.is_identity() && live[1].1.is_identity());
        if zero {
            return Ok(Convolver { grid: grid.clone(), padded: None, khat: vec![0.0; grid.len()], zero: true });
        }
        match kernel {
            CoulombKernel::Truncated => {
                if d != 3 {
                    return invalid("the truncated kernel is defined for 3-D grids only");
                }
                let kappa = live.iter().map(|(_, e)| e.condition()).fold(1.0, f64::max);
                let heights = grid.cell().heights();
                let r_sep = heights.iter().cloned().fold(f64::INFINITY, f64::min);
                let shape: Vec<usize> = grid
                    .shape()
                    .iter()
                    .zip(&heights)
                    .map(|(&n, &h)| {
                        let want = (n as f64 * r_sep * (1.0 + kappa.sqrt()) / h - 1e-9).ceil() as usize;
                        want.max(n) + want.max(n) % 2
                    })
                    .collect();
                let factors: Vec<f64> = shape.iter().zip(grid.shape()).map(|(&p, &n)| p as f64 / n as f64).collect();
                let pgrid = Grid::new(grid.cell().scaled_axes(&factors), shape.clone(), grid.origin())?;
                let mut khat = vec![0.0; pgrid.len()];
                let radii: Vec<f64> = live.iter().map(|(_, e)| r_sep / e.min_eigenvalue().sqrt()).collect();
                pgrid.for_each_k(|i, k| {
                    let mut s = 0.0;
                    for ((w, e), &r) in live.iter().map(|t| (&t.0, &t.1)).zip(&radii) {
                        let q2 = e.quad(&k);
                        s += w * if q2 == 0.0 {
                            2.0 * PI * r * r
                        } else {
                            4.0 * PI * (1.0 - (r * q2.sqrt()).cos()) / q2
                        };
                    }
                    khat[i] = s;
                });
                Ok(Convolver { grid: grid.clone(), padded: Some(shape), khat, zero: false })
            }
            CoulombKernel::Periodic => {
                let mut khat = vec![0.0; grid.len()];
                grid.for_each_k(|i, k| {
                    let mut s = 0.0;
                    for (w, e) in &live {
                        let q2 = e.quad(&k);
                        if q2 > 0.0 {
                            s += w * 4.0 * PI / q2;
                        }
                    }
                    khat[i] = s;
                });
                Ok(Convolver { grid: grid.clone(), padded: None, khat, zero: false })
            }
            CoulombKernel::Soft { a } => {
                if !(a > 0.0) {
                    return invalid("soft-Coulomb parameter must be positive");
                }
                let mut weight = 0.0;
                for (w, e) in &live {
                    match e.as_scalar() {
                        Some(c) => weight += w / c,
                        None => return invalid("the soft kernel supports scalar dielectric constants only"),
                    }
                }
                let table = soft_table(grid, a);
                let mut buf: Vec<Complex64> = table.iter().map(|&v| Complex64::new(v * weight, 0.0)).collect();
                FftNd::cached(grid.shape()).forward(&mut buf);
                let dv = grid.dv();
                let khat = buf.iter().map(|c| c.re * dv).collect();
                Ok(Convolver { grid: grid.clone(), padded: None, khat, zero: false })
            }
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Kernel values in the FFT order of the (possibly padded) working grid.
    pub fn spectrum(&self) -> &[f64] {
        &self.khat
    }

    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        assert_eq!(rho.len(), n);
        if self.zero {
            return vec![0.0; n];
        }
        match &self.padded {
            None => {
                let plan = FftNd::cached(self.grid.shape());
                let mut buf: Vec<Complex64> = rho.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                plan.forward(&mut buf);
                for (c, k) in buf.iter_mut().zip(&self.khat) {
                    *c *= k;
                }
                plan.inverse(&mut buf);
                buf.iter().map(|c| c.re).collect()
            }
            Some(pshape) => {
                let plan = FftNd::cached(pshape);
                let mut buf = vec![Complex64::new(0.0, 0.0); plan.len()];
                let map = corner_map(self.grid.shape(), pshape);
                for (i, &p) in map.iter().enumerate() {
                    buf[p] = Complex64::new(rho[i], 0.0);
                }
                plan.forward(&mut buf);
                for (c, k) in buf.iter_mut().zip(&self.khat) {
                    *c *= k;
                }
                plan.inverse(&mut buf);
                map.iter().map(|&p| buf[p].re).collect()
            }
        }
    }

    /// ∫ f (g ⋆ K).
    pub fn energy(&self, f: &[f64], g: &[f64]) -> f64 {
        let pot = self.apply(g);
        f.iter().zip(&pot).map(|(a, b)| a * b).sum::<f64>() * self.grid.dv()
    }
}

fn corner_map(shape: &[usize], pshape: &[usize]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    (0..n)
        .map(|mut flat| {
            let mut idx = [0usize; 3];
            for ax in (0..shape.len()).rev() {
                idx[ax] = flat % shape[ax];
                flat /= shape[ax];
            }
            idx[..shape.len()].iter().zip(pshape).fold(0, |acc, (&i, &p)| acc * p + i)
        })
        .collect()
}

/// Minimum-image soft-Coulomb values indexed by grid displacement.
pub(crate) fn soft_table(grid: &Grid, a: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let r = min_image(grid, i);
            1.0 / (r * r + a * a).sqrt()
        })
        .collect()
}

/// Length of the shortest periodic displacement with grid index `flat`.
pub(crate) fn min_image(grid: &Grid, flat: usize) -> f64 {
    let idx = grid.multi_index(flat);
    let mut r = [0.0; 3];
    for ax in 0..grid.dim() {
        let f = Grid::frequency(idx[ax], grid.shape()[ax]) as f64 / grid.shape()[ax] as f64;
        let a = grid.cell().vectors()[ax];
        for c in 0..3 {
            r[c] += f * a[c];
        }
    }
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

/// Coulomb energy with its accuracy diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelEnergy {
    pub value: f64,
    pub boundary_ratio: f64,
    pub analog: bool,
}

impl KernelEnergy {
    pub fn warning(&self) -> Option<String> {
        (self.boundary_ratio > 1e-8).then(|| {
            format!("field not negligible at the box boundary (ratio {:.3e})", self.boundary_ratio)
        })
    }
}

/// D(f, g) = ∫ f (g ⋆ |·|⁻¹), image-free in 3-D and on the torus in analog dimensions.
pub fn coulomb_energy_free(f: &ScalarField, g: &ScalarField) -> Result<KernelEnergy> {
    check_same(f.grid(), g.grid())?;
    let grid = f.grid();
    let conv = Convolver::coulomb(grid, CoulombKernel::default_for(grid), &DielectricTensor::identity(grid.dim()))?;
    Ok(KernelEnergy {
        value: conv.energy(f.values(), g.values()),
        boundary_ratio: f.boundary_ratio().max(g.boundary_ratio()),
        analog: grid.dim() < 3,
    })
}

pub fn coulomb_energy(f: &ScalarField, g: &ScalarField, kernel: CoulombKernel) -> Result<f64> {
    check_same(f.grid(), g.grid())?;
    let grid = f.grid();
    let conv = Convolver::coulomb(grid, kernel, &DielectricTensor::identity(grid.dim()))?;
    Ok(conv.energy(f.values(), g.values()))
}

pub fn coulomb_potential(rho: &ScalarField, kernel: CoulombKernel) -> Result<ScalarField> {
    let grid = rho.grid();
    let conv = Convolver::coulomb(grid, kernel, &DielectricTensor::identity(grid.dim()))?;
    ScalarField::new(grid.clone(), conv.apply(rho.values()))
}

/// F^P_ε[ρ] with the default kernel of the grid.
pub fn pekar_interaction(rho: &ScalarField, eps: &DielectricTensor) -> Result<f64> {
    let kernel = CoulombKernel::default_for(rho.grid());
    pekar_interaction_with(rho, &Coupling::Dielectric(eps.clone()), kernel)
}

pub fn pekar_interaction_with(rho: &ScalarField, coupling: &Coupling, kernel: CoulombKernel) -> Result<f64> {
    let conv = Convolver::pekar(rho.grid(), kernel, coupling)?;
    Ok(0.5 * conv.energy(rho.values(), rho.values()))
}

/// U = ρ ⋆ (K_ε − K_1), the functional derivative of F^P.
pub fn pekar_potential(rho: &ScalarField, coupling: &Coupling, kernel: CoulombKernel) -> Result<ScalarField> {
    let conv = Convolver::pekar(rho.grid(), kernel, coupling)?;
    ScalarField::new(rho.grid().clone(), conv.apply(rho.values()))
}

/// W with −div(ε∇W) = 4πρ, default kernel of the grid.
pub fn solve_poisson_aniso(rho: &ScalarField, eps: &DielectricTensor) -> Result<ScalarField> {
    solve_poisson_aniso_with(rho, eps, CoulombKernel::default_for(rho.grid()))
}

pub fn solve_poisson_aniso_with(rho: &ScalarField, eps: &DielectricTensor, kernel: CoulombKernel) -> Result<ScalarField> {
    let conv = Convolver::coulomb(rho.grid(), kernel, eps)?;
    ScalarField::new(rho.grid().clone(), conv.apply(rho.values()))
}

/// Periodic Green function of one cell, Fourier coefficients 4π/|b|², shifted so that its grid minimum is 0.
pub struct PeriodicGreen {
    grid: Arc<Grid>,
    ghat: Vec<f64>,
    constant: f64,
}

impl PeriodicGreen {
    pub fn new(grid: &Arc<Grid>) -> PeriodicGreen {
        let mut ghat = vec![0.0; grid.len()];
        grid.for_each_k(|i, k| {
            let q2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if q2 > 0.0 {
                ghat[i] = 4.0 * PI / q2;
            }
        });
        let mut buf: Vec<Complex64> = ghat.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftNd::cached(grid.shape()).inverse_unnormalized(&mut buf);
        let vol = grid.volume();
        let min = buf.iter().map(|c| c.re / vol).fold(f64::INFINITY, f64::min);
        PeriodicGreen { grid: grid.clone(), ghat, constant: -min }
    }

    pub fn with_constant(mut self, c: f64) -> PeriodicGreen {
        self.constant = c;
        self
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// (g ⋆ G)(x) over one cell.
    pub fn potential(&self, g: &[f64]) -> Vec<f64> {
        let plan = FftNd::cached(self.grid.shape());
        let mut buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        plan.forward(&mut buf);
        for (c, k) in buf.iter_mut().zip(&self.ghat) {
            *c *= k;
        }
        plan.inverse(&mut buf);
        let shift = self.constant * g.iter().sum::<f64>() * self.grid.dv();
        buf.iter().map(|c| c.re + shift).collect()
    }

    pub fn energy(&self, f: &[f64], g: &[f64]) -> f64 {
        let pot = self.potential(g);
        f.iter().zip(&pot).map(|(a, b)| a * b).sum::<f64>() * self.grid.dv()
    }
}

/// D_G(f, g) = ∬_{Γ×Γ} f G g.
pub fn periodic_green_energy(f: &ScalarField, g: &ScalarField, cell: &LatticeCell) -> Result<f64> {
    check_same(f.grid(), g.grid())?;
    if !f.grid().cell().approx_eq(cell) {
        return Err(Error::CellMismatch);
    }
    Ok(PeriodicGreen::new(f.grid()).energy(f.values(), g.values()))
}
