use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{Grid, ScalarField};

/// Largest cell grid handled by the dense eigensolver.
const MAX_CELL_POINTS: usize = 4096;

/// Lowest periodic state of (1/(2m))(−Δ) + V on one cell, and the corrector f with Δf = 2V.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellEigenResult {
    pub mass: f64,
    /// ∫_Γ (1/(2m))|∇u|² + V|u|² with ∫_Γ|u|² = |Γ|.
    pub energy: f64,
    /// Lowest eigenvalue, energy / |Γ|.
    pub eigenvalue: f64,
    /// E^per = ∫_Γ V f.
    pub e_per: f64,
    pub cell_volume: f64,
    pub min_u: f64,
    pub normalization_defect: f64,
    pub poisson_residual: f64,
    pub f_mean: f64,
    #[serde(skip)]
    u: Option<ScalarField>,
    #[serde(skip)]
    f: Option<ScalarField>,
}

impl CellEigenResult {
    pub fn u(&self) -> &ScalarField {
        self.u.as_ref().expect("eigenfunction is kept")
    }

    pub fn f(&self) -> &ScalarField {
        self.f.as_ref().expect("corrector is kept")
    }

    /// ‖u − 1 − m f‖_∞ / m².
    pub fn expansion_defect(&self) -> f64 {
        let m = self.mass;
        self.u()
            .values()
            .iter()
            .zip(self.f().values())
            .map(|(u, f)| (u - 1.0 - m * f).abs())
            .fold(0.0, f64::max)
            / (m * m)
    }

    /// |m⁻¹E^per_m − E^per| / m.
    pub fn limit_defect(&self) -> f64 {
        (self.energy / self.mass - self.e_per).abs() / self.mass
    }
}

fn coefficients(v: &ScalarField) -> Vec<Complex64> {
    let n = v.grid().len() as f64;
    let mut c: Vec<Complex64> = v.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftNd::cached(v.grid().shape()).forward(&mut c);
    c.iter_mut().for_each(|z| *z /= n);
    c
}

/// Solves Δf = 2V spectrally, zero mean.
pub fn corrector(v: &ScalarField) -> ScalarField {
    let grid = v.grid();
    let mut c: Vec<Complex64> = v.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let plan = FftNd::cached(grid.shape());
    plan.forward(&mut c);
    grid.for_each_k(|i, k| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        c[i] = if k2 > 0.0 { -2.0 * c[i] / k2 } else { Complex64::new(0.0, 0.0) };
    });
    plan.inverse(&mut c);
    ScalarField::new(grid.clone(), c.iter().map(|z| z.re).collect()).expect("same grid")
}

fn laplacian(f: &ScalarField) -> Vec<f64> {
    let grid = f.grid();
    let mut c: Vec<Complex64> = f.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let plan = FftNd::cached(grid.shape());
    plan.forward(&mut c);
    grid.for_each_k(|i, k| c[i] *= -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]));
    plan.inverse(&mut c);
    c.iter().map(|z| z.re).collect()
}

fn ground_state(grid: &Arc<Grid>, vhat: &[Complex64], m: f64) -> Result<(f64, Vec<Complex64>)> {
    let n = grid.len();
    let d = grid.dim();
    let k2 = grid.k2_table();
    let idx: Vec<[usize; 3]> = (0..n).map(|i| grid.multi_index(i)).collect();
    let mut diff = [0i64; 3];
    let mat = Mat::<Complex64>::from_fn(n, n, |i, j| {
        for a in 0..d {
            diff[a] = idx[i][a] as i64 - idx[j][a] as i64;
        }
        let mut h = vhat[grid.wrap_index(&diff[..d])];
        if i == j {
            h += k2[i] / (2.0 * m);
        }
        h
    });
    let evd = mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Invalid(format!("eigensolver failed: {e:?}")))?;
    let lambda = evd.S().column_vector()[0].re;
    let u = evd.U();
    Ok((lambda, (0..n).map(|i| u[(i, 0)]).collect()))
}

/// Lowest eigenpair of (1/(2m))(−Δ) + V on the cell of `v`, periodic boundary, plus f^per and E^per.
pub fn cell_eigenproblem(v: &ScalarField, m: f64) -> Result<CellEigenResult> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Invalid(format!("mass must be positive, got {m}")));
    }
    let grid = v.grid();
    let scale = v.max_abs().max(1.0);
    if v.mean().abs() > 1e-10 * scale {
        return Err(Error::Invalid(format!("potential must have zero mean, mean is {:.3e}", v.mean())));
    }
    if grid.len() > MAX_CELL_POINTS {
        return Err(Error::Invalid(format!("cell grid of {} points exceeds {MAX_CELL_POINTS}", grid.len())));
    }
    let vol = grid.volume();
    let (lambda, coeffs) = ground_state(grid, &coefficients(v), m)?;
    let mut c = coeffs;
    FftNd::cached(grid.shape()).inverse_unnormalized(&mut c);
    let total: Complex64 = c.iter().sum();
    let phase = total.conj() / total.norm();
    let mut u: Vec<f64> = c.iter().map(|z| (z * phase).re).collect();
    let mean2 = u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|x| *x /= mean2.sqrt());
    let min_u = u.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_u > 0.0) {
        return Err(Error::Invalid(format!("cell ground state is not positive (min {min_u:.3e}); refine the cell grid")));
    }
    let dv = grid.dv();
    let normalization_defect = (u.iter().map(|x| x * x).sum::<f64>() * dv - vol).abs();
    let f = corrector(v);
    let lap = laplacian(&f);
    let poisson_residual = lap.iter().zip(v.values()).map(|(l, x)| (l - 2.0 * x).abs()).fold(0.0, f64::max);
    let e_per = v.values().iter().zip(f.values()).map(|(a, b)| a * b).sum::<f64>() * dv;
    let f_mean = f.integral();
    Ok(CellEigenResult {
        mass: m,
        energy: lambda * vol,
        eigenvalue: lambda,
        e_per,
        cell_volume: vol,
        min_u,
        normalization_defect,
        poisson_residual,
        f_mean,
        u: Some(ScalarField::new(grid.clone(), u)?),
        f: Some(f),
    })
}
