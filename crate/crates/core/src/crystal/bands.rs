use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{dot3, norm3, Grid, LatticeCell, ScalarField};

/// Bands of −½Δ_ξ + V at one quasi-momentum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlochState {
    pub kpoint: [f64; 3],
    pub energies: Vec<f64>,
    #[serde(skip)]
    pub millers: Vec<[i64; 3]>,
    /// ½|ξ+G|² per plane wave.
    #[serde(skip)]
    pub kinetic: Vec<f64>,
    /// One coefficient vector per band, unit norm in ℓ²; u(x) = |Γ|^{-1/2} Σ_G c_G e^{i(ξ+G)·x}.
    #[serde(skip)]
    pub coefficients: Vec<Vec<Complex64>>,
}

impl BlochState {
    pub fn bands(&self) -> usize {
        self.energies.len()
    }

    /// max |⟨c_m, c_n⟩ − δ_mn|.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, a) in self.coefficients.iter().enumerate() {
            for (n, b) in self.coefficients.iter().enumerate() {
                let s: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                let target = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((s - target).norm());
            }
        }
        worst
    }
}

/// Dense Bloch Hamiltonian in the plane-wave basis.
#[derive(Clone, Debug)]
pub struct BlochHamiltonian {
    pub kpoint: [f64; 3],
    pub millers: Vec<[i64; 3]>,
    pub kinetic: Vec<f64>,
    /// Row-major.
    pub matrix: Vec<Complex64>,
}

impl BlochHamiltonian {
    pub fn size(&self) -> usize {
        self.millers.len()
    }

    /// max |H − H†|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.size();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[i * n + j] - self.matrix[j * n + i].conj()).norm());
            }
        }
        worst
    }
}

/// Γ-centered uniform grid of quasi-momenta, folded into (−½, ½] in reduced coordinates.
pub fn kpoint_grid(cell: &LatticeCell, counts: &[usize]) -> Vec<[f64; 3]> {
    let recip = cell.reciprocal();
    let d = cell.dim();
    let total: usize = counts.iter().product();
    (0..total)
        .map(|t| {
            let mut rest = t;
            let mut k = [0.0; 3];
            for a in 0..d {
                let n = counts[a];
                let j = rest % n;
                rest /= n;
                let mut f = j as f64 / n as f64;
                if f > 0.5 {
                    f -= 1.0;
                }
                for (kv, b) in k.iter_mut().zip(&recip[a]) {
                    *kv += f * b;
                }
            }
            k
        })
        .collect()
}

fn basis(cell: &LatticeCell, k: [f64; 3], cutoff: f64) -> (Vec<[i64; 3]>, Vec<f64>) {
    let recip = cell.reciprocal();
    let d = cell.dim();
    let gmax = (2.0 * cutoff).sqrt() + norm3(&k);
    let bounds: Vec<i64> =
        cell.vectors().iter().map(|a| (gmax * norm3(a) / (2.0 * std::f64::consts::PI)).floor() as i64 + 1).collect();
    let mut out: Vec<([i64; 3], f64)> = Vec::new();
    let mut m = [0i64; 3];
    let counts: Vec<i64> = bounds.iter().map(|b| 2 * b + 1).collect();
    let total: i64 = counts.iter().product();
    for t in 0..total {
        let mut rest = t;
        for a in 0..d {
            m[a] = rest % counts[a] - bounds[a];
            rest /= counts[a];
        }
        let mut q = k;
        for a in 0..d {
            for (qv, b) in q.iter_mut().zip(&recip[a]) {
                *qv += m[a] as f64 * b;
            }
        }
        let e = 0.5 * dot3(&q, &q);
        if e <= cutoff {
            out.push((m, e));
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out.into_iter().unzip()
}

/// Fourier coefficients V̂(G) = (1/|Γ|)∫_Γ V e^{−iG·x}.
pub(crate) fn potential_coefficients(v: &ScalarField) -> Vec<Complex64> {
    let n = v.grid().len() as f64;
    let mut c: Vec<Complex64> = v.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftNd::cached(v.grid().shape()).forward(&mut c);
    c.iter_mut().for_each(|z| *z /= n);
    c
}

fn assemble(grid: &Grid, vhat: &[Complex64], k: [f64; 3], cutoff: f64) -> Result<BlochHamiltonian> {
    let (millers, kinetic) = basis(grid.cell(), k, cutoff);
    let d = grid.dim();
    let n = millers.len();
    let shape = grid.shape();
    let mut matrix = vec![Complex64::new(0.0, 0.0); n * n];
    let mut diff = [0i64; 3];
    for i in 0..n {
        for j in 0..n {
            for a in 0..d {
                diff[a] = millers[i][a] - millers[j][a];
                if 2 * diff[a].abs() >= shape[a] as i64 {
                    return Err(Error::Cutoff(format!(
                        "grid of {} points on axis {a} cannot resolve the cutoff {cutoff}",
                        shape[a]
                    )));
                }
            }
            matrix[i * n + j] = vhat[grid.wrap_index(&diff[..d])];
        }
        matrix[i * n + i] += kinetic[i];
    }
    Ok(BlochHamiltonian { kpoint: k, millers, kinetic, matrix })
}

pub fn bloch_hamiltonian(v: &ScalarField, k: [f64; 3], cutoff: f64) -> Result<BlochHamiltonian> {
    assemble(v.grid(), &potential_coefficients(v), k, cutoff)
}

fn diagonalize(h: &BlochHamiltonian, nbands: usize) -> Result<BlochState> {
    let n = h.size();
    if n < nbands {
        return Err(Error::Cutoff(format!("basis of {n} plane waves cannot hold {nbands} bands")));
    }
    let mat = Mat::<Complex64>::from_fn(n, n, |i, j| h.matrix[i * n + j]);
    let evd = mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Invalid(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let energies = (0..nbands).map(|b| s[b].re).collect();
    let coefficients = (0..nbands).map(|b| (0..n).map(|i| u[(i, b)]).collect()).collect();
    Ok(BlochState { kpoint: h.kpoint, energies, millers: h.millers.clone(), kinetic: h.kinetic.clone(), coefficients })
}

/// Lowest `nbands` bands of −½Δ_ξ + V at every point of the Γ-centered k-grid.
pub fn bloch_bands(
    v: &ScalarField,
    cell: &LatticeCell,
    cutoff: f64,
    kpts: &[usize],
    nbands: usize,
) -> Result<Vec<BlochState>> {
    let grid = v.grid();
    if !grid.cell().approx_eq(cell) {
        return Err(Error::CellMismatch);
    }
    if kpts.len() != cell.dim() || kpts.contains(&0) {
        return Err(Error::Invalid(format!("k-point counts {kpts:?} do not match dimension {}", cell.dim())));
    }
    let vhat = potential_coefficients(v);
    kpoint_grid(cell, kpts)
        .into_par_iter()
        .map(|k| diagonalize(&assemble(grid, &vhat, k, cutoff)?, nbands))
        .collect()
}

/// Midgap Fermi level and gap for the insulating filling of Z bands.
pub fn fermi_level(bands: &[BlochState], electrons: usize) -> Result<(f64, f64)> {
    if electrons == 0 {
        return Err(Error::NoElectrons);
    }
    if bands.is_empty() || bands.iter().any(|b| b.bands() <= electrons) {
        return Err(Error::Cutoff(format!("need at least {} bands per k-point", electrons + 1)));
    }
    let top = bands.iter().map(|b| b.energies[electrons - 1]).fold(f64::NEG_INFINITY, f64::max);
    let bottom = bands.iter().map(|b| b.energies[electrons]).fold(f64::INFINITY, f64::min);
    let gap = bottom - top;
    if gap <= 1e-9 * top.abs().max(1.0) {
        return Err(Error::Metallic(format!(
            "bands {electrons} and {} overlap (max {top}, min {bottom})",
            electrons + 1
        )));
    }
    Ok((0.5 * (top + bottom), gap))
}

/// ρ(x) = k-average of Σ_{n<Z} |u_{n,ξ}(x)|², with ∫_Γ ρ = Z.
pub fn band_density(bands: &[BlochState], electrons: usize, grid: &Arc<Grid>) -> Result<ScalarField> {
    let d = grid.dim();
    let vol = grid.volume();
    let nk = bands.len() as f64;
    let parts: Vec<Vec<f64>> = bands
        .par_iter()
        .map(|b| {
            let plan = FftNd::cached(grid.shape());
            let mut acc = vec![0.0; grid.len()];
            let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
            for c in b.coefficients.iter().take(electrons) {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (m, v) in b.millers.iter().zip(c) {
                    buf[grid.wrap_index(&m[..d])] += v;
                }
                plan.inverse_unnormalized(&mut buf);
                for (a, z) in acc.iter_mut().zip(&buf) {
                    *a += z.norm_sqr();
                }
            }
            acc
        })
        .collect();
    let mut rho = vec![0.0; grid.len()];
    for p in &parts {
        for (r, v) in rho.iter_mut().zip(p) {
            *r += v / (vol * nk);
        }
    }
    ScalarField::new(grid.clone(), rho)
}

/// k-averaged Σ_{n<Z} ⟨u_n, −½Δ_ξ u_n⟩.
pub fn band_kinetic(bands: &[BlochState], electrons: usize) -> f64 {
    let nk = bands.len() as f64;
    bands
        .iter()
        .map(|b| {
            b.coefficients
                .iter()
                .take(electrons)
                .map(|c| c.iter().zip(&b.kinetic).map(|(v, t)| t * v.norm_sqr()).sum::<f64>())
                .sum::<f64>()
        })
        .sum::<f64>()
        / nk
}
