use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{scaled_density, supercell_count, validate_ladder};
use crate::crystal::CrystalGroundState;
use crate::defect::{ChargeBlob, DefectDensity, DefectSolver};
use crate::dielectric::{DielectricTensor, ExtractionDiagnostics};
use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{dot3, Grid, ScalarField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DielectricOptions {
    pub m_ladder: Vec<f64>,
    /// Macroscopic box in unit cells at m = 1; the supercell at mass m has box_cells/m cells per axis.
    pub box_cells: f64,
    /// Gaussian width of the default probes, macroscopic units.
    pub probe_width: f64,
    pub probe_dipole: f64,
    /// Largest accepted relative misfit of −div(ε∇W) = 4πν at the smallest m.
    pub max_residual: f64,
    /// Fit −div(ε∇W) + cΔ²W = 4πν, so that ε is the long-wavelength value and c absorbs the leading dispersion.
    pub dispersion: bool,
}

impl Default for DielectricOptions {
    fn default() -> Self {
        DielectricOptions { m_ladder: vec![0.5, 0.25, 0.125], box_cells: 6.0, probe_width: 0.5, probe_dipole: 0.5, max_residual: 0.1, dispersion: true }
    }
}

/// One Gaussian dipole per axis.
pub fn dipole_probes(d: usize, width: f64, dipole: f64) -> Vec<DefectDensity> {
    (0..d)
        .map(|a| {
            let mut p = vec![0.0; d];
            p[a] = dipole;
            DefectDensity::Blobs(vec![ChargeBlob { charge: 0.0, dipole: p, width, offset: vec![] }])
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DielectricFit {
    pub m: f64,
    pub supercell: usize,
    pub matrix: Vec<Vec<f64>>,
    /// Coefficient of the |k|⁴ term, 0 without dispersion.
    pub dispersion: f64,
    pub residual: f64,
    pub iterations: Vec<usize>,
    pub gaps: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DielectricExtraction {
    pub tensor: DielectricTensor,
    pub ladder: Vec<DielectricFit>,
}

impl DielectricExtraction {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,supercell,residual,eps\n");
        for f in &self.ladder {
            let eps: Vec<String> = f.matrix.iter().flatten().map(|v| format!("{v:.12e}")).collect();
            s += &format!("{},{},{:.6e},{}\n", f.m, f.supercell, f.residual, eps.join(" "));
        }
        s
    }
}

fn spectrum(f: &[f64], grid: &Grid) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftNd::cached(grid.shape()).forward(&mut c);
    c
}

/// Unknowns ε_ab, a ≤ b, in row-major upper-triangle order.
fn pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect()
}

struct Rows {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    dispersion: bool,
}

impl Rows {
    /// Equations kᵀεk Φ̂(k) = 4πν̂(k) for k inside the first Brillouin zone of the unit cell.
    fn push_probe(&mut self, grid: &Grid, unit: &[[f64; 3]], nu: &[f64], total: &[f64]) {
        let d = grid.dim();
        let nuh = spectrum(nu, grid);
        let th = spectrum(total, grid);
        let pp = pairs(d);
        grid.for_each_k(|i, k| {
            let k2 = dot3(&k, &k);
            if k2 == 0.0 || unit.iter().take(d).any(|a| dot3(&k, a).abs() >= std::f64::consts::PI * (1.0 - 1e-9)) {
                return;
            }
            let phi = 4.0 * std::f64::consts::PI * th[i] / k2;
            let rhs = 4.0 * std::f64::consts::PI * nuh[i];
            let mut coef: Vec<Complex64> =
                pp.iter().map(|&(a, b)| phi * k[a] * k[b] * if a == b { 1.0 } else { 2.0 }).collect();
            if self.dispersion {
                coef.push(phi * k2 * k2);
            }
            self.a.push(coef.iter().map(|c| c.re).collect());
            self.b.push(rhs.re);
            self.a.push(coef.iter().map(|c| c.im).collect());
            self.b.push(rhs.im);
        });
    }

    fn solve(&self, d: usize) -> Result<(Vec<Vec<f64>>, f64, f64)> {
        let p = pairs(d);
        let n = self.b.len();
        let cols = p.len() + usize::from(self.dispersion);
        if n < cols {
            return Err(Error::Dielectric("too few long-wavelength modes for the fit".into()));
        }
        let a = DMatrix::from_fn(n, cols, |i, j| self.a[i][j]);
        let b = DVector::from_column_slice(&self.b);
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) || svd.singular_values.min() <= 1e-10 * smax {
            return Err(Error::Dielectric("probes do not determine every tensor entry".into()));
        }
        let x = svd.solve(&b, 0.0).map_err(|e| Error::Dielectric(e.to_string()))?;
        let residual = (&a * &x - &b).norm() / b.norm().max(1e-300);
        let mut eps = vec![vec![0.0; d]; d];
        for (j, &(r, c)) in p.iter().enumerate() {
            eps[r][c] = x[j];
            eps[c][r] = x[j];
        }
        let c = if self.dispersion { x[p.len()] } else { 0.0 };
        Ok((eps, c, residual))
    }
}

fn fit_at(ground: &CrystalGroundState, probes: &[DefectDensity], m: f64, opts: &DielectricOptions) -> Result<DielectricFit> {
    let l = supercell_count(opts.box_cells, m)?;
    let solver = DefectSolver::new(ground, l)?;
    let grid = solver.grid().clone();
    let mac = grid.scaled(m);
    let unit = ground.spec.cell.vectors().to_vec();
    let mut rows = Rows { a: Vec::new(), b: Vec::new(), dispersion: opts.dispersion };
    let mut iterations = Vec::new();
    let mut gaps = Vec::new();
    for probe in probes {
        let nu = scaled_density(&probe.sample(&mac)?, &grid, m, 1.0)?;
        let sol = solver.solve(&nu)?;
        let total: Vec<f64> = nu.values().iter().zip(sol.response.values()).map(|(a, b)| a - b).collect();
        rows.push_probe(&grid, &unit, nu.values(), &total);
        iterations.push(sol.iterations);
        gaps.push(sol.gap);
    }
    let (matrix, dispersion, residual) = rows.solve(grid.dim())?;
    Ok(DielectricFit { m, supercell: l, matrix, dispersion, residual, iterations, gaps })
}

/// Fits the symmetric ε minimizing ‖−div(ε∇W_m) − 4πν‖ over the probes, on the long-wavelength modes, for each m.
pub fn extract_dielectric(
    ground: &CrystalGroundState,
    probes: &[DefectDensity],
    opts: &DielectricOptions,
) -> Result<DielectricExtraction> {
    validate_ladder(&opts.m_ladder)?;
    let d = ground.spec.dim();
    if probes.len() < d {
        return Err(Error::Invalid(format!("{d} probes needed, got {}", probes.len())));
    }
    let ladder: Vec<DielectricFit> = opts
        .m_ladder
        .par_iter()
        .map(|&m| fit_at(ground, probes, m, opts))
        .collect::<Result<_>>()?;
    let last = ladder.last().expect("non-empty ladder");
    if last.residual > opts.max_residual {
        return Err(Error::FitResidual { residual: last.residual, threshold: opts.max_residual });
    }
    let diagnostics = ExtractionDiagnostics {
        m_ladder: ladder.iter().map(|f| f.m).collect(),
        residuals: ladder.iter().map(|f| f.residual).collect(),
        fits: ladder.iter().map(|f| f.matrix.clone()).collect(),
    };
    let tensor = DielectricTensor::new(last.matrix.clone())?.with_diagnostics(diagnostics);
    Ok(DielectricExtraction { tensor, ladder })
}

/// ν_m for a macroscopic density sampled on the supercell of mass m.
pub fn probe_on_supercell(probe: &DefectDensity, grid: &std::sync::Arc<Grid>, m: f64) -> Result<ScalarField> {
    scaled_density(&probe.sample(&grid.scaled(m))?, grid, m, 1.0)
}
