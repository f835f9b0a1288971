use std::sync::Arc;

use num_complex::Complex64;

use super::fft;
use super::grid::Grid;
use crate::error::{invalid, Error, Result};

/// Real values on a grid. Immutable once built.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    neutral: bool,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return invalid(format!("{} values for a grid of {}", values.len(), grid.len()));
        }
        Ok(ScalarField { grid, values, neutral: false })
    }

    /// Field flagged as charge neutral; the mean must vanish relative to the maximum.
    pub fn neutral(grid: Arc<Grid>, values: Vec<f64>) -> Result<ScalarField> {
        let mut f = ScalarField::new(grid, values)?;
        let mean = f.mean();
        if mean.abs() > 1e-10 * f.max_abs() {
            return invalid(format!("field flagged neutral has mean {mean:.3e}"));
        }
        f.neutral = true;
        Ok(f)
    }

    pub fn zeros(grid: Arc<Grid>) -> ScalarField {
        let n = grid.len();
        ScalarField { grid, values: vec![0.0; n], neutral: true }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: Arc<Grid>, f: F) -> ScalarField {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        ScalarField { grid, values, neutral: false }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_neutral(&self) -> bool {
        self.neutral
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dv()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.dv()).sqrt()
    }

    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        check_same(&self.grid, &other.grid)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.dv())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            neutral: false,
        }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| v * s).collect(),
            neutral: self.neutral,
        }
    }

    /// a·self + b·other.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        check_same(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            neutral: self.neutral && other.neutral,
        })
    }

    /// Same values on another grid with identical shape.
    pub fn regrid(&self, grid: Arc<Grid>) -> Result<ScalarField> {
        if grid.shape() != self.grid.shape() {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField { grid, values: self.values.clone(), neutral: self.neutral })
    }

    /// Periodic shift by whole grid steps: result(x) = self(x − shift·h).
    pub fn shifted(&self, shift: &[i64]) -> ScalarField {
        let g = &self.grid;
        let mut values = vec![0.0; g.len()];
        for (i, v) in values.iter_mut().enumerate() {
            let idx = g.multi_index(i);
            let src: Vec<i64> = (0..g.dim()).map(|a| idx[a] as i64 - shift[a]).collect();
            *v = self.values[g.wrap_index(&src)];
        }
        ScalarField { grid: g.clone(), values, neutral: self.neutral }
    }

    pub fn fourier(&self) -> FourierField {
        let mut coeffs = fft::real_to_complex(&self.values);
        fft::forward(self.grid.shape(), &mut coeffs);
        FourierField { grid: self.grid.clone(), coeffs }
    }

    /// Largest magnitude on the outer faces relative to the global maximum.
    pub fn boundary_ratio(&self) -> f64 {
        boundary_ratio(&self.grid, |i| self.values[i].abs())
    }
}

pub(crate) fn boundary_ratio<F: Fn(usize) -> f64>(grid: &Grid, mag: F) -> f64 {
    let mut all = 0.0f64;
    let mut edge = 0.0f64;
    for i in 0..grid.len() {
        let m = mag(i);
        all = all.max(m);
        let idx = grid.multi_index(i);
        if (0..grid.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == grid.shape()[a]) {
            edge = edge.max(m);
        }
    }
    if all == 0.0 {
        0.0
    } else {
        edge / all
    }
}

pub(crate) fn check_same(a: &Grid, b: &Grid) -> Result<()> {
    if std::ptr::eq(a, b) || a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Complex values on a grid.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<ComplexField> {
        if values.len() != grid.len() {
            return invalid(format!("{} values for a grid of {}", values.len(), grid.len()));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn from_fn<F: Fn([f64; 3]) -> Complex64>(grid: Arc<Grid>, f: F) -> ComplexField {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        ComplexField { grid, values }
    }

    pub fn from_real(f: &ScalarField) -> ComplexField {
        ComplexField { grid: f.grid.clone(), values: fft::real_to_complex(&f.values) }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dv()).sqrt()
    }

    pub fn density(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
            neutral: false,
        }
    }

    pub fn real_part(&self) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|v| v.re).collect(), neutral: false }
    }

    pub fn fourier(&self) -> FourierField {
        let mut coeffs = self.values.clone();
        fft::forward(self.grid.shape(), &mut coeffs);
        FourierField { grid: self.grid.clone(), coeffs }
    }

    pub fn shifted(&self, shift: &[i64]) -> ComplexField {
        let g = &self.grid;
        let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
        for (i, v) in values.iter_mut().enumerate() {
            let idx = g.multi_index(i);
            let src: Vec<i64> = (0..g.dim()).map(|a| idx[a] as i64 - shift[a]).collect();
            *v = self.values[g.wrap_index(&src)];
        }
        ComplexField { grid: g.clone(), values }
    }
}

/// Raw FFT coefficients: ρ̂(k_j) = Σ_x ρ(x) e^{−i k_j·x}; the continuum transform is dV times this.
#[derive(Clone, Debug)]
pub struct FourierField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl FourierField {
    pub fn new(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Result<FourierField> {
        if coeffs.len() != grid.len() {
            return invalid("coefficient count does not match the grid");
        }
        Ok(FourierField { grid, coeffs })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn inverse(&self) -> ComplexField {
        let mut values = self.coeffs.clone();
        fft::inverse(self.grid.shape(), &mut values);
        ComplexField { grid: self.grid.clone(), values }
    }

    /// Real part of the inverse transform.
    pub fn inverse_real(&self) -> ScalarField {
        self.inverse().real_part()
    }

    /// Flat index of −k.
    pub fn negated_index(&self, flat: usize) -> usize {
        let g = &self.grid;
        let idx = g.multi_index(flat);
        let neg: Vec<i64> = (0..g.dim()).map(|a| -(idx[a] as i64)).collect();
        g.wrap_index(&neg)
    }

    /// Largest |ρ̂(−k) − conj ρ̂(k)|.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[self.negated_index(i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// ∫|f|² from the coefficients (Parseval).
    pub fn parseval_norm_sqr(&self) -> f64 {
        let n = self.coeffs.len() as f64;
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dv() / n
    }
}
