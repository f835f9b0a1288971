use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extraction metadata carried by fitted tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    pub m_ladder: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fits: Vec<Vec<Vec<f64>>>,
}

/// Symmetric d×d matrix with eigenvalues ≥ 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DielectricTensor {
    matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostics: Option<ExtractionDiagnostics>,
}

impl DielectricTensor {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<DielectricTensor> {
        let d = matrix.len();
        if !(1..=3).contains(&d) || matrix.iter().any(|r| r.len() != d) {
            return Err(Error::Dielectric("matrix must be square with dimension 1..=3".into()));
        }
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Dielectric("non-finite entry".into()));
        }
        let scale = matrix.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (matrix[i][j] - matrix[j][i]).abs() > 1e-8 * scale.max(1.0) {
                    return Err(Error::Dielectric(format!("not symmetric at ({i},{j})")));
                }
            }
        }
        let t = DielectricTensor { matrix, diagnostics: None };
        let lo = t.min_eigenvalue();
        if lo < 1.0 - 1e-6 {
            return Err(Error::Dielectric(format!("smallest eigenvalue {lo} is below 1")));
        }
        Ok(t)
    }

    pub fn identity(d: usize) -> DielectricTensor {
        DielectricTensor::scalar(d, 1.0).expect("identity is valid")
    }

    pub fn scalar(d: usize, eps: f64) -> Result<DielectricTensor> {
        DielectricTensor::new((0..d).map(|i| (0..d).map(|j| if i == j { eps } else { 0.0 }).collect()).collect())
    }

    pub fn diagonal(diag: &[f64]) -> Result<DielectricTensor> {
        let d = diag.len();
        DielectricTensor::new((0..d).map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect()).collect())
    }

    pub fn with_diagnostics(mut self, diagnostics: ExtractionDiagnostics) -> Self {
        self.diagnostics = Some(diagnostics);
        self
    }

    pub fn diagnostics(&self) -> Option<&ExtractionDiagnostics> {
        self.diagnostics.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i][j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[i][i]).sum()
    }

    /// kᵀ ε k using the first d components of k.
    pub fn quad(&self, k: &[f64; 3]) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += k[i] * self.matrix[i][j] * k[j];
            }
        }
        s
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (self.matrix[i][j] + self.matrix[j][i]));
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    pub fn condition(&self) -> f64 {
        self.max_eigenvalue() / self.min_eigenvalue()
    }

    /// Some(ε) when the tensor is ε·Id.
    pub fn as_scalar(&self) -> Option<f64> {
        let d = self.dim();
        let e = self.matrix[0][0];
        let iso = (0..d).all(|i| (0..d).all(|j| if i == j { self.matrix[i][j] == e } else { self.matrix[i][j] == 0.0 }));
        iso.then_some(e)
    }

    pub fn is_identity(&self) -> bool {
        self.as_scalar() == Some(1.0)
    }

    /// α = 1 − 1/ε for scalar tensors.
    pub fn alpha(&self) -> Option<f64> {
        self.as_scalar().map(|e| 1.0 - 1.0 / e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(DielectricTensor::new(vec![vec![2.0, 0.5], vec![0.4, 2.0]]).is_err());
        assert!(DielectricTensor::scalar(3, 0.5).is_err());
        assert!(DielectricTensor::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        let e = DielectricTensor::diagonal(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.eigenvalues(), vec![1.0, 2.0, 3.0]);
        assert_eq!(e.quad(&[1.0, 1.0, 1.0]), 6.0);
        assert_eq!(DielectricTensor::scalar(2, 4.0).unwrap().alpha(), Some(0.75));
    }
}
