use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Bravais cell in d ≤ 3 dimensions. Vectors are stored padded to three components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeCell {
    vectors: Vec<[f64; 3]>,
}

impl LatticeCell {
    pub fn new(vectors: Vec<[f64; 3]>) -> Result<Self> {
        let d = vectors.len();
        if !(1..=3).contains(&d) {
            return invalid(format!("lattice dimension {d} not in 1..=3"));
        }
        for v in &vectors {
            if v.iter().any(|x| !x.is_finite()) {
                return invalid("non-finite lattice vector");
            }
            if v[d..].iter().any(|&x| x != 0.0) {
                return invalid("lattice vector has components beyond the lattice dimension");
            }
        }
        let cell = LatticeCell { vectors };
        let vol = cell.volume();
        if !(vol > 1e-12) {
            return invalid("lattice vectors are linearly dependent");
        }
        Ok(cell)
    }

    pub fn orthorhombic(lengths: &[f64]) -> Result<Self> {
        if lengths.iter().any(|&l| !(l > 0.0)) {
            return invalid("box lengths must be positive");
        }
        let vectors = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let mut v = [0.0; 3];
                v[i] = l;
                v
            })
            .collect();
        LatticeCell::new(vectors)
    }

    pub fn cubic(d: usize, a: f64) -> Result<Self> {
        LatticeCell::orthorhombic(&vec![a; d])
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.vectors[j][i])
    }

    pub fn volume(&self) -> f64 {
        self.matrix().determinant().abs()
    }

    /// b_i with a_i · b_j = 2π δ_ij.
    pub fn reciprocal(&self) -> Vec<[f64; 3]> {
        let d = self.dim();
        let inv_t = self
            .matrix()
            .try_inverse()
            .expect("cell validated at construction")
            .transpose();
        (0..d)
            .map(|j| {
                let mut b = [0.0; 3];
                for (i, bi) in b.iter_mut().enumerate().take(d) {
                    *bi = 2.0 * std::f64::consts::PI * inv_t[(i, j)];
                }
                b
            })
            .collect()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.vectors.iter().map(|v| norm3(v)).collect()
    }

    /// Distances between opposite faces.
    pub fn heights(&self) -> Vec<f64> {
        self.reciprocal()
            .iter()
            .map(|b| 2.0 * std::f64::consts::PI / norm3(b))
            .collect()
    }

    pub fn is_orthorhombic(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || dot3(&self.vectors[i], &self.vectors[j]).abs() < 1e-12))
    }

    pub fn scaled(&self, s: f64) -> LatticeCell {
        LatticeCell {
            vectors: self.vectors.iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect(),
        }
    }

    pub fn scaled_axes(&self, factors: &[f64]) -> LatticeCell {
        LatticeCell {
            vectors: self
                .vectors
                .iter()
                .zip(factors)
                .map(|(v, &s)| [v[0] * s, v[1] * s, v[2] * s])
                .collect(),
        }
    }

    pub fn supercell(&self, l: usize) -> LatticeCell {
        self.scaled(l as f64)
    }

    pub fn approx_eq(&self, other: &LatticeCell) -> bool {
        self.dim() == other.dim()
            && self.vectors.iter().zip(&other.vectors).all(|(a, b)| {
                let scale = norm3(a).max(norm3(b));
                (0..3).all(|i| (a[i] - b[i]).abs() <= 1e-12 * scale)
            })
    }
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}
