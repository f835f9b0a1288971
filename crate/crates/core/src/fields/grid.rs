use std::sync::Arc;

use serde::Serialize;

use super::lattice::LatticeCell;
use crate::error::{invalid, Result};

/// Uniform periodic grid spanning one copy of `cell`, starting at `origin`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    cell: LatticeCell,
    shape: Vec<usize>,
    origin: [f64; 3],
    #[serde(skip)]
    recip: Vec<[f64; 3]>,
}

impl Grid {
    pub fn new(cell: LatticeCell, shape: Vec<usize>, origin: [f64; 3]) -> Result<Arc<Grid>> {
        if shape.len() != cell.dim() {
            return invalid(format!(
                "grid has {} axes but the cell has dimension {}",
                shape.len(),
                cell.dim()
            ));
        }
        if shape.iter().any(|&n| n < 4 || n % 2 != 0) {
            return invalid(format!("grid points per axis must be even and >= 4, got {shape:?}"));
        }
        let recip = cell.reciprocal();
        Ok(Arc::new(Grid { cell, shape, origin, recip }))
    }

    /// Grid on a lattice cell with origin at a lattice point.
    pub fn on_cell(cell: LatticeCell, shape: Vec<usize>) -> Result<Arc<Grid>> {
        Grid::new(cell, shape, [0.0; 3])
    }

    /// Orthorhombic box centered at the origin.
    pub fn centered_box(lengths: &[f64], shape: Vec<usize>) -> Result<Arc<Grid>> {
        let cell = LatticeCell::orthorhombic(lengths)?;
        let mut origin = [0.0; 3];
        for (o, l) in origin.iter_mut().zip(lengths) {
            *o = -0.5 * l;
        }
        Grid::new(cell, shape, origin)
    }

    pub fn cubic_box(d: usize, length: f64, n: usize) -> Result<Arc<Grid>> {
        Grid::centered_box(&vec![length; d], vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell(&self) -> &LatticeCell {
        &self.cell
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn volume(&self) -> f64 {
        self.cell.volume()
    }

    pub fn dv(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.cell.lengths()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lengths().iter().zip(&self.shape).map(|(l, &n)| l / n as f64).collect()
    }

    pub fn reciprocal(&self) -> &[[f64; 3]] {
        &self.recip
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for ax in (0..self.dim()).rev() {
            idx[ax] = flat % self.shape[ax];
            flat /= self.shape[ax];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Flat index of a (possibly negative or out-of-range) periodic multi-index.
    pub fn wrap_index(&self, idx: &[i64]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i.rem_euclid(n as i64) as usize)
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut x = self.origin;
        for ax in 0..self.dim() {
            let f = idx[ax] as f64 / self.shape[ax] as f64;
            let a = self.cell.vectors()[ax];
            for c in 0..3 {
                x[c] += f * a[c];
            }
        }
        x
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Signed frequency in (−n/2, n/2] for FFT index j.
    pub fn frequency(j: usize, n: usize) -> i64 {
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0.0; 3];
        for ax in 0..self.dim() {
            let m = Grid::frequency(idx[ax], self.shape[ax]) as f64;
            for c in 0..3 {
                k[c] += m * self.recip[ax][c];
            }
        }
        k
    }

    /// Calls `f(flat, k)` for every wave vector in FFT order.
    pub fn for_each_k<F: FnMut(usize, [f64; 3])>(&self, mut f: F) {
        let d = self.dim();
        let axis_k: Vec<Vec<[f64; 3]>> = (0..d)
            .map(|ax| {
                let n = self.shape[ax];
                (0..n)
                    .map(|j| {
                        let m = Grid::frequency(j, n) as f64;
                        let b = self.recip[ax];
                        [m * b[0], m * b[1], m * b[2]]
                    })
                    .collect()
            })
            .collect();
        let mut flat = 0;
        let n1 = if d > 1 { self.shape[1] } else { 1 };
        let n2 = if d > 2 { self.shape[2] } else { 1 };
        for i0 in 0..self.shape[0] {
            let k0 = axis_k[0][i0];
            for i1 in 0..n1 {
                let k1 = if d > 1 { axis_k[1][i1] } else { [0.0; 3] };
                for i2 in 0..n2 {
                    let k2 = if d > 2 { axis_k[2][i2] } else { [0.0; 3] };
                    f(flat, [k0[0] + k1[0] + k2[0], k0[1] + k1[1] + k2[1], k0[2] + k1[2] + k2[2]]);
                    flat += 1;
                }
            }
        }
    }

    pub fn k2_table(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.for_each_k(|i, k| out[i] = k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        out
    }

    /// Same index layout, every length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Arc<Grid> {
        let o = self.origin;
        Grid::new(self.cell.scaled(s), self.shape.clone(), [o[0] * s, o[1] * s, o[2] * s])
            .expect("scaling preserves validity")
    }

    /// `l` copies of the cell per axis at the same spacing.
    pub fn supercell(&self, l: usize) -> Arc<Grid> {
        Grid::new(
            self.cell.supercell(l),
            self.shape.iter().map(|n| n * l).collect(),
            self.origin,
        )
        .expect("supercell preserves validity")
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.shape == other.shape
            && self.cell.approx_eq(&other.cell)
            && (0..3).all(|c| (self.origin[c] - other.origin[c]).abs() <= 1e-12 * (1.0 + self.origin[c].abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Grid::centered_box(&[2.0, 3.0, 4.0], vec![4, 6, 8]).unwrap();
        for flat in [0, 5, 17, g.len() - 1] {
            let idx = g.multi_index(flat);
            assert_eq!(g.flat_index(&idx[..3]), flat);
        }
        assert_eq!(g.spacing(), vec![0.5, 0.5, 0.5]);
        assert!((g.dv() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn wavevectors_match_table() {
        let g = Grid::centered_box(&[2.0, 3.0], vec![4, 6]).unwrap();
        let mut seen = 0;
        g.for_each_k(|i, k| {
            let w = g.wavevector(i);
            assert!((0..3).all(|c| (w[c] - k[c]).abs() < 1e-14));
            seen += 1;
        });
        assert_eq!(seen, g.len());
    }

    #[test]
    fn rejects_odd_or_small() {
        assert!(Grid::cubic_box(1, 1.0, 5).is_err());
        assert!(Grid::cubic_box(1, 1.0, 2).is_err());
    }
}
