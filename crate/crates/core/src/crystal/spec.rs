use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{dot3, norm3, Grid, LatticeCell, ScalarField};

/// Normalized Gaussian charge inside the unit cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nucleus {
    pub center: Vec<f64>,
    pub width: f64,
    pub charge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScfControls {
    pub mixing: f64,
    /// Stop when ‖ρ_out − ρ_in‖_{L²(Γ)} falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Anderson history length; 0 means plain linear mixing.
    pub anderson_depth: usize,
    /// Iterations without a new best residual before the mixing is restarted.
    pub stagnation_window: usize,
    /// Kerker wavevector k₀: residual components are damped by k²/(k²+k₀²); 0 disables.
    pub kerker: f64,
}

impl Default for ScfControls {
    fn default() -> Self {
        ScfControls { mixing: 0.3, tolerance: 1e-8, max_iterations: 300, anderson_depth: 0, stagnation_window: 25, kerker: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSpec {
    pub cell: LatticeCell,
    #[serde(default)]
    pub nuclei: Vec<Nucleus>,
    /// Uniform positive charge density added to the nuclei.
    #[serde(default)]
    pub background: f64,
    /// Electrons per cell.
    pub electrons: usize,
    /// Plane-wave kinetic cutoff: ½|ξ+G|² ≤ cutoff.
    pub cutoff: f64,
    pub kpoints: Vec<usize>,
    /// Bands computed beyond Z + 1.
    #[serde(default)]
    pub extra_bands: usize,
    /// Real-space grid; derived from the cutoff when absent.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    #[serde(default)]
    pub scf: ScfControls,
}

impl CrystalSpec {
    /// Uniform μ = Z/|Γ|.
    pub fn homogeneous(cell: LatticeCell, electrons: usize, cutoff: f64, kpoints: Vec<usize>) -> CrystalSpec {
        let background = electrons as f64 / cell.volume();
        CrystalSpec {
            cell,
            nuclei: Vec::new(),
            background,
            electrons,
            cutoff,
            kpoints,
            extra_bands: 0,
            grid: None,
            scf: ScfControls::default(),
        }
    }

    /// No nuclei, no electrons.
    pub fn vacuum(cell: LatticeCell, cutoff: f64, kpoints: Vec<usize>) -> CrystalSpec {
        CrystalSpec::homogeneous(cell, 0, cutoff, kpoints)
    }

    pub fn dim(&self) -> usize {
        self.cell.dim()
    }

    pub fn volume(&self) -> f64 {
        self.cell.volume()
    }

    pub fn bands(&self) -> usize {
        self.electrons + 1 + self.extra_bands
    }

    pub fn total_charge(&self) -> f64 {
        self.nuclei.iter().map(|n| n.charge).sum::<f64>() + self.background * self.cell.volume()
    }

    /// Every violated invariant, each prefixed by its field path.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = LatticeCell::new(self.cell.vectors().to_vec()) {
            errs.push(format!("cell: {e}"));
            return errs;
        }
        let d = self.dim();
        for (i, n) in self.nuclei.iter().enumerate() {
            if n.center.len() != d {
                errs.push(format!("nuclei[{i}].center: expected {d} coordinates, got {}", n.center.len()));
            }
            if !(n.width > 0.0) || !n.width.is_finite() {
                errs.push(format!("nuclei[{i}].width: must be positive, got {}", n.width));
            }
            if !n.charge.is_finite() {
                errs.push(format!("nuclei[{i}].charge: must be finite"));
            }
        }
        if !(self.background >= 0.0) || !self.background.is_finite() {
            errs.push(format!("background: must be non-negative, got {}", self.background));
        }
        let q = self.total_charge();
        if (q - self.electrons as f64).abs() > 1e-10 * (self.electrons as f64).max(1.0) {
            errs.push(format!("electrons: local neutrality violated, ∫μ = {q} over the cell but Z = {}", self.electrons));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            errs.push(format!("cutoff: must be positive, got {}", self.cutoff));
        }
        if self.kpoints.len() != d || self.kpoints.iter().any(|&k| k == 0) {
            errs.push(format!("kpoints: expected {d} positive counts, got {:?}", self.kpoints));
        }
        if let Some(g) = &self.grid {
            if g.len() != d || g.iter().any(|&n| n < 4 || n % 2 == 1) {
                errs.push(format!("grid: expected {d} even sizes ≥ 4, got {g:?}"));
            }
        }
        let s = &self.scf;
        if !(s.mixing > 0.0 && s.mixing <= 1.0) {
            errs.push(format!("scf.mixing: must lie in (0, 1], got {}", s.mixing));
        }
        if !(s.tolerance > 0.0) {
            errs.push(format!("scf.tolerance: must be positive, got {}", s.tolerance));
        }
        if !(s.kerker >= 0.0) {
            errs.push(format!("scf.kerker: must be non-negative, got {}", s.kerker));
        }
        if s.max_iterations == 0 {
            errs.push("scf.max_iterations: must be positive".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(errs.join("; ")))
        }
    }

    /// Largest Miller index per axis reachable within the cutoff from any ξ in the zone.
    pub(crate) fn miller_bounds(&self) -> Vec<i64> {
        let recip = self.cell.reciprocal();
        let kmax = 0.5 * recip.iter().map(norm3).sum::<f64>();
        let gmax = (2.0 * self.cutoff).sqrt() + kmax;
        self.cell.vectors().iter().map(|a| (gmax * norm3(a) / (2.0 * PI)).floor() as i64 + 1).collect()
    }

    pub fn grid_shape(&self) -> Vec<usize> {
        match &self.grid {
            Some(g) => g.clone(),
            None => self
                .miller_bounds()
                .iter()
                .map(|&m| {
                    let n = (4 * m + 2) as usize;
                    (n + n % 2).max(8)
                })
                .collect(),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::on_cell(self.cell.clone(), self.grid_shape())
    }

    /// μ⁰_per on `grid`, built from its Fourier coefficients.
    pub fn nuclear_density(&self, grid: &Arc<Grid>) -> Result<ScalarField> {
        if !grid.cell().approx_eq(&self.cell) {
            return Err(Error::CellMismatch);
        }
        let vol = self.volume();
        let mut c = vec![Complex64::new(0.0, 0.0); grid.len()];
        grid.for_each_k(|i, k| {
            let k2 = dot3(&k, &k);
            let mut s = Complex64::new(0.0, 0.0);
            for n in &self.nuclei {
                let mut r = [0.0; 3];
                r[..n.center.len()].copy_from_slice(&n.center);
                s += n.charge * (-0.5 * n.width * n.width * k2).exp() * Complex64::from_polar(1.0, -dot3(&k, &r));
            }
            c[i] = s / vol;
        });
        c[0] += self.background;
        FftNd::cached(grid.shape()).inverse_unnormalized(&mut c);
        ScalarField::new(grid.clone(), c.iter().map(|v| v.re).collect())
    }

    /// L×…×L supercell sampled at Γ, with the nuclei replicated and Z·L^d electrons.
    pub fn supercell(&self, l: usize) -> CrystalSpec {
        let d = self.dim();
        let vecs = self.cell.vectors();
        let mut nuclei = Vec::new();
        let cells = l.pow(d as u32);
        for t in 0..cells {
            let mut shift = [0.0; 3];
            let mut rest = t;
            for a in vecs.iter().take(d) {
                let j = (rest % l) as f64;
                rest /= l;
                for (s, v) in shift.iter_mut().zip(a) {
                    *s += j * v;
                }
            }
            for n in &self.nuclei {
                let center = n.center.iter().zip(&shift).map(|(c, s)| c + s).collect();
                nuclei.push(Nucleus { center, width: n.width, charge: n.charge });
            }
        }
        CrystalSpec {
            cell: self.cell.supercell(l),
            nuclei,
            background: self.background,
            electrons: self.electrons * cells,
            cutoff: self.cutoff,
            kpoints: vec![1; d],
            extra_bands: self.extra_bands,
            grid: Some(self.grid_shape().iter().map(|n| n * l).collect()),
            scf: self.scf.clone(),
        }
    }
}
