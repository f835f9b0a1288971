use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::optimize;
use crate::pekar::Orbital;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    #[default]
    None,
    Symmetric,
    Antisymmetric,
}

/// How the N-body density enters the polarization term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChargeConvention {
    /// ρ_Ψ = (1/N) Σ_j ρ_j, ∫ρ_Ψ = 1.
    #[default]
    Unit,
    /// ρ_Ψ = Σ_j ρ_j, ∫ρ_Ψ = N.
    ParticleCount,
}

impl ChargeConvention {
    pub(crate) fn weight(self, n: usize) -> f64 {
        match self {
            ChargeConvention::Unit => 1.0 / n as f64,
            ChargeConvention::ParticleCount => 1.0,
        }
    }
}

/// Limits on the full tensor grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensorBudget {
    /// Maximum N·d.
    pub max_dims: usize,
    /// Maximum number of complex values.
    pub max_values: usize,
}

impl Default for TensorBudget {
    fn default() -> Self {
        TensorBudget { max_dims: 6, max_values: 1 << 25 }
    }
}

impl TensorBudget {
    pub fn check(&self, grid: &Grid, n: usize) -> Result<()> {
        let dims = n * grid.dim();
        let needed = (grid.len() as f64).powi(n as i32);
        if dims > self.max_dims || needed > self.max_values as f64 {
            return Err(Error::Budget { needed: needed.min(usize::MAX as f64) as usize, budget: self.max_values });
        }
        Ok(())
    }
}

/// Ψ(x_1, …, x_N) on the N-fold product of a one-body grid; particle 1 varies slowest.
#[derive(Clone, Debug)]
pub struct ManyBodyWaveFunction {
    n: usize,
    grid: Arc<Grid>,
    values: Vec<Complex64>,
    symmetry: Symmetry,
    norm: f64,
}

impl ManyBodyWaveFunction {
    pub fn new(grid: Arc<Grid>, n: usize, values: Vec<Complex64>, symmetry: Symmetry) -> Result<Self> {
        if n == 0 {
            return invalid("particle count must be positive");
        }
        let m = grid.len();
        if values.len() as f64 != (m as f64).powi(n as i32) {
            return invalid("tensor size does not match grid^N");
        }
        let dv = grid.dv().powi(n as i32);
        let norm = optimize::norm(&values, dv);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(norm));
        }
        let psi = ManyBodyWaveFunction { n, grid, values, symmetry, norm };
        let defect = psi.symmetry_defect();
        if defect > 1e-10 {
            return invalid(format!("declared {:?} symmetry violated by {defect:.3e}", symmetry));
        }
        Ok(psi)
    }

    /// Rescales to unit norm before validating.
    pub fn normalized(grid: Arc<Grid>, n: usize, mut values: Vec<Complex64>, symmetry: Symmetry) -> Result<Self> {
        let dv = grid.dv().powi(n as i32);
        let nv = optimize::norm(&values, dv);
        if !(nv > 0.0) {
            return Err(Error::NotNormalized(nv));
        }
        for v in values.iter_mut() {
            *v /= nv;
        }
        ManyBodyWaveFunction::new(grid, n, values, symmetry)
    }

    pub fn from_orbital(psi: &Orbital) -> Self {
        ManyBodyWaveFunction {
            n: 1,
            grid: psi.grid().clone(),
            values: psi.values().to_vec(),
            symmetry: Symmetry::None,
            norm: psi.norm(),
        }
    }

    /// Projected and normalized product φ_1 ⊗ … ⊗ φ_N.
    pub fn product(orbitals: &[&Orbital], symmetry: Symmetry) -> Result<Self> {
        let n = orbitals.len();
        if n == 0 {
            return invalid("empty product");
        }
        let grid = orbitals[0].grid().clone();
        for o in orbitals {
            crate::fields::check_same(o.grid(), &grid)?;
        }
        let m = grid.len();
        let total = m.pow(n as u32);
        let mut values = vec![Complex64::new(0.0, 0.0); total];
        let mut idx = vec![0usize; n];
        for (flat, v) in values.iter_mut().enumerate() {
            split_index(flat, m, &mut idx);
            let mut p = Complex64::new(1.0, 0.0);
            for (j, &i) in idx.iter().enumerate() {
                p *= orbitals[j].values()[i];
            }
            *v = p;
        }
        project_symmetry(&mut values, m, n, symmetry);
        ManyBodyWaveFunction::normalized(grid, n, values, symmetry)
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
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

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Volume element of the N-body grid.
    pub fn dv(&self) -> f64 {
        self.grid.dv().powi(self.n as i32)
    }

    /// Same state with particles relabelled: result(x_1..x_N) = Ψ(x_{π(1)}..x_{π(N)}).
    pub fn permuted(&self, perm: &[usize]) -> Vec<Complex64> {
        permute(&self.values, self.grid.len(), perm)
    }

    /// Largest deviation from the declared symmetry over adjacent transpositions.
    pub fn symmetry_defect(&self) -> f64 {
        let sign = match self.symmetry {
            Symmetry::None => return 0.0,
            Symmetry::Symmetric => 1.0,
            Symmetry::Antisymmetric => -1.0,
        };
        let mut worst = 0.0f64;
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        for j in 0..self.n.saturating_sub(1) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            perm.swap(j, j + 1);
            let p = self.permuted(&perm);
            for (a, b) in p.iter().zip(&self.values) {
                worst = worst.max((a - sign * b).norm() / scale);
            }
        }
        worst
    }

    /// One-body marginals ρ_j(x) = ∫|Ψ|² over all other particles.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        marginals(&self.values, self.grid.len(), self.n, self.grid.dv())
    }

    pub fn density(&self, convention: ChargeConvention) -> ScalarField {
        let w = convention.weight(self.n);
        let m = self.grid.len();
        let mut rho = vec![0.0; m];
        for marg in self.marginals() {
            for (r, v) in rho.iter_mut().zip(&marg) {
                *r += w * v;
            }
        }
        ScalarField::new(self.grid.clone(), rho).unwrap()
    }

    pub fn participation(&self) -> f64 {
        optimize::participation(&self.values, self.dv())
    }
}

/// ρ_Ψ with the paper's unit normalization.
pub fn density_from_wavefunction(psi: &ManyBodyWaveFunction) -> ScalarField {
    psi.density(ChargeConvention::Unit)
}

pub(crate) fn split_index(mut flat: usize, m: usize, idx: &mut [usize]) {
    for j in (0..idx.len()).rev() {
        idx[j] = flat % m;
        flat /= m;
    }
}

pub(crate) fn join_index(idx: &[usize], m: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * m + i)
}

pub(crate) fn permute(values: &[Complex64], m: usize, perm: &[usize]) -> Vec<Complex64> {
    let n = perm.len();
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    let mut idx = vec![0usize; n];
    let mut src = vec![0usize; n];
    for (flat, o) in out.iter_mut().enumerate() {
        split_index(flat, m, &mut idx);
        for j in 0..n {
            src[j] = idx[perm[j]];
        }
        *o = values[join_index(&src, m)];
    }
    out
}

/// All permutations of 0..n with their signs (Heap's algorithm).
pub(crate) fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![(a.clone(), 1.0)];
    let mut c = vec![0usize; n];
    let mut sign = 1.0;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            sign = -sign;
            out.push((a.clone(), sign));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Orthogonal projection onto the (anti)symmetric sector.
pub(crate) fn project_symmetry(values: &mut [Complex64], m: usize, n: usize, symmetry: Symmetry) {
    if symmetry == Symmetry::None || n < 2 {
        return;
    }
    let perms = permutations(n);
    let mut acc = vec![Complex64::new(0.0, 0.0); values.len()];
    for (perm, sign) in &perms {
        let s = if symmetry == Symmetry::Antisymmetric { *sign } else { 1.0 };
        let p = permute(values, m, perm);
        for (a, b) in acc.iter_mut().zip(&p) {
            *a += s * b;
        }
    }
    let w = 1.0 / perms.len() as f64;
    for (v, a) in values.iter_mut().zip(&acc) {
        *v = a * w;
    }
}

pub(crate) fn marginals(values: &[Complex64], m: usize, n: usize, dv1: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m]; n];
    let mut idx = vec![0usize; n];
    let w = dv1.powi(n as i32 - 1);
    for (flat, v) in values.iter().enumerate() {
        let p = v.norm_sqr() * w;
        if p == 0.0 {
            continue;
        }
        split_index(flat, m, &mut idx);
        for (j, &i) in idx.iter().enumerate() {
            out[j][i] += p;
        }
    }
    out
}
