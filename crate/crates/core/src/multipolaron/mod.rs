//! N-body Pekar-type energies on tensor grids and the binding inequalities.

mod wavefunction;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::fft::FftNd;
use crate::fields::{min_image, soft_table, Convolver, CoulombKernel, Coupling, Grid};
use crate::optimize::{self, DescentOptions, SphereObjective};
use crate::pekar::{box_center, initial_width, Orbital};

pub use wavefunction::{density_from_wavefunction, ChargeConvention, ManyBodyWaveFunction, Symmetry, TensorBudget};
use wavefunction::project_symmetry;
pub(crate) use wavefunction::{marginals, split_index};

/// Average of 1/|x| over a cube of unit side centered at the origin.
const CUBE_INVERSE_DISTANCE: f64 = 2.380_077_1;

/// Pair repulsion between particles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Repulsion {
    /// 1/|x| with minimum-image distances; the coincident-point value is the cell average.
    Coulomb,
    /// 1/√(|x|² + a²).
    Soft { a: f64 },
}

/// Model choices for N-body runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NPolaronOptions {
    pub convention: ChargeConvention,
    pub symmetry: Symmetry,
    /// Soft-Coulomb parameter for d < 3; defaults to one grid spacing.
    pub soft_a: Option<f64>,
    pub budget: TensorBudget,
    pub descent: DescentOptions,
}

impl Default for NPolaronOptions {
    fn default() -> Self {
        NPolaronOptions {
            convention: ChargeConvention::Unit,
            symmetry: Symmetry::None,
            soft_a: None,
            budget: TensorBudget::default(),
            descent: DescentOptions::default(),
        }
    }
}

impl NPolaronOptions {
    /// (repulsion, polarization kernel): Coulomb and truncated in 3-D, soft otherwise.
    pub fn kernels(&self, grid: &Grid) -> (Repulsion, CoulombKernel) {
        if grid.dim() == 3 {
            (Repulsion::Coulomb, CoulombKernel::Truncated)
        } else {
            let a = self.soft_a.unwrap_or_else(|| grid.spacing()[0]);
            (Repulsion::Soft { a }, CoulombKernel::Soft { a })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NPolaronEnergy {
    pub energy: f64,
    pub kinetic: f64,
    pub repulsion: f64,
    pub interaction: f64,
    /// Σ_j ∫W(x_j)|Ψ|² for an optional one-body potential W.
    #[serde(default)]
    pub external: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NPolaronResult {
    pub particles: usize,
    pub energy: f64,
    pub kinetic: f64,
    pub repulsion: f64,
    pub interaction: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// E = Σ_j ½∫|∇_jΨ|² + Σ_{k<l}∫|Ψ|² w(x_k − x_l) + F^P[ρ_Ψ].
pub struct NPolaronFunctional {
    grid: Arc<Grid>,
    n: usize,
    convention: ChargeConvention,
    symmetry: Symmetry,
    repulsion: Repulsion,
    kernel: CoulombKernel,
    coupling: Coupling,
    conv: Convolver,
    shape: Vec<usize>,
    k2: Vec<f64>,
    vpair: Vec<f64>,
    external: Option<Vec<f64>>,
}

impl NPolaronFunctional {
    pub fn new(grid: &Arc<Grid>, n: usize, coupling: Coupling, opts: &NPolaronOptions) -> Result<Self> {
        let (rep, ker) = opts.kernels(grid);
        NPolaronFunctional::with_kernels(grid, n, coupling, ker, rep, opts.convention, opts.symmetry, &opts.budget)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_kernels(
        grid: &Arc<Grid>,
        n: usize,
        coupling: Coupling,
        kernel: CoulombKernel,
        repulsion: Repulsion,
        convention: ChargeConvention,
        symmetry: Symmetry,
        budget: &TensorBudget,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("particle count must be positive".into()));
        }
        budget.check(grid, n)?;
        let conv = Convolver::pekar(grid, kernel, &coupling)?;
        let m = grid.len();
        let total = m.pow(n as u32);
        let k1 = grid.k2_table();
        let w1 = pair_table(grid, repulsion);
        let mi: Vec<[usize; 3]> = (0..m).map(|i| grid.multi_index(i)).collect();
        let d = grid.dim();
        let mut k2 = vec![0.0; total];
        let mut vpair = vec![0.0; total];
        let mut idx = vec![0usize; n];
        let mut disp = [0i64; 3];
        for flat in 0..total {
            split_index(flat, m, &mut idx);
            k2[flat] = idx.iter().map(|&i| k1[i]).sum();
            let mut v = 0.0;
            for a in 0..n {
                for b in a + 1..n {
                    for ax in 0..d {
                        disp[ax] = mi[idx[a]][ax] as i64 - mi[idx[b]][ax] as i64;
                    }
                    v += w1[grid.wrap_index(&disp[..d])];
                }
            }
            vpair[flat] = v;
        }
        Ok(NPolaronFunctional {
            grid: grid.clone(),
            n,
            convention,
            symmetry,
            repulsion,
            kernel,
            coupling,
            conv,
            shape: std::iter::repeat(grid.shape().to_vec()).take(n).flatten().collect(),
            k2,
            vpair,
            external: None,
        })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn repulsion(&self) -> Repulsion {
        self.repulsion
    }

    pub fn kernel(&self) -> CoulombKernel {
        self.kernel
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn convention(&self) -> ChargeConvention {
        self.convention
    }

    /// Adds Σ_j W(x_j) to the Hamiltonian; `W` lives on the one-body grid.
    pub fn set_external(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.grid.len() {
            return Err(Error::GridMismatch);
        }
        self.external = Some(w);
        Ok(())
    }

    pub fn external(&self) -> Option<&[f64]> {
        self.external.as_deref()
    }

    fn dv(&self) -> f64 {
        self.grid.dv().powi(self.n as i32)
    }

    fn parts(&self, x: &[Complex64], want_h: bool) -> (NPolaronEnergy, Option<Vec<Complex64>>) {
        let plan = FftNd::cached(&self.shape);
        let dvn = self.dv();
        let m = self.grid.len();
        let mut c = x.to_vec();
        plan.forward(&mut c);
        let t = 0.5 * c.iter().zip(&self.k2).map(|(v, k)| k * v.norm_sqr()).sum::<f64>() * dvn / x.len() as f64;
        let r = x.iter().zip(&self.vpair).map(|(v, w)| w * v.norm_sqr()).sum::<f64>() * dvn;
        let w = self.convention.weight(self.n);
        let marg = marginals(x, m, self.n, self.grid.dv());
        let mut rho = vec![0.0; m];
        for mj in &marg {
            for (a, b) in rho.iter_mut().zip(mj) {
                *a += w * b;
            }
        }
        let u = self.conv.apply(&rho);
        let f = 0.5 * rho.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() * self.grid.dv();
        let ext = match &self.external {
            Some(wx) => marg.iter().map(|mj| mj.iter().zip(wx).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>() * self.grid.dv(),
            None => 0.0,
        };
        let energy = NPolaronEnergy { energy: t + r + f + ext, kinetic: t, repulsion: r, interaction: f, external: ext };
        let h = want_h.then(|| {
            for (v, k) in c.iter_mut().zip(&self.k2) {
                *v *= 0.5 * k;
            }
            plan.inverse(&mut c);
            let mut idx = vec![0usize; self.n];
            for (flat, (hv, xv)) in c.iter_mut().zip(x).enumerate() {
                split_index(flat, m, &mut idx);
                let mut pot = self.vpair[flat] + w * idx.iter().map(|&i| u[i]).sum::<f64>();
                if let Some(wx) = &self.external {
                    pot += idx.iter().map(|&i| wx[i]).sum::<f64>();
                }
                *hv += pot * xv;
            }
            c
        });
        (energy, h)
    }

    pub fn raw_energy(&self, x: &[Complex64]) -> NPolaronEnergy {
        self.parts(x, false).0
    }

    pub fn apply_h(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.parts(x, true).1.unwrap()
    }

    fn check(&self, psi: &ManyBodyWaveFunction) -> Result<()> {
        crate::fields::check_same(psi.grid(), &self.grid)?;
        if psi.particles() != self.n {
            return Err(Error::Invalid(format!("state has {} particles, functional {}", psi.particles(), self.n)));
        }
        Ok(())
    }

    pub fn evaluate(&self, psi: &ManyBodyWaveFunction) -> Result<NPolaronEnergy> {
        self.check(psi)?;
        Ok(self.raw_energy(psi.values()))
    }

    pub fn minimize(&self, init: &ManyBodyWaveFunction, opts: &DescentOptions) -> Result<(NPolaronResult, ManyBodyWaveFunction)> {
        self.check(init)?;
        let mut obj = NObjective { f: self };
        let out = optimize::minimize_on_sphere(&mut obj, init.values().to_vec(), opts)?;
        let (e, h) = self.parts(&out.x, true);
        let dvn = self.dv();
        let (lambda, r) = optimize::residual(&out.x, h.as_ref().unwrap(), dvn);
        let residual = optimize::norm(&r, dvn);
        let psi = ManyBodyWaveFunction::normalized(self.grid.clone(), self.n, out.x, self.symmetry)?;
        Ok((
            NPolaronResult {
                particles: self.n,
                energy: e.energy,
                kinetic: e.kinetic,
                repulsion: e.repulsion,
                interaction: e.interaction,
                lambda,
                residual,
                iterations: out.iterations,
                converged: residual <= opts.tolerance,
                history: out.energies,
            },
            psi,
        ))
    }
}

/// ½Σ_j∫|∇_jΨ|² for a tensor state on `grid`.
pub(crate) fn tensor_kinetic(grid: &Grid, n: usize, x: &[Complex64]) -> f64 {
    let shape: Vec<usize> = std::iter::repeat(grid.shape().to_vec()).take(n).flatten().collect();
    let mut c = x.to_vec();
    FftNd::cached(&shape).forward(&mut c);
    let k1 = grid.k2_table();
    let m = grid.len();
    let mut idx = vec![0usize; n];
    let mut t = 0.0;
    for (flat, v) in c.iter().enumerate() {
        split_index(flat, m, &mut idx);
        t += idx.iter().map(|&i| k1[i]).sum::<f64>() * v.norm_sqr();
    }
    0.5 * t * grid.dv().powi(n as i32) / x.len() as f64
}

/// Σ_{k<l}∫|Ψ|² w(x_k − x_l) for a tensor state on `grid`.
pub(crate) fn tensor_repulsion(grid: &Grid, n: usize, rep: Repulsion, x: &[Complex64]) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let w1 = pair_table(grid, rep);
    let m = grid.len();
    let d = grid.dim();
    let mut idx = vec![0usize; n];
    let mut disp = [0i64; 3];
    let mut r = 0.0;
    for (flat, v) in x.iter().enumerate() {
        split_index(flat, m, &mut idx);
        let mut s = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                let (ia, ib) = (grid.multi_index(idx[a]), grid.multi_index(idx[b]));
                for ax in 0..d {
                    disp[ax] = ia[ax] as i64 - ib[ax] as i64;
                }
                s += w1[grid.wrap_index(&disp[..d])];
            }
        }
        r += s * v.norm_sqr();
    }
    r * grid.dv().powi(n as i32)
}

fn pair_table(grid: &Grid, rep: Repulsion) -> Vec<f64> {
    match rep {
        Repulsion::Soft { a } => soft_table(grid, a),
        Repulsion::Coulomb => {
            let h = grid.dv().powf(1.0 / grid.dim() as f64);
            (0..grid.len())
                .map(|i| {
                    let r = min_image(grid, i);
                    if i == 0 {
                        CUBE_INVERSE_DISTANCE / h
                    } else {
                        1.0 / r
                    }
                })
                .collect()
        }
    }
}

struct NObjective<'a> {
    f: &'a NPolaronFunctional,
}

impl SphereObjective for NObjective<'_> {
    fn energy(&mut self, x: &[Complex64]) -> f64 {
        self.f.raw_energy(x).energy
    }

    fn energy_and_h(&mut self, x: &[Complex64]) -> (f64, Vec<Complex64>) {
        let (e, h) = self.f.parts(x, true);
        (e.energy, h.unwrap())
    }

    fn precondition(&self, r: &mut [Complex64]) {
        let plan = FftNd::cached(&self.f.shape);
        plan.forward(r);
        for (v, k) in r.iter_mut().zip(&self.f.k2) {
            *v /= 1.0 + 0.5 * k;
        }
        plan.inverse(r);
    }

    fn project(&self, x: &mut [Complex64]) {
        project_symmetry(x, self.f.grid.len(), self.f.n, self.f.symmetry);
    }

    fn dv(&self) -> f64 {
        self.f.dv()
    }
}

pub fn npolaron_energy(psi: &ManyBodyWaveFunction, coupling: &Coupling, opts: &NPolaronOptions) -> Result<NPolaronEnergy> {
    NPolaronFunctional::new(psi.grid(), psi.particles(), coupling.clone(), opts)?.evaluate(psi)
}

pub fn minimize_npolaron(
    init: &ManyBodyWaveFunction,
    coupling: &Coupling,
    opts: &NPolaronOptions,
) -> Result<(NPolaronResult, ManyBodyWaveFunction)> {
    let mut o = opts.clone();
    o.symmetry = init.symmetry();
    NPolaronFunctional::new(init.grid(), init.particles(), coupling.clone(), &o)?.minimize(init, &opts.descent)
}

/// Gaussian cluster: copies of `base` displaced along the first axis by `spacing`, projected.
pub fn cluster_state(base: &Orbital, n: usize, spacing: f64, symmetry: Symmetry) -> Result<ManyBodyWaveFunction> {
    let shifted: Vec<Orbital> = (0..n)
        .map(|j| {
            let off = (j as f64 - 0.5 * (n as f64 - 1.0)) * spacing;
            base.translated([off, 0.0, 0.0])
        })
        .collect();
    let refs: Vec<&Orbital> = shifted.iter().collect();
    ManyBodyWaveFunction::product(&refs, symmetry)
}

fn density_width(psi: &Orbital) -> f64 {
    let c = psi.center();
    let rho = psi.density();
    let grid = psi.grid();
    let lengths = grid.lengths();
    let mut s = 0.0;
    for (i, v) in rho.values().iter().enumerate() {
        let p = grid.point(i);
        let dx = (p[0] - c[0] + 0.5 * lengths[0]).rem_euclid(lengths[0]) - 0.5 * lengths[0];
        s += v * dx * dx;
    }
    (s * grid.dv()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Strict,
    Weak,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BindingEntry {
    pub k: usize,
    /// Estimate of E(k): the minimized energy, or the dispersal threshold when the run spread.
    pub energy: f64,
    /// Energy of the last iterate.
    pub last_energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub spreading: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCheck {
    pub k: usize,
    /// E(N−k) + E(k) − E(N).
    pub margin: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BindingReport {
    pub particles: usize,
    pub energies: Vec<BindingEntry>,
    pub splits: Vec<SplitCheck>,
    /// Slack of the weak inequality.
    pub weak_tolerance: f64,
    /// Margin required for a strict verdict.
    pub strict_threshold: f64,
    pub inconclusive: bool,
    pub binds: bool,
    pub convention: ChargeConvention,
    pub symmetry: Symmetry,
    pub repulsion: Repulsion,
    pub kernel: CoulombKernel,
    pub grid_shape: Vec<usize>,
    pub box_lengths: Vec<f64>,
    pub analog: bool,
}

impl BindingReport {
    pub fn energy(&self, k: usize) -> f64 {
        self.energies[k - 1].energy
    }

    /// Weak inequality E(N) ≤ E(N−k) + E(k) + tol on every split.
    pub fn weak_holds(&self) -> bool {
        self.splits.iter().all(|s| s.margin >= -self.weak_tolerance)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,energy,last_energy,residual,iterations,converged,spreading\n");
        for e in &self.energies {
            s += &format!(
                "{},{},{},{},{},{},{}\n",
                e.k, e.energy, e.last_energy, e.residual, e.iterations, e.converged, e.spreading
            );
        }
        s
    }
}

/// Computes E(1..N) and evaluates E(N) < E(N−k) + E(k) for every split.
pub fn binding_check(grid: &Arc<Grid>, n: usize, coupling: &Coupling, opts: &NPolaronOptions) -> Result<BindingReport> {
    if n < 2 {
        return Err(Error::Invalid("binding needs at least two particles".into()));
    }
    opts.budget.check(grid, n)?;
    let alpha = coupling.alpha().unwrap_or(0.5);
    let shortest = grid.lengths().into_iter().fold(f64::INFINITY, f64::min);
    let width = initial_width(alpha, grid.dim()).min(shortest / 20.0);
    let center = box_center(grid);
    let gauss = Orbital::gaussian(grid, width, center);

    let run = |k: usize, init: ManyBodyWaveFunction| -> Result<(BindingEntry, Option<ManyBodyWaveFunction>)> {
        let f = NPolaronFunctional::new(grid, k, coupling.clone(), &NPolaronOptions { symmetry: init.symmetry(), ..opts.clone() })?;
        match f.minimize(&init, &opts.descent) {
            Ok((r, psi)) => Ok((
                BindingEntry { k, energy: r.energy, last_energy: r.energy, residual: r.residual, iterations: r.iterations, converged: r.converged, spreading: false },
                Some(psi),
            )),
            Err(Error::Spreading { energy, iterations, .. }) => Ok((
                BindingEntry { k, energy, last_energy: energy, residual: f64::NAN, iterations, converged: false, spreading: true },
                None,
            )),
            Err(e) => Err(e),
        }
    };

    let (e1, psi1) = run(1, ManyBodyWaveFunction::from_orbital(&gauss))?;
    let base = match &psi1 {
        Some(p) => Orbital::new(crate::fields::ComplexField::new(grid.clone(), p.values().to_vec())?)?,
        None => gauss.clone(),
    };
    let spacing = match opts.symmetry {
        Symmetry::Antisymmetric => density_width(&base).max(grid.spacing()[0]),
        _ => 0.0,
    };
    let mut rest: Vec<BindingEntry> = (2..=n)
        .into_par_iter()
        .map(|k| -> Result<BindingEntry> {
            let init = cluster_state(&base, k, spacing, opts.symmetry)?;
            Ok(run(k, init)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut energies = vec![e1];
    energies.append(&mut rest);
    // A spreading run has no bound state: its infimum is the dispersal threshold.
    for k in 1..=n {
        if energies[k - 1].spreading {
            energies[k - 1].energy =
                (1..k).map(|j| energies[j - 1].energy + energies[k - j - 1].energy).fold(0.0_f64, f64::min);
        }
    }

    let en = energies[n - 1].energy;
    let weak_tolerance = 1e-4 * en.abs();
    let strict_threshold = 10.0 * opts.descent.tolerance;
    let splits = (1..n)
        .map(|k| {
            let margin = energies[n - k - 1].energy + energies[k - 1].energy - en;
            let verdict = if margin > strict_threshold {
                Verdict::Strict
            } else if margin >= -weak_tolerance {
                Verdict::Weak
            } else {
                Verdict::Violated
            };
            SplitCheck { k, margin, verdict }
        })
        .collect::<Vec<_>>();
    let inconclusive = energies.iter().any(|e| !e.converged);
    let binds = !inconclusive && splits.iter().all(|s| s.verdict == Verdict::Strict);
    let probe = NPolaronFunctional::new(grid, 1, coupling.clone(), opts)?;
    Ok(BindingReport {
        particles: n,
        energies,
        splits,
        weak_tolerance,
        strict_threshold,
        inconclusive,
        binds,
        convention: opts.convention,
        symmetry: opts.symmetry,
        repulsion: probe.repulsion(),
        kernel: probe.kernel(),
        grid_shape: grid.shape().to_vec(),
        box_lengths: grid.lengths(),
        analog: grid.dim() < 3,
    })
}
