//! Acceptance run: one PASS/FAIL line per criterion, with wall time against its budget.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use polaron_core::crystal::{bloch_bands, fermi_level, scf_ground_state, scf_step, CrystalGroundState, CrystalSpec, Nucleus};
use polaron_core::defect::{decoupling_test, defect_energy, ChargeBlob, DefectDensity, DefectOptions, DefectProblem, DefectSolver};
use polaron_core::fields::{coulomb_energy_free, pekar_interaction, CoulombKernel, Coupling, Grid, LatticeCell, ScalarField};
use polaron_core::macroscopic::*;
use polaron_core::multipolaron::{
    binding_check, npolaron_energy, BindingReport, ChargeConvention, ManyBodyWaveFunction, NPolaronOptions, Symmetry, Verdict,
};
use polaron_core::optimize::DescentOptions;
use polaron_core::pekar::{box_center, initial_orbital, pekar_energy, Orbital, PekarFunctional, PekarResult};
use polaron_core::{DielectricTensor, Error};
use rand::Rng;

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T>(r: polaron_core::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

const A: f64 = 3.0;
const BOX: f64 = 6.0;
const Q: f64 = 1.0 / 16.0;
const LADDER: [f64; 3] = [0.5, 0.25, 0.125];

fn chain_spec(cutoff: f64) -> CrystalSpec {
    let mut s = CrystalSpec::homogeneous(LatticeCell::cubic(1, A).unwrap(), 1, cutoff, vec![8]);
    s.background = 0.0;
    s.nuclei = vec![Nucleus { center: vec![0.5 * A], width: 0.2, charge: 1.0 }];
    s.scf.anderson_depth = 5;
    s.scf.kerker = 1.0;
    s.scf.mixing = 0.5;
    s.scf.tolerance = 1e-9;
    s
}

fn vacuum(d: usize) -> CrystalGroundState {
    scf_ground_state(&CrystalSpec::vacuum(LatticeCell::cubic(d, A).unwrap(), 20.0, vec![1; d])).unwrap()
}

fn shell(q: f64) -> DefectDensity {
    DefectDensity::Blobs(vec![
        ChargeBlob { charge: q, dipole: vec![], width: 0.8, offset: vec![0.0] },
        ChargeBlob { charge: -q, dipole: vec![], width: 1.4, offset: vec![0.0] },
    ])
}

fn kernel_identity() -> Check {
    let grid = Grid::cubic_box(3, 12.0, 32).unwrap();
    let mut r = common::rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rho = common::band_limited(&grid, &mut r, false);
        let eps = r.gen_range(1.1..8.0);
        let d = ok(coulomb_energy_free(&rho, &rho))?.value;
        let f = ok(pekar_interaction(&rho, &ok(DielectricTensor::scalar(3, eps))?))?;
        worst = worst.max(common::rel(f, -(1.0 - 1.0 / eps) / 2.0 * d));
    }
    ensure!(worst < 1e-10, "worst relative deviation {worst:.2e}");
    Ok(format!("worst relative deviation {worst:.2e} over 20 densities"))
}

fn gaussian_self_energy() -> Check {
    let grid = Grid::cubic_box(3, 16.0, 64).unwrap();
    let g = common::gaussian(&grid, 1.0, [0.0; 3]);
    let d = ok(coulomb_energy_free(&g, &g))?.value;
    let err = common::rel(d, 1.0 / PI.sqrt());
    ensure!(err < 5e-3, "D(g,g) = {d}, relative error {err:.2e}");
    Ok(format!("D(g,g) = {d:.6}, relative error {err:.2e}"))
}

fn hydrogenic() -> Check {
    let eps = ok(DielectricTensor::scalar(3, 2.0))?;
    let alpha = 0.5;
    let mut out = vec![];
    for beta in [0.5, 1.0, 2.0] {
        let grid = Grid::cubic_box(3, 30.0 / beta, 96).unwrap();
        let psi = ok(Orbital::hydrogenic(&grid, beta, [0.0; 3]))?;
        let e = ok(pekar_energy(&psi, &eps))?.energy;
        let exact = beta * beta / 2.0 - 5.0 * alpha * beta / 16.0;
        let err = common::rel(e, exact);
        ensure!(err < 0.01, "β = {beta}: E = {e}, closed form {exact}, relative error {err:.2e}");
        out.push(format!("β={beta}: {err:.1e}"));
    }
    Ok(format!("relative errors {}", out.join(", ")))
}

fn isotropic_minimum(alpha: f64) -> std::result::Result<PekarResult, String> {
    let grid = Grid::cubic_box(3, 40.0 / alpha, 64).unwrap();
    let f = ok(PekarFunctional::new(&grid, Coupling::Isotropic { alpha }, CoulombKernel::Truncated))?;
    let init = initial_orbital(&grid, f.coupling());
    Ok(ok(f.minimize(&init, &DescentOptions::default()))?.0)
}

fn scaling_law(e1: &PekarResult) -> Check {
    let mut out = vec![];
    for alpha in [0.5, 2.0] {
        let ea = isotropic_minimum(alpha)?;
        let err = common::rel(ea.energy, alpha * alpha * e1.energy);
        ensure!(ea.converged && err < 1e-3, "α = {alpha}: E = {}, α²E(1) = {}, error {err:.2e}", ea.energy, alpha * alpha * e1.energy);
        out.push(format!("α={alpha}: {err:.1e}"));
    }
    Ok(format!("E*(1) = {:.6}; relative errors {}", e1.energy, out.join(", ")))
}

fn virial(r: &PekarResult) -> Check {
    let err = common::rel(2.0 * r.kinetic, r.interaction.abs());
    ensure!(err < 1e-3, "2T = {}, |F| = {}, error {err:.2e}", 2.0 * r.kinetic, r.interaction.abs());
    ensure!(r.residual <= 1e-6, "Choquard residual {:.2e}", r.residual);
    Ok(format!("2T vs |F| relative {err:.2e}, residual {:.2e}", r.residual))
}

fn bands() -> Check {
    let t = Instant::now();
    let cell = LatticeCell::cubic(1, 1.5).unwrap();
    let grid = Grid::on_cell(cell.clone(), vec![48]).unwrap();
    let bands = ok(bloch_bands(&ScalarField::zeros(grid), &cell, 250.0, &[5], 6))?;
    let b1 = 2.0 * PI / 1.5;
    let mut worst: f64 = 0.0;
    for b in &bands {
        let mut free: Vec<f64> = (-12i64..=12).map(|i| 0.5 * (b.kpoint[0] + i as f64 * b1).powi(2)).collect();
        free.sort_by(f64::total_cmp);
        for (e, f) in b.energies.iter().zip(&free) {
            worst = worst.max((e - f).abs());
        }
    }
    ensure!(worst < 1e-10, "empty lattice deviation {worst:.2e}");
    let t_empty = t.elapsed();

    let t = Instant::now();
    let mut metal = CrystalSpec::homogeneous(LatticeCell::cubic(1, 1.0).unwrap(), 1, 60.0, vec![16]);
    metal.scf.max_iterations = 5;
    let msg = match scf_ground_state(&metal) {
        Err(e) => e.to_string(),
        Ok(_) => return Err("metallic spec converged".into()),
    };
    ensure!(msg.contains("H7 violated"), "metallic spec raised '{msg}'");
    let t_metal = t.elapsed();

    let t = Instant::now();
    let unit = LatticeCell::cubic(1, 1.0).unwrap();
    let cosine = |n: usize| ScalarField::from_fn(Grid::on_cell(unit.clone(), vec![n]).unwrap(), |x| 2.0 * (2.0 * PI * x[0]).cos());
    let gap = |cutoff: f64, n: usize| -> std::result::Result<f64, String> {
        Ok(ok(fermi_level(&ok(bloch_bands(&cosine(n), &unit, cutoff, &[2], 3))?, 1))?.1)
    };
    let (g1, g4) = (gap(400.0, 64)?, gap(1600.0, 128)?);
    ensure!((g1 - g4).abs() < 1e-6, "gap {g1} vs 4×-cutoff {g4}");
    let t_gap = t.elapsed();

    let t = Instant::now();
    let spec = CrystalSpec::homogeneous(unit.clone(), 1, 60.0, vec![3]);
    let uniform = ScalarField::from_fn(ok(spec.grid())?, |_| 1.0);
    let (_, res) = ok(scf_step(&spec, &uniform))?;
    ensure!(res <= 1e-10, "homogeneous fixed-point residual {res:.2e}");
    let t_fix = t.elapsed();
    let minute = Duration::from_secs(60);
    ensure!([t_empty, t_metal, t_gap, t_fix].iter().all(|t| *t < minute), "a sub-check exceeded one minute");
    Ok(format!("empty lattice {worst:.1e}; H7 raised; gap |Δ| {:.1e}; fixed point {res:.1e}", (g1 - g4).abs()))
}

fn random_neutral(r: &mut impl Rng) -> DefectDensity {
    let q = r.gen_range(-0.4..0.4);
    let p = r.gen_range(-0.3..0.3);
    let x = r.gen_range(-2.0..2.0);
    DefectDensity::Blobs(vec![
        ChargeBlob { charge: q, dipole: vec![p], width: r.gen_range(0.6..1.2), offset: vec![x] },
        ChargeBlob { charge: -q, dipole: vec![], width: r.gen_range(0.6..1.2), offset: vec![-x] },
    ])
}

fn defect_properties(g: &CrystalGroundState) -> Check {
    let solver = ok(DefectSolver::new(g, 8))?;
    let grid = solver.grid().clone();
    let zero = ok(solver.solve(&ScalarField::zeros(grid.clone())))?.energy;
    ensure!(zero == 0.0, "F[0] = {zero}");
    let tol = 1e-8;
    let mut r = common::rng(17);
    let dens: Vec<ScalarField> = (0..10).map(|_| random_neutral(&mut r).sample(&grid).unwrap()).collect();
    let f: Vec<f64> = dens.iter().map(|n| solver.solve(n).map(|s| s.energy)).collect::<polaron_core::Result<_>>().map_err(|e| e.to_string())?;
    ensure!(f.iter().all(|&v| v <= tol), "positive F: {f:?}");
    for i in 0..5 {
        let (a, b) = (&dens[2 * i], &dens[2 * i + 1]);
        let mid = ok(solver.solve(&ok(a.combine(0.5, b, 0.5))?))?.energy;
        ensure!(mid >= 0.5 * (f[2 * i] + f[2 * i + 1]) - tol, "concavity fails for pair {i}");
    }
    let nu = ok(shell(0.5).sample(&grid))?;
    let ratios: Vec<f64> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&t| solver.solve(&nu.scaled(t)).map(|s| s.energy / (t * t)))
        .collect::<polaron_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    ensure!(ratios.iter().all(|x| common::rel(*x, ratios[1]) < 0.05), "F[tν]/t² = {ratios:?}");
    let p = DefectProblem { ground: g, density: shell(0.3), ladder: vec![8, 16, 32], options: DefectOptions::default() };
    let lad = ok(defect_energy(&p))?;
    ensure!(lad.converged && lad.within_spread, "ladder {:?}", lad.ladder.iter().map(|e| e.energy).collect::<Vec<_>>());
    Ok(format!(
        "max F = {:.1e}; F[tν]/t² spread {:.1e}; ladder L=8,16,32 → {:.6e}",
        f.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ratios.iter().map(|x| common::rel(*x, ratios[1])).fold(0.0, f64::max),
        lad.extrapolation.value
    ))
}

fn decoupling(g: &CrystalGroundState) -> Check {
    let t = ok(decoupling_test(g, &shell(0.3), &shell(0.2), &[2, 8], 24))?;
    let delta = |r: usize| t.rows.iter().find(|x| x.separation == r).unwrap().delta;
    let (d2, d8) = (delta(2).abs(), delta(8).abs());
    ensure!(d8 <= d2, "|Δ(8)| = {d8:.3e} > |Δ(2)| = {d2:.3e}");
    ensure!(d8 <= 0.25 * t.first.abs(), "|Δ(8)| = {d8:.3e} vs |F[ρ1]| = {:.3e}", t.first.abs());
    Ok(format!("|Δ(2)| = {d2:.3e}, |Δ(8)| = {d8:.3e}, |F[ρ1]| = {:.3e}", t.first.abs()))
}

fn dielectric(ext: &DielectricExtraction) -> Check {
    let vac = ok(extract_dielectric(
        &vacuum(1),
        &dipole_probes(1, 0.4, 0.5),
        &DielectricOptions { box_cells: 4.0, m_ladder: vec![0.5, 0.25], ..Default::default() },
    ))?;
    let dv = (vac.tensor.entry(0, 0) - 1.0).abs();
    ensure!(dv < 1e-6, "vacuum ε = {:?}", vac.tensor.matrix());

    let mut s = CrystalSpec::homogeneous(LatticeCell::cubic(2, 4.0).unwrap(), 1, 12.0, vec![4, 4]);
    s.background = 0.0;
    s.nuclei = vec![Nucleus { center: vec![2.0, 2.0], width: 0.3, charge: 1.0 }];
    s.scf.anderson_depth = 5;
    s.scf.kerker = 1.0;
    s.scf.mixing = 0.5;
    s.scf.tolerance = 1e-9;
    let sq = ok(scf_ground_state(&s))?;
    let o = DielectricOptions { box_cells: 2.0, m_ladder: vec![0.5], probe_width: 0.8, ..Default::default() };
    let sq = ok(extract_dielectric(&sq, &dipole_probes(2, o.probe_width, o.probe_dipole), &o))?.tensor;
    let off = sq.entry(0, 1).abs().max((sq.entry(0, 0) - sq.entry(1, 1)).abs());
    ensure!(off <= 1e-3 * sq.trace() / 2.0, "square lattice ε = {:?}", sq.matrix());
    let min_eig = sq.min_eigenvalue().min(ext.tensor.min_eigenvalue()).min(vac.tensor.min_eigenvalue());
    ensure!(min_eig >= 1.0 - 1e-6, "eigenvalue {min_eig}");
    Ok(format!(
        "vacuum |ε−1| = {dv:.1e}; square off-diagonal/anisotropy {off:.1e} (trace {:.4}); chain ε = {:.4}; min eigenvalue {min_eig:.4}",
        sq.trace(),
        ext.tensor.entry(0, 0)
    ))
}

fn macrolimit(g: &CrystalGroundState, ext: &DielectricExtraction) -> Check {
    let grid = Grid::on_cell(g.spec.cell.scaled(BOX), vec![96]).unwrap();
    let psi = Orbital::gaussian(&grid, 1.4, box_center(&grid));
    let r = ok(macrolimit_check(&psi, g, &ext.tensor, &LADDER, BOX, Q))?;
    let gaps: Vec<String> = r.entries.iter().map(|e| format!("{:.2e}", e.gap)).collect();
    ensure!(!r.tainted, "boundary ratio {:.1e}", r.boundary_ratio);
    ensure!(r.decreasing, "gaps {gaps:?}");
    ensure!(r.final_relative_gap < 0.15, "final relative gap {:.3}", r.final_relative_gap);
    Ok(format!("gap(m) = {} ; final relative {:.2e}", gaps.join(", "), r.final_relative_gap))
}

fn cell_problem(g: &CrystalGroundState) -> Check {
    let cg = Grid::on_cell(LatticeCell::cubic(1, A).unwrap(), vec![24]).unwrap();
    let mut r = common::rng(3);
    for _ in 0..20 {
        let v = common::band_limited(&cg, &mut r, true);
        let c = ok(cell_eigenproblem(&v, r.gen_range(0.05..1.0)))?;
        ensure!(c.min_u > 0.0 && c.normalization_defect < 1e-12 && c.poisson_residual <= 1e-8, "invariants fail: {c:?}");
    }
    let cells: Vec<CellEigenResult> =
        [0.25, 0.125, 0.0625].iter().map(|&m| cell_eigenproblem(g.potential(), m)).collect::<polaron_core::Result<_>>().map_err(|e| e.to_string())?;
    ensure!(cells.iter().all(|c| c.min_u > 0.0 && c.normalization_defect < 1e-12), "chain invariants fail");
    let exp: Vec<f64> = cells.iter().map(|c| c.expansion_defect()).collect();
    let lim: Vec<f64> = cells.iter().map(|c| c.limit_defect()).collect();
    let within = |v: &[f64], f: f64| v.windows(2).all(|w| w[1] / w[0] <= f && w[0] / w[1] <= f);
    ensure!(within(&exp, 1.5), "expansion ratios {exp:?}");
    ensure!(within(&lim, 2.0), "limit ratios {lim:?}");
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    Ok(format!("‖u−1−mf‖/m² = {}; |E/m−E^per|/m = {}; E^per = {:.6}", fmt(&exp), fmt(&lim), cells[0].e_per))
}

fn coupled(g: &CrystalGroundState, ext: &DielectricExtraction) -> Check {
    let opts = CoupledOptions { box_cells: BOX, charge: Q, initial_width: Some(1.5), ..Default::default() };
    let mut worst: f64 = 0.0;
    for (i, &m) in LADDER.iter().enumerate() {
        let model = ok(CoupledModel::new(g, 1, m, &opts))?;
        let mut r = common::rng(40 + i as u64);
        let bump = common::band_limited(model.grid(), &mut r, false);
        let base = Orbital::gaussian(model.grid(), 1.5, box_center(model.grid()));
        let v: Vec<Complex64> = base.values().iter().zip(bump.values()).map(|(a, b)| a * (1.0 + 0.2 * b)).collect();
        let psi = ok(ManyBodyWaveFunction::normalized(model.grid().clone(), 1, v, Symmetry::None))?;
        worst = worst.max(ok(model.energy(&psi))?.rescaling_defect);
    }
    ensure!(worst <= 1e-10, "rescaling defect {worst:.2e}");

    let pl = ok(pekar_limit_check(g, 1, &LADDER, &ext.tensor, &opts))?;
    let disc: Vec<String> = pl.entries.iter().map(|e| format!("{:.2e}", e.discrepancy)).collect();
    ensure!(pl.decreasing, "discrepancies {disc:?}");
    ensure!(pl.final_relative < 0.15, "relative discrepancy {:.3}", pl.final_relative);
    let last = pl.entries.last().and_then(|e| e.result.as_ref()).ok_or("no coupled result at m = 1/8")?;
    let fine_ground = ok(scf_ground_state(&chain_spec(72.0)))?;
    let fine = ok(minimize_coupled(&fine_ground, 1, 0.125, &opts))?;
    let (m1, m2) = (last.margin.unwrap(), fine.margin.unwrap());
    ensure!(last.binds == Some(true) && fine.binds == Some(true), "margins {m1:.3e} / {m2:.3e}");
    ensure!(common::rel(m2, m1) < 0.05, "margin not refinement-stable: {m1:.6e} vs {m2:.6e}");
    Ok(format!(
        "rescaling {worst:.1e}; E_1/8 = {:.6} vs threshold {:.6}, margin {m1:.4e} (refined {m2:.4e}); discrepancy {} ; final relative {:.2e}",
        last.energy,
        last.threshold.unwrap(),
        disc.join(", "),
        pl.final_relative
    ))
}

fn bipolaron(n: usize, eps: DielectricTensor) -> std::result::Result<BindingReport, String> {
    let grid = Grid::cubic_box(1, 20.0, n).unwrap();
    let o = NPolaronOptions { convention: ChargeConvention::ParticleCount, ..Default::default() };
    ok(binding_check(&grid, 2, &Coupling::Dielectric(eps), &o))
}

fn binding() -> Check {
    let eps10 = ok(DielectricTensor::scalar(1, 10.0))?;
    let coarse = bipolaron(48, eps10.clone())?;
    let fine = bipolaron(96, eps10)?;
    let vac = bipolaron(48, DielectricTensor::identity(1))?;
    for rep in [&coarse, &fine, &vac] {
        ensure!(rep.weak_holds(), "weak inequality violated: {:?}", rep.splits);
    }
    ensure!(!vac.binds && vac.splits.iter().all(|s| s.verdict != Verdict::Strict), "α = 0 binds");
    ensure!(coarse.binds && fine.binds, "ε = 10: binds {} / {}", coarse.binds, fine.binds);
    Ok(format!("ε = 10 margins {:.4e} (48 pts), {:.4e} (96 pts); α = 0 no strict binding", coarse.splits[0].margin, fine.splits[0].margin))
}

fn brute_force() -> Check {
    let grid = Grid::cubic_box(1, 4.5, 6).unwrap();
    let mut r = common::rng(11);
    let eps = ok(DielectricTensor::scalar(1, 3.0))?;
    let mut worst: f64 = 0.0;
    for (conv, weight) in [(ChargeConvention::Unit, 0.5), (ChargeConvention::ParticleCount, 1.0)] {
        for _ in 0..3 {
            let v = common::random_tensor(&grid, 2, &mut r);
            let psi = ok(ManyBodyWaveFunction::new(grid.clone(), 2, v.clone(), Symmetry::None))?;
            let o = NPolaronOptions { convention: conv, soft_a: Some(0.7), ..Default::default() };
            let e = ok(npolaron_energy(&psi, &Coupling::Dielectric(eps.clone()), &o))?;
            let (t, rep, f) = common::riemann_two_body(&grid, &v, 3.0, 0.7, weight);
            worst = worst.max((e.energy - t - rep - f).abs()).max((e.kinetic - t).abs()).max((e.repulsion - rep).abs()).max((e.interaction - f).abs());
        }
    }
    ensure!(worst < 1e-8, "deviation {worst:.2e}");
    Ok(format!("max deviation {worst:.1e}"))
}

struct Runner {
    failed: Vec<usize>,
}

impl Runner {
    fn run(&mut self, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let t = Instant::now();
        let out = f();
        let el = t.elapsed();
        let (pass, detail) = match out {
            Ok(d) if el <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {budget:?}")),
            Err(e) => (false, e),
        };
        if !pass {
            self.failed.push(id);
        }
        println!("criterion {id:>2} {} {name} [{:.1} s / {:.0} s] {detail}", if pass { "PASS" } else { "FAIL" }, el.as_secs_f64(), budget.as_secs_f64());
    }
}

fn main() {
    // libtest flags (e.g. --nocapture) are accepted and ignored; `--list` prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let min = |m: u64| Duration::from_secs(60 * m);
    let sec = Duration::from_secs;
    let mut r = Runner { failed: vec![] };
    r.run(1, "kernel identity", sec(10), kernel_identity);
    r.run(2, "Gaussian Coulomb self-energy", sec(10), gaussian_self_energy);
    r.run(3, "hydrogenic Pekar energy", min(1), hydrogenic);

    let t = Instant::now();
    let e1 = isotropic_minimum(1.0);
    let t1 = t.elapsed();
    r.run(4, "Pekar scaling law", min(10).saturating_sub(t1), || scaling_law(e1.as_ref().map_err(|e| e.clone())?));
    r.run(5, "virial and Choquard residual", min(10), || virial(e1.as_ref().map_err(|e| e.clone())?));
    r.run(6, "Bloch bands and SCF", min(4), bands);

    let t = Instant::now();
    let chain = scf_ground_state(&chain_spec(50.0));
    let tg = t.elapsed();
    let chain = match chain {
        Ok(g) => g,
        Err(e) => {
            println!("chain ground state failed: {e}");
            std::process::exit(1);
        }
    };
    r.run(7, "defect properties", min(10).saturating_sub(tg), || defect_properties(&chain));
    r.run(8, "decoupling", min(10), || decoupling(&chain));

    let t = Instant::now();
    let opts = DielectricOptions { box_cells: BOX, probe_width: 1.5, ..Default::default() };
    let ext = extract_dielectric(&chain, &dipole_probes(1, opts.probe_width, opts.probe_dipole), &opts);
    let te = t.elapsed();
    r.run(9, "dielectric tensor", min(15).saturating_sub(te), || dielectric(ext.as_ref().map_err(|e: &Error| e.to_string())?));
    r.run(10, "macroscopic limit", min(15), || macrolimit(&chain, ext.as_ref().map_err(|e: &Error| e.to_string())?));
    r.run(11, "cell eigenproblem", min(1), || cell_problem(&chain));
    r.run(12, "coupled model", min(20), || coupled(&chain, ext.as_ref().map_err(|e: &Error| e.to_string())?));
    r.run(13, "binding checker", min(15), binding);
    r.run(14, "brute-force N = 2", sec(10), brute_force);

    if r.failed.is_empty() {
        println!("acceptance: all 14 criteria PASS");
    } else {
        println!("acceptance: FAIL {:?}", r.failed);
        std::process::exit(1);
    }
}
