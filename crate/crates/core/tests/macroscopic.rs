mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use polaron_core::crystal::{scf_ground_state, CrystalGroundState, CrystalSpec, Nucleus};
use polaron_core::fields::{Coupling, Grid, LatticeCell, ScalarField};
use polaron_core::macroscopic::*;
use polaron_core::multipolaron::{ManyBodyWaveFunction, NPolaronFunctional, NPolaronOptions, Symmetry};
use polaron_core::optimize::DescentOptions;
use polaron_core::pekar::{box_center, Orbital};
use polaron_core::{DielectricTensor, Error};
use proptest::prelude::*;

const A: f64 = 3.0;
const BOX: f64 = 6.0;
// A charged ν in a 1-D torus shifts the potential by ~ q·L; a small charge keeps the supercells insulating.
const Q: f64 = 1.0 / 16.0;

fn chain_spec() -> CrystalSpec {
    let mut s = CrystalSpec::homogeneous(LatticeCell::cubic(1, A).unwrap(), 1, 50.0, vec![8]);
    s.background = 0.0;
    s.nuclei = vec![Nucleus { center: vec![0.5 * A], width: 0.2, charge: 1.0 }];
    s.scf.anderson_depth = 5;
    s.scf.kerker = 1.0;
    s.scf.mixing = 0.5;
    s.scf.tolerance = 1e-9;
    s
}

fn chain() -> &'static CrystalGroundState {
    static G: OnceLock<CrystalGroundState> = OnceLock::new();
    G.get_or_init(|| scf_ground_state(&chain_spec()).unwrap())
}

fn chain_options() -> DielectricOptions {
    DielectricOptions { box_cells: BOX, probe_width: 1.5, ..Default::default() }
}

fn chain_extraction() -> &'static DielectricExtraction {
    static E: OnceLock<DielectricExtraction> = OnceLock::new();
    E.get_or_init(|| {
        let opts = chain_options();
        extract_dielectric(chain(), &dipole_probes(1, opts.probe_width, opts.probe_dipole), &opts).unwrap()
    })
}

fn vacuum(d: usize) -> CrystalGroundState {
    scf_ground_state(&CrystalSpec::vacuum(LatticeCell::cubic(d, A).unwrap(), 20.0, vec![1; d])).unwrap()
}

fn coupled_options() -> CoupledOptions {
    CoupledOptions { box_cells: BOX, charge: Q, initial_width: Some(1.5), ..Default::default() }
}

fn macro_grid(n: usize) -> std::sync::Arc<Grid> {
    Grid::on_cell(chain_spec().cell.scaled(BOX), vec![n]).unwrap()
}

fn cell_grid(n: usize) -> std::sync::Arc<Grid> {
    Grid::on_cell(LatticeCell::cubic(1, A).unwrap(), vec![n]).unwrap()
}

#[test]
fn flat_potential_gives_constant_cell_state() {
    let v = ScalarField::zeros(cell_grid(16));
    let c = cell_eigenproblem(&v, 0.25).unwrap();
    assert!(c.energy.abs() < 1e-12 && c.e_per.abs() < 1e-12);
    assert!(c.u().values().iter().all(|u| (u - 1.0).abs() < 1e-12));
    assert!(c.f().values().iter().all(|f| f.abs() < 1e-12));
}

#[test]
fn cosine_potential_has_closed_form_corrector() {
    let g = cell_grid(32);
    let k = 2.0 * PI / A;
    let v = ScalarField::from_fn(g.clone(), |x| 0.3 * (k * x[0]).cos());
    let c = cell_eigenproblem(&v, 0.1).unwrap();
    let f_exact = |x: f64| -0.6 * (k * x).cos() / (k * k);
    let err = g.points().iter().zip(c.f().values()).map(|(x, f)| (f - f_exact(x[0])).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
    let e_per = -0.6 * 0.3 / (k * k) * A / 2.0;
    assert!((c.e_per - e_per).abs() < 1e-12, "{} {e_per}", c.e_per);
}

#[test]
fn nonzero_mean_potential_is_rejected() {
    let v = ScalarField::from_fn(cell_grid(16), |x| 0.1 + (2.0 * PI * x[0] / A).sin());
    assert!(cell_eigenproblem(&v, 0.25).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn cell_state_is_positive_and_normalized(seed in 0u64..1000, m in 0.05f64..1.0) {
        let mut r = common::rng(seed);
        let v = common::band_limited(&cell_grid(24), &mut r, true);
        let c = cell_eigenproblem(&v, m).unwrap();
        prop_assert!(c.min_u > 0.0);
        prop_assert!(c.normalization_defect < 1e-12);
        prop_assert!(c.poisson_residual <= 1e-8);
        prop_assert!(c.f_mean.abs() < 1e-12);
        let mean_u2 = c.u().values().iter().map(|u| u * u).sum::<f64>() / 24.0;
        prop_assert!((mean_u2 - 1.0).abs() < 1e-12);
        // Rayleigh bound by the constant trial state.
        prop_assert!(c.eigenvalue <= 1e-12);
    }
}

#[test]
fn cell_energy_approaches_corrector_energy_linearly() {
    let g = chain();
    let cells: Vec<CellEigenResult> = [0.25, 0.125, 0.0625].iter().map(|&m| cell_eigenproblem(g.potential(), m).unwrap()).collect();
    let lim: Vec<f64> = cells.iter().map(|c| c.limit_defect()).collect();
    let exp: Vec<f64> = cells.iter().map(|c| c.expansion_defect()).collect();
    for w in lim.windows(2).chain(exp.windows(2)) {
        assert!(w[1] / w[0] < 2.0 && w[0] / w[1] < 2.0, "{lim:?} {exp:?}");
    }
    assert!(cells.iter().all(|c| c.e_per < 0.0 && (c.e_per - cells[0].e_per).abs() < 1e-12));
}

#[test]
fn vacuum_does_not_polarize() {
    let g = vacuum(1);
    let opts = DielectricOptions { box_cells: 4.0, m_ladder: vec![0.5, 0.25], ..Default::default() };
    let ex = extract_dielectric(&g, &dipole_probes(1, 0.4, 0.5), &opts).unwrap();
    assert!((ex.tensor.entry(0, 0) - 1.0).abs() < 1e-6, "{:?}", ex.tensor.matrix());
    assert!(ex.ladder.iter().all(|f| f.residual < 1e-10 && f.dispersion.abs() < 1e-8));
}

#[test]
fn chain_dielectric_constant_is_stable_along_ladder() {
    let ex = chain_extraction();
    let res: Vec<f64> = ex.ladder.iter().map(|f| f.residual).collect();
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
    assert!(ex.tensor.min_eigenvalue() >= 1.0 - 1e-6);
    let eps: Vec<f64> = ex.ladder.iter().map(|f| f.matrix[0][0]).collect();
    assert!((eps[2] - eps[1]).abs() < (eps[1] - eps[0]).abs(), "{eps:?}");
    assert!(eps.iter().all(|e| (e - eps[2]).abs() < 0.02 * eps[2]), "{eps:?}");
    assert_eq!(ex.tensor.diagnostics().unwrap().residuals, res);
    assert!(ex.to_csv().lines().count() == ex.ladder.len() + 1);
}

#[test]
fn excessive_misfit_is_reported() {
    let opts = DielectricOptions { m_ladder: vec![0.5], max_residual: 1e-8, ..chain_options() };
    let r = extract_dielectric(chain(), &dipole_probes(1, 1.5, 0.5), &opts);
    assert!(matches!(r, Err(Error::FitResidual { .. })), "{r:?}");
}

#[test]
fn square_lattice_fit_is_scalar() {
    let mut s = CrystalSpec::homogeneous(LatticeCell::cubic(2, 4.0).unwrap(), 1, 12.0, vec![4, 4]);
    s.background = 0.0;
    s.nuclei = vec![Nucleus { center: vec![2.0, 2.0], width: 0.3, charge: 1.0 }];
    s.scf.anderson_depth = 5;
    s.scf.kerker = 1.0;
    s.scf.mixing = 0.5;
    s.scf.tolerance = 1e-9;
    let g = scf_ground_state(&s).unwrap();
    let opts = DielectricOptions { box_cells: 2.0, m_ladder: vec![0.5], probe_width: 0.8, ..Default::default() };
    let ex = extract_dielectric(&g, &dipole_probes(2, opts.probe_width, opts.probe_dipole), &opts).unwrap();
    let t = &ex.tensor;
    assert!(t.entry(0, 1).abs() <= 1e-3 * t.trace() / 2.0, "{:?}", t.matrix());
    assert!((t.entry(0, 0) - t.entry(1, 1)).abs() <= 1e-3 * t.trace() / 2.0);
    assert!(t.min_eigenvalue() >= 1.0 - 1e-6);
}

fn random_state(grid: &std::sync::Arc<Grid>, seed: u64) -> ManyBodyWaveFunction {
    let mut r = common::rng(seed);
    let base = Orbital::gaussian(grid, 1.5, box_center(grid));
    let bump = common::band_limited(grid, &mut r, false);
    let vals: Vec<Complex64> = base.values().iter().zip(bump.values()).map(|(a, b)| a * (1.0 + 0.2 * b)).collect();
    ManyBodyWaveFunction::normalized(grid.clone(), 1, vals, Symmetry::None).unwrap()
}

#[test]
fn macro_and_micro_forms_agree() {
    let opts = coupled_options();
    for (m, seed) in [(0.5, 1), (0.25, 2)] {
        let model = CoupledModel::new(chain(), 1, m, &opts).unwrap();
        let psi = random_state(model.grid(), seed);
        let e = model.energy(&psi).unwrap();
        assert!(e.rescaling_defect <= 1e-10, "{e:?}");
        assert!(common::rel(e.micro_energy, e.energy) <= 1e-10);
        assert!(e.crystal < 0.0 && e.kinetic > 0.0);
    }
}

#[test]
fn two_particle_forms_agree() {
    let opts = coupled_options();
    let model = CoupledModel::new(chain(), 2, 0.5, &opts).unwrap();
    let psi = model.initial_state(&opts).unwrap();
    let e = model.energy(&psi).unwrap();
    assert!(e.rescaling_defect <= 1e-10 && e.repulsion > 0.0, "{e:?}");
}

#[test]
fn vacuum_coupled_energy_is_free_energy() {
    let g = vacuum(1);
    let opts = CoupledOptions { box_cells: 4.0, ..Default::default() };
    let model = CoupledModel::new(&g, 2, 0.5, &opts).unwrap();
    let psi = model.initial_state(&opts).unwrap();
    let e = model.energy(&psi).unwrap();
    assert_eq!(e.crystal, 0.0);
    assert!(e.periodic.abs() < 1e-14);
    let free = NPolaronFunctional::new(model.grid(), 2, Coupling::Isotropic { alpha: 0.0 }, &NPolaronOptions::default())
        .unwrap()
        .evaluate(&psi)
        .unwrap();
    assert!((e.energy - free.energy).abs() < 1e-12 * free.energy.abs().max(1.0), "{} {}", e.energy, free.energy);
}

#[test]
fn gradient_matches_finite_differences() {
    let opts = coupled_options();
    let mut model = CoupledModel::new(chain(), 1, 0.5, &opts).unwrap();
    let psi = random_state(model.grid(), 5);
    let dv = model.grid().dv();
    let mut r = common::rng(9);
    let raw = common::band_limited(model.grid(), &mut r, false);
    let mut dir: Vec<Complex64> = psi.values().iter().zip(raw.values()).map(|(p, b)| p * b).collect();
    let overlap: f64 = dir.iter().zip(psi.values()).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * dv;
    for (a, b) in dir.iter_mut().zip(psi.values()) {
        *a -= b * overlap;
    }
    let h = model.gradient(&psi).unwrap();
    let slope = 2.0 * dir.iter().zip(&h).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * dv;
    let at = |t: f64| {
        let v: Vec<Complex64> = psi.values().iter().zip(&dir).map(|(p, d)| p + d * t).collect();
        model.energy(&ManyBodyWaveFunction::normalized(model.grid().clone(), 1, v, Symmetry::None).unwrap()).unwrap().energy
    };
    let t = 1e-4;
    let fd = (at(t) - at(-t)) / (2.0 * t);
    assert!((fd - slope).abs() < 1e-5 * slope.abs().max(1.0), "{fd} {slope}");
}

#[test]
fn vacuum_coupled_minimization_spreads() {
    let g = vacuum(1);
    let opts = CoupledOptions { box_cells: 8.0, initial_width: Some(1.0), ..Default::default() };
    let r = minimize_coupled(&g, 1, 0.5, &opts);
    assert!(matches!(r, Err(Error::Spreading { .. })), "{r:?}");
}

#[test]
fn chain_binds_a_single_polaron() {
    let opts = coupled_options();
    let r = minimize_coupled(chain(), 1, 0.25, &opts).unwrap();
    assert!(r.converged && r.residual <= opts.tolerance);
    assert!(r.reconstruction_defect <= 1e-10);
    assert!(r.parts.rescaling_defect <= 1e-10);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0] + r.resolution), "{:?}", r.history);
    let threshold = r.threshold.unwrap();
    assert!((threshold - r.cell.eigenvalue / 0.25).abs() < 1e-14);
    assert!(r.binds.unwrap() && r.margin.unwrap() > 10.0 * chain_spec().scf.tolerance);
    // Ψ = Π u(x_j/m) Ψ^pol pointwise.
    let psi = r.psi.as_ref().unwrap();
    let u = tile_cell_state(&r);
    for ((p, q), u) in psi.values().iter().zip(&r.polaron).zip(&u) {
        assert!((q * u - p).norm() <= 1e-10 * p.norm().max(1e-300) + 1e-300);
    }
}

fn tile_cell_state(r: &CoupledResult) -> Vec<f64> {
    let u = r.cell.u().values();
    let n = u.len();
    (0..n * r.supercell).map(|i| u[i % n]).collect()
}

#[test]
fn trivial_crystal_has_no_macroscopic_gap() {
    let g = vacuum(1);
    let grid = Grid::on_cell(LatticeCell::cubic(1, A).unwrap().scaled(4.0), vec![48]).unwrap();
    let psi = Orbital::gaussian(&grid, 1.0, box_center(&grid));
    let r = macrolimit_check(&psi, &g, &DielectricTensor::identity(1), &[0.5, 0.25], 4.0, 1.0).unwrap();
    assert!(r.pekar.abs() < 1e-14);
    assert!(r.entries.iter().all(|e| e.crystal == 0.0 && e.gap < 1e-14));
}

#[test]
fn crystal_energy_approaches_macroscopic_pekar_term() {
    let ex = chain_extraction();
    let grid = macro_grid(96);
    let psi = Orbital::gaussian(&grid, 1.4, box_center(&grid));
    let r = macrolimit_check(&psi, chain(), &ex.tensor, &[0.5, 0.25, 0.125], BOX, Q).unwrap();
    assert!(!r.tainted);
    assert!(r.decreasing, "{}", r.to_csv());
    assert!(r.final_relative_gap < 0.15);
    assert!(r.entries[1].relative_gap < 0.3);
    assert!(r.entries.iter().all(|e| e.crystal < 0.0 && e.defect_gap.unwrap() > 0.0));
}

#[test]
fn incommensurate_box_is_rejected() {
    assert!(supercell_count(6.0, 0.35).is_err());
    assert!(supercell_count(6.0, 1.5).is_err());
    assert_eq!(supercell_count(6.0, 0.125).unwrap(), 48);
    assert!(validate_ladder(&[0.25, 0.5]).is_err());
}

#[test]
fn pekar_limit_degenerates_in_vacuum() {
    let g = vacuum(1);
    let opts = CoupledOptions { box_cells: 8.0, initial_width: Some(1.0), ..Default::default() };
    let r = pekar_limit_check(&g, 1, &[0.5, 0.25], &DielectricTensor::identity(1), &opts).unwrap();
    assert!(r.degenerate && r.pekar == 0.0 && r.e_per == 0.0);
    assert!(r.entries.iter().all(|e| e.spreading && e.coupled.abs() < 1e-12 && e.discrepancy < 1e-12));
}

#[test]
fn coupled_energy_approaches_pekar_limit() {
    let ex = chain_extraction();
    let opts = CoupledOptions {
        npolaron: NPolaronOptions { descent: DescentOptions::default(), ..Default::default() },
        ..coupled_options()
    };
    let r = pekar_limit_check(chain(), 1, &[0.5, 0.25], &ex.tensor, &opts).unwrap();
    assert!(!r.degenerate && r.pekar < 0.0);
    assert!(r.decreasing, "{}", r.to_csv());
    assert!(r.final_relative < 0.15);
    let reference = r.e_per / r.cell_volume + r.pekar;
    assert!(r.entries.iter().all(|e| (e.reference - reference).abs() < 1e-14 && !e.spreading));
}
