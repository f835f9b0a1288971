mod common;

use polaron_core::crystal::{scf_ground_state, CrystalGroundState, CrystalSpec, Nucleus};
use polaron_core::defect::{
    decoupling_test, defect_energy, resample, response_density, tile, ChargeBlob, DefectDensity, DefectOptions,
    DefectProblem, DefectSolver,
};
use polaron_core::fields::{Grid, LatticeCell, ScalarField};
use rand::Rng;

const A: f64 = 3.0;

fn ground() -> CrystalGroundState {
    let mut s = CrystalSpec::homogeneous(LatticeCell::cubic(1, A).unwrap(), 1, 50.0, vec![8]);
    s.background = 0.0;
    s.nuclei = vec![Nucleus { center: vec![0.5 * A], width: 0.2, charge: 1.0 }];
    s.scf.anderson_depth = 5;
    s.scf.kerker = 1.0;
    s.scf.mixing = 0.5;
    s.scf.tolerance = 1e-9;
    scf_ground_state(&s).unwrap()
}

/// Neutral pair of Gaussians with different widths: no charge, no dipole.
fn shell(q: f64, offset: f64) -> DefectDensity {
    DefectDensity::Blobs(vec![
        ChargeBlob { charge: q, dipole: vec![], width: 0.8, offset: vec![offset] },
        ChargeBlob { charge: -q, dipole: vec![], width: 1.4, offset: vec![offset] },
    ])
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

#[test]
fn zero_defect_is_exactly_zero() {
    let g = ground();
    let p = DefectProblem { ground: &g, density: shell(0.0, 0.0), ladder: vec![4, 8], options: DefectOptions::default() };
    let r = defect_energy(&p).unwrap();
    assert!(r.ladder.iter().all(|e| e.energy == 0.0 && e.response_norm == 0.0));
    assert!(response_density(&p).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn response_is_nonpositive_and_concave() {
    let g = ground();
    let solver = DefectSolver::new(&g, 8).unwrap();
    let grid = solver.grid().clone();
    let mut r = common::rng(17);
    let tol = 1e-8;
    let dens: Vec<ScalarField> = (0..10).map(|_| random_neutral(&mut r).sample(&grid).unwrap()).collect();
    let f: Vec<f64> = dens.iter().map(|n| solver.solve(n).unwrap().energy).collect();
    assert!(f.iter().all(|&v| v <= tol), "{f:?}");
    for i in 0..5 {
        let (a, b) = (&dens[2 * i], &dens[2 * i + 1]);
        let mid = solver.solve(&a.combine(0.5, b, 0.5).unwrap()).unwrap().energy;
        assert!(mid >= 0.5 * (f[2 * i] + f[2 * i + 1]) - tol, "pair {i}");
    }
}

#[test]
fn small_amplitudes_are_quadratic_and_linear() {
    let g = ground();
    let solver = DefectSolver::new(&g, 8).unwrap();
    let nu = shell(0.5, 0.0).sample(solver.grid()).unwrap();
    let sols: Vec<_> = [0.05, 0.1, 0.2].iter().map(|&t| (t, solver.solve(&nu.scaled(t)).unwrap())).collect();
    let ratios: Vec<f64> = sols.iter().map(|(t, s)| s.energy / (t * t)).collect();
    for r in &ratios {
        assert!(common::rel(*r, ratios[1]) < 0.05, "{ratios:?}");
    }
    let q1 = &sols[1].1.response;
    let q2 = sols[2].1.response.scaled(0.5);
    let diff = q1.combine(1.0, &q2, -1.0).unwrap().l2_norm();
    assert!(diff <= 0.05 * q1.l2_norm());
    // The electronic charge −ρ_Q of the response opposes the defect.
    let d = solver.coulomb(nu.values(), sols[2].1.response.values());
    assert!(d >= 0.0);
    assert!(sols[2].1.response.integral().abs() < 1e-8);
}

#[test]
fn lattice_translation_invariance() {
    let g = ground();
    let solver = DefectSolver::new(&g, 8).unwrap();
    let base = shell(0.3, 0.0);
    let f0 = solver.solve(&base.sample(solver.grid()).unwrap()).unwrap().energy;
    for shift in [A, -2.0 * A] {
        let f = solver.solve(&base.translated(&[shift]).sample(solver.grid()).unwrap()).unwrap().energy;
        assert!((f - f0).abs() < 1e-8, "{f} {f0}");
    }
}

#[test]
fn ladder_converges() {
    let g = ground();
    let p = DefectProblem { ground: &g, density: shell(0.3, 0.0), ladder: vec![8, 16, 32], options: DefectOptions::default() };
    let r = defect_energy(&p).unwrap();
    assert!(r.converged, "{:?}", r.ladder);
    assert!(r.within_spread);
    assert!(r.ladder.iter().all(|e| e.energy < 0.0));
    assert_eq!(r.responses.len(), 3);
    assert_eq!(r.to_csv().lines().count(), 4);
}

#[test]
fn dipole_ladder_is_extrapolated() {
    let g = ground();
    let nu = DefectDensity::Blobs(vec![ChargeBlob { charge: 0.0, dipole: vec![0.2], width: 1.0, offset: vec![] }]);
    let p = DefectProblem { ground: &g, density: nu, ladder: vec![8, 16, 32], options: DefectOptions::default() };
    let r = defect_energy(&p).unwrap();
    let e: Vec<f64> = r.ladder.iter().map(|x| x.energy).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    assert!(r.within_spread);
    assert!(r.extrapolation.value <= e[2]);
}

#[test]
fn undecayed_density_rejected() {
    let g = ground();
    let nu = DefectDensity::Blobs(vec![ChargeBlob { charge: 0.0, dipole: vec![0.2], width: 5.0, offset: vec![] }]);
    let p = DefectProblem { ground: &g, density: nu, ladder: vec![4], options: DefectOptions::default() };
    assert!(defect_energy(&p).is_err());
}

#[test]
fn decoupling_at_large_separation() {
    let g = ground();
    let rho1 = shell(0.3, 0.0);
    let rho2 = shell(0.2, 0.0);
    let t = decoupling_test(&g, &rho1, &rho2, &[0, 2, 8], 24).unwrap();
    let delta = |r: usize| t.rows.iter().find(|x| x.separation == r).unwrap().delta;
    assert!(delta(8).abs() <= delta(2).abs());
    assert!(delta(8).abs() <= 0.25 * t.first.abs());
    assert!(delta(0).abs() > 1e-6);
    let z = decoupling_test(&g, &rho1, &shell(0.0, 0.0), &[2, 8], 24).unwrap();
    assert!(z.rows.iter().all(|r| r.delta == 0.0));
    assert!(decoupling_test(&g, &rho1, &rho2, &[8], 12).is_err());
    assert_eq!(t.to_csv().lines().count(), 4);
}

#[test]
fn tiling_and_resampling() {
    let g = ground();
    let grid = g.spec.supercell(3).grid().unwrap();
    let tiled = tile(g.density(), &grid).unwrap();
    assert!((tiled.integral() - 3.0).abs() < 1e-8);
    let fine = Grid::on_cell(grid.cell().clone(), vec![grid.shape()[0] * 2]).unwrap();
    let up = resample(&tiled, &fine).unwrap();
    let back = resample(&up, &grid).unwrap();
    assert!(back.combine(1.0, &tiled, -1.0).unwrap().max_abs() < 1e-6 * tiled.max_abs());
    assert!((up.integral() - 3.0).abs() < 1e-8);
    let _ = LatticeCell::cubic(1, A);
}
