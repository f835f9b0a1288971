mod common;

use std::sync::Arc;

use polaron_core::fields::{CoulombKernel, Coupling, Grid};
use polaron_core::multipolaron::{
    binding_check, cluster_state, minimize_npolaron, npolaron_energy, ChargeConvention, ManyBodyWaveFunction,
    NPolaronFunctional, NPolaronOptions, Repulsion, Symmetry, TensorBudget, Verdict,
};
use polaron_core::optimize::DescentOptions;
use polaron_core::pekar::{box_center, Orbital, PekarFunctional};
use polaron_core::{DielectricTensor, Error};

fn scalar(d: usize, e: f64) -> Coupling {
    Coupling::Dielectric(DielectricTensor::scalar(d, e).unwrap())
}

fn opts(convention: ChargeConvention, a: f64) -> NPolaronOptions {
    NPolaronOptions { convention, soft_a: Some(a), ..Default::default() }
}

#[test]
fn brute_force_six_points() {
    let grid = Grid::cubic_box(1, 4.5, 6).unwrap();
    let mut r = common::rng(11);
    for (conv, weight) in [(ChargeConvention::Unit, 0.5), (ChargeConvention::ParticleCount, 1.0)] {
        for _ in 0..3 {
            let v = common::random_tensor(&grid, 2, &mut r);
            let psi = ManyBodyWaveFunction::new(grid.clone(), 2, v.clone(), Symmetry::None).unwrap();
            let e = npolaron_energy(&psi, &scalar(1, 3.0), &opts(conv, 0.7)).unwrap();
            let (t, rep, f) = common::riemann_two_body(&grid, &v, 3.0, 0.7, weight);
            assert!((e.kinetic - t).abs() < 1e-8, "{} {}", e.kinetic, t);
            assert!((e.repulsion - rep).abs() < 1e-8);
            assert!((e.interaction - f).abs() < 1e-8);
            assert!((e.energy - t - rep - f).abs() < 1e-8);
        }
    }
}

#[test]
fn single_particle_matches_pekar() {
    for (grid, kernel) in [
        (Grid::cubic_box(1, 16.0, 64).unwrap(), None),
        (Grid::cubic_box(3, 12.0, 16).unwrap(), Some(CoulombKernel::Truncated)),
    ] {
        let c = scalar(grid.dim(), 4.0);
        let o = NPolaronOptions::default();
        let (rep, ker) = o.kernels(&grid);
        if let Some(k) = kernel {
            assert_eq!(ker, k);
            assert_eq!(rep, Repulsion::Coulomb);
        }
        let orb = Orbital::gaussian(&grid, 1.3, box_center(&grid));
        let pf = PekarFunctional::new(&grid, c.clone(), ker).unwrap();
        let p = pf.evaluate(&orb).unwrap();
        let e = npolaron_energy(&ManyBodyWaveFunction::from_orbital(&orb), &c, &o).unwrap();
        assert!((e.energy - p.energy).abs() < 1e-12);
        assert!((e.kinetic - p.kinetic).abs() < 1e-12);
        assert_eq!(e.repulsion, 0.0);
    }
}

#[test]
fn single_particle_minimizer_matches_pekar() {
    let grid = Grid::cubic_box(1, 16.0, 64).unwrap();
    let c = scalar(1, 4.0);
    let o = NPolaronOptions::default();
    let (_, ker) = o.kernels(&grid);
    let orb = Orbital::gaussian(&grid, 1.0, box_center(&grid));
    let (p, _) = PekarFunctional::new(&grid, c.clone(), ker).unwrap().minimize(&orb, &o.descent).unwrap();
    let (n, _) = minimize_npolaron(&ManyBodyWaveFunction::from_orbital(&orb), &c, &o).unwrap();
    assert!(p.converged && n.converged);
    assert!((p.energy - n.energy).abs() < 1e-12, "{} {}", p.energy, n.energy);
}

#[test]
fn permutation_invariance() {
    let grid = Grid::cubic_box(1, 8.0, 12).unwrap();
    let mut r = common::rng(5);
    let v = common::random_tensor(&grid, 3, &mut r);
    let psi = ManyBodyWaveFunction::new(grid.clone(), 3, v, Symmetry::None).unwrap();
    let c = scalar(1, 2.5);
    let o = opts(ChargeConvention::ParticleCount, 0.5);
    let e0 = npolaron_energy(&psi, &c, &o).unwrap().energy;
    for perm in [[0, 2, 1], [1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1]] {
        let q = ManyBodyWaveFunction::new(grid.clone(), 3, psi.permuted(&perm), Symmetry::None).unwrap();
        let e = npolaron_energy(&q, &c, &o).unwrap().energy;
        assert!((e - e0).abs() < 1e-12 * e0.abs().max(1.0));
    }
}

#[test]
fn distant_pair_repels_as_point_charges() {
    let grid = Grid::cubic_box(1, 60.0, 256).unwrap();
    let sigma = 1.0;
    let base = Orbital::gaussian(&grid, sigma, [0.0; 3]);
    // No shell theorem in 1-D: the relative excess is ≈ 2σ²/R².
    let mut last = f64::INFINITY;
    for dist in [12.0, 16.0, 20.0, 24.0] {
        let a = base.translated([-dist / 2.0, 0.0, 0.0]);
        let b = base.translated([dist / 2.0, 0.0, 0.0]);
        let psi = ManyBodyWaveFunction::product(&[&a, &b], Symmetry::None).unwrap();
        let e = npolaron_energy(&psi, &Coupling::Isotropic { alpha: 0.0 }, &NPolaronOptions::default()).unwrap();
        let err = common::rel(e.repulsion, 1.0 / dist);
        assert!(err < 0.02, "{} vs {}", e.repulsion, 1.0 / dist);
        assert!(err < last);
        last = err;
    }
}

#[test]
fn vacuum_has_no_interaction() {
    let grid = Grid::cubic_box(2, 10.0, 8).unwrap();
    let mut r = common::rng(2);
    let psi = ManyBodyWaveFunction::new(grid.clone(), 2, common::random_tensor(&grid, 2, &mut r), Symmetry::None).unwrap();
    let e = npolaron_energy(&psi, &Coupling::Dielectric(DielectricTensor::identity(2)), &NPolaronOptions::default()).unwrap();
    assert_eq!(e.interaction, 0.0);
}

#[test]
fn budget_is_enforced() {
    let grid = Grid::cubic_box(3, 10.0, 8).unwrap();
    let r = NPolaronFunctional::new(&grid, 3, scalar(3, 2.0), &NPolaronOptions::default());
    assert!(matches!(r, Err(Error::Budget { .. })));
    let tight = NPolaronOptions { budget: TensorBudget { max_dims: 6, max_values: 1000 }, ..Default::default() };
    let r = NPolaronFunctional::new(&Grid::cubic_box(1, 10.0, 64).unwrap(), 2, scalar(1, 2.0), &tight);
    assert!(matches!(r, Err(Error::Budget { .. })));
}

#[test]
fn antisymmetry_survives_descent() {
    let grid = Grid::cubic_box(1, 16.0, 32).unwrap();
    let c = scalar(1, 10.0);
    let base = Orbital::gaussian(&grid, 1.0, box_center(&grid));
    let init = cluster_state(&base, 2, 1.5, Symmetry::Antisymmetric).unwrap();
    let o = NPolaronOptions {
        descent: DescentOptions { tolerance: 1e-30, max_iterations: 100, ..Default::default() },
        ..opts(ChargeConvention::ParticleCount, 0.5)
    };
    let (res, psi) = minimize_npolaron(&init, &c, &o).unwrap();
    assert!(res.iterations >= 20);
    assert!(psi.symmetry_defect() < 1e-8);
    let swapped = psi.permuted(&[1, 0]);
    let anti = swapped.iter().zip(psi.values()).map(|(a, b)| (a + b).norm()).fold(0.0, f64::max);
    assert!(anti < 1e-8);
    assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn vacuum_pair_spreads() {
    let grid = Grid::cubic_box(1, 20.0, 48).unwrap();
    let base = Orbital::gaussian(&grid, 0.8, box_center(&grid));
    let init = cluster_state(&base, 2, 0.0, Symmetry::Symmetric).unwrap();
    let o = NPolaronOptions { symmetry: Symmetry::Symmetric, ..Default::default() };
    match minimize_npolaron(&init, &Coupling::Dielectric(DielectricTensor::identity(1)), &o) {
        Err(Error::Spreading { energies, .. }) => {
            assert!(energies.iter().all(|&e| e >= 0.0));
            assert!(energies.windows(2).all(|w| w[1] <= w[0]));
        }
        other => panic!("expected spreading, got {other:?}"),
    }
}

#[test]
fn vacuum_never_binds() {
    let grid = Grid::cubic_box(1, 20.0, 48).unwrap();
    let o = NPolaronOptions { convention: ChargeConvention::ParticleCount, ..Default::default() };
    let rep = binding_check(&grid, 2, &Coupling::Dielectric(DielectricTensor::identity(1)), &o).unwrap();
    assert!(!rep.binds);
    assert!(rep.splits.iter().all(|s| s.verdict != Verdict::Strict));
    assert!(rep.weak_holds());
    assert!(rep.energies.iter().all(|e| e.last_energy >= 0.0));
}

fn bipolaron(n: usize) -> polaron_core::multipolaron::BindingReport {
    let grid = Grid::cubic_box(1, 20.0, n).unwrap();
    let o = NPolaronOptions { convention: ChargeConvention::ParticleCount, ..Default::default() };
    binding_check(&grid, 2, &scalar(1, 10.0), &o).unwrap()
}

#[test]
fn strong_coupling_binds_under_refinement() {
    let coarse = bipolaron(48);
    let fine = bipolaron(96);
    for rep in [&coarse, &fine] {
        assert!(!rep.inconclusive);
        assert!(rep.binds);
        assert!(rep.weak_holds());
        assert!(rep.splits[0].margin > rep.strict_threshold);
        assert_eq!(rep.strict_threshold, 10.0 * DescentOptions::default().tolerance);
    }
    let csv = fine.to_csv();
    assert_eq!(csv.lines().count(), 3);
    let json = serde_json::to_value(&fine).unwrap();
    for key in ["energies", "splits", "weak_tolerance", "strict_threshold", "grid_shape", "repulsion", "kernel"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn single_particle_binding_rejected() {
    let grid: Arc<Grid> = Grid::cubic_box(1, 20.0, 32).unwrap();
    assert!(binding_check(&grid, 1, &scalar(1, 2.0), &NPolaronOptions::default()).is_err());
}
