mod common;

use common::*;
use num_complex::Complex64;
use polaron_core::fields::*;
use polaron_core::optimize::DescentOptions;
use polaron_core::pekar::*;
use polaron_core::{DielectricTensor, Error};
use rand::Rng;

fn dilated_energy(f: &PekarFunctional, psi: &Orbital, sigma: f64) -> f64 {
    // ψ_σ(x) = σ^{d/2} ψ(σx) is the same array on a grid shrunk by σ.
    let grid = psi.grid().scaled(1.0 / sigma);
    let g = PekarFunctional::new(&grid, f.coupling().clone(), f.kernel()).unwrap();
    let s = sigma.powf(grid.dim() as f64 / 2.0);
    let v: Vec<Complex64> = psi.values().iter().map(|x| x * s).collect();
    let (t, fp) = g.raw_energy(&v);
    t + fp
}

#[test]
fn hydrogenic_energy_converges_to_closed_form() {
    let eps = DielectricTensor::scalar(3, 2.0).unwrap();
    let beta = 1.0;
    let exact = beta * beta / 2.0 - 0.5 * 5.0 * beta / 16.0;
    let mut errs = vec![];
    for n in [48, 64] {
        let grid = Grid::cubic_box(3, 40.0 / beta, n).unwrap();
        let psi = Orbital::hydrogenic(&grid, beta, [0.0; 3]).unwrap();
        let r = pekar_energy(&psi, &eps).unwrap();
        assert!(rel(r.energy, r.kinetic + r.interaction) < 1e-10);
        // The interaction has no cusp and is already accurate.
        assert!(rel(r.interaction, -0.5 * 5.0 * beta / 16.0) < 1e-3);
        errs.push(rel(r.energy, exact));
    }
    assert!(errs[1] < errs[0] && errs[1] < 0.025, "{errs:?}");
}

#[test]
fn identity_tensor_gives_pure_kinetic() {
    let grid = Grid::cubic_box(3, 16.0, 32).unwrap();
    let psi = Orbital::gaussian(&grid, 1.0, [0.0; 3]);
    let r = pekar_energy(&psi, &DielectricTensor::identity(3)).unwrap();
    assert_eq!(r.interaction, 0.0);
    assert_eq!(r.energy, r.kinetic);
    assert!(rel(r.kinetic, 3.0 / 8.0) < 1e-10);
}

#[test]
fn energy_and_residual_are_translation_invariant() {
    let grid = Grid::cubic_box(3, 20.0, 32).unwrap();
    let psi = Orbital::gaussian(&grid, 1.0, [0.2, 0.0, -0.3]);
    let eps = DielectricTensor::scalar(3, 3.0).unwrap();
    let a = pekar_energy(&psi, &eps).unwrap();
    let b = pekar_energy(&psi.shifted(&[2, -1, 3]), &eps).unwrap();
    assert!((a.energy - b.energy).abs() <= 1e-12 * a.energy.abs());
    assert!((a.residual - b.residual).abs() <= 1e-10 * a.residual);
}

#[test]
fn lambda_is_the_rayleigh_quotient() {
    let grid = Grid::cubic_box(3, 16.0, 16).unwrap();
    let mut r = rng(5);
    let f = ComplexField::from_fn(grid.clone(), |x| {
        let g = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 6.0).exp();
        Complex64::new(g * (1.0 + 0.3 * (x[0]).sin()), 0.2 * g * x[1].cos())
    });
    let _ = r.gen::<f64>();
    let psi = Orbital::normalized(f).unwrap();
    let eps = DielectricTensor::diagonal(&[1.5, 2.0, 2.5]).unwrap();
    let fun = PekarFunctional::dielectric(&grid, &eps).unwrap();
    let h = fun.apply_h(psi.values());
    let q: Complex64 = psi.values().iter().zip(&h).map(|(a, b)| a.conj() * b).sum::<Complex64>() * grid.dv();
    let (lambda, _) = choquard_residual(&psi, &eps).unwrap();
    assert!((lambda - q.re).abs() <= 1e-12 * lambda.abs().max(1.0));
}

#[test]
fn unnormalized_state_rejected() {
    let grid = Grid::cubic_box(3, 8.0, 8).unwrap();
    let f = ComplexField::from_fn(grid, |_| Complex64::new(1.0, 0.0));
    assert!(matches!(Orbital::new(f), Err(Error::NotNormalized(_))));
}

#[test]
fn gradient_matches_central_differences() {
    let grid = Grid::cubic_box(3, 12.0, 16).unwrap();
    let psi = Orbital::gaussian(&grid, 1.2, [0.0; 3]);
    let eps = DielectricTensor::diagonal(&[2.0, 3.0, 4.0]).unwrap();
    let f = PekarFunctional::dielectric(&grid, &eps).unwrap();
    let h = f.apply_h(psi.values());
    let mut r = rng(9);
    for _ in 0..5 {
        let delta: Vec<Complex64> = psi
            .values()
            .iter()
            .map(|v| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)) * v.norm().sqrt())
            .collect();
        let predicted = 2.0 * h.iter().zip(&delta).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * grid.dv();
        let step = 1e-4;
        let e = |s: f64| {
            let v: Vec<Complex64> = psi.values().iter().zip(&delta).map(|(a, b)| a + s * b).collect();
            let (t, fp) = f.raw_energy(&v);
            t + fp
        };
        let fd = (e(step) - e(-step)) / (2.0 * step);
        assert!(rel(predicted, fd) < 1e-4, "{predicted} vs {fd}");
    }
}

#[test]
fn no_interaction_spreads() {
    let grid = Grid::cubic_box(3, 16.0, 16).unwrap();
    let psi = Orbital::gaussian(&grid, 1.0, [0.0; 3]);
    let err = minimize_pekar(&psi, &DielectricTensor::identity(3), &DescentOptions::default()).unwrap_err();
    match err {
        Error::Spreading { energies, ratio, .. } => {
            assert!(ratio < 0.25);
            assert!(energies.iter().all(|&e| e > 0.0));
            assert!(energies.windows(2).all(|w| w[1] <= w[0]));
            // IPR ∝ s⁻³ and E ∝ s⁻², so a 4× IPR drop leaves E at 4^{-2/3} ≈ 0.4 of its start.
            assert!(energies.last().unwrap() < &(0.5 * energies[0]));
        }
        e => panic!("expected spreading, got {e}"),
    }
}

fn isotropic_minimum(alpha: f64, n: usize, box_at_one: f64) -> (PekarResult, Orbital, PekarFunctional) {
    let grid = Grid::cubic_box(3, box_at_one / alpha, n).unwrap();
    let f = PekarFunctional::new(&grid, Coupling::Isotropic { alpha }, CoulombKernel::Truncated).unwrap();
    let init = initial_orbital(&grid, f.coupling());
    let (r, psi) = f.minimize(&init, &DescentOptions::default()).unwrap();
    (r, psi, f)
}

#[test]
fn scaling_law_on_matched_grids() {
    let (e1, _, _) = isotropic_minimum(1.0, 32, 40.0);
    for alpha in [0.5, 2.0] {
        let (ea, _, _) = isotropic_minimum(alpha, 32, 40.0);
        assert!(ea.converged);
        assert!(rel(ea.energy, alpha * alpha * e1.energy) < 1e-3);
    }
}

#[test]
fn minimizer_properties() {
    let (r, psi, f) = isotropic_minimum(1.0, 48, 40.0);
    assert!(r.converged && r.residual <= 1e-6);
    assert!((psi.field().norm() - 1.0).abs() < 1e-12);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(rel(r.energy, -0.054256) < 2e-3, "{}", r.energy);
    // Virial: the dilation derivative 2T + F vanishes.
    assert!(rel(2.0 * r.kinetic, r.interaction.abs()) < 1e-3);
    let h = 1e-3;
    let de = (dilated_energy(&f, &psi, 1.0 + h) - dilated_energy(&f, &psi, 1.0 - h)) / (2.0 * h);
    assert!(de.abs() < 1e-3 * r.kinetic, "{de}");
    let json = serde_json::to_value(&r).unwrap();
    let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["converged", "energy", "interaction", "iterations", "kinetic", "lambda", "residual"]);
}

#[test]
fn random_starts_reach_the_same_minimizer() {
    let grid = Grid::cubic_box(3, 40.0, 32).unwrap();
    let f = PekarFunctional::new(&grid, Coupling::Isotropic { alpha: 1.0 }, CoulombKernel::Truncated).unwrap();
    let mut results = vec![];
    for seed in [1u64, 2] {
        let mut r = rng(seed);
        let c = [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)];
        let w = initial_width(1.0, 3) * r.gen_range(0.7..1.4);
        let base = Orbital::gaussian(&grid, w, c);
        let noisy = ComplexField::new(
            grid.clone(),
            base.values().iter().map(|v| v * Complex64::new(1.0 + 0.2 * r.gen_range(-1.0..1.0), 0.2 * r.gen_range(-1.0..1.0))).collect(),
        )
        .unwrap();
        let init = Orbital::normalized(noisy).unwrap();
        results.push(f.minimize(&init, &DescentOptions::default()).unwrap());
    }
    let (a, pa) = &results[0];
    let (b, pb) = &results[1];
    assert!(rel(a.energy, b.energy) < 1e-5);
    let ca = pa.center();
    let cb = pb.center();
    let aligned = pb.translated([ca[0] - cb[0], ca[1] - cb[1], ca[2] - cb[2]]);
    let da = pa.density();
    let db = aligned.density();
    let diff = da.combine(1.0, &db, -1.0).unwrap();
    assert!(diff.l2_norm() / da.l2_norm() < 1e-3, "{}", diff.l2_norm() / da.l2_norm());
}
