//! Preconditioned nonlinear conjugate gradient on the unit L² sphere.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) trait SphereObjective {
    /// Energy of an arbitrary (not necessarily normalized) state.
    fn energy(&mut self, x: &[Complex64]) -> f64;
    /// Energy and Hx, where dE = 2 Re⟨Hx, δx⟩.
    fn energy_and_h(&mut self, x: &[Complex64]) -> (f64, Vec<Complex64>);
    fn precondition(&self, r: &mut [Complex64]);
    /// Orthogonal projection onto the admissible subspace (symmetry sectors).
    fn project(&self, _x: &mut [Complex64]) {}
    fn dv(&self) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentOptions {
    /// Stop once ‖Hψ − λψ‖ falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    /// First trial step along the preconditioned direction.
    pub step: f64,
    /// Spreading is declared when the participation ratio drops below this fraction of its initial value.
    pub spreading_factor: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions { tolerance: 1e-6, max_iterations: 10_000, max_backtracks: 40, step: 1.0, spreading_factor: 0.25 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DescentOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub energies: Vec<f64>,
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64], dv: f64) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * dv
}

pub(crate) fn norm(a: &[Complex64], dv: f64) -> f64 {
    (a.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv).sqrt()
}

pub(crate) fn normalize(a: &mut [Complex64], dv: f64) {
    let n = norm(a, dv);
    for v in a.iter_mut() {
        *v /= n;
    }
}

pub(crate) fn participation(a: &[Complex64], dv: f64) -> f64 {
    a.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * dv
}

fn tangent(p: &mut [Complex64], x: &[Complex64], dv: f64) {
    let c = inner(x, p, dv);
    for (pi, xi) in p.iter_mut().zip(x) {
        *pi -= c * xi;
    }
}

/// Residual r = Hx − λx with λ = ⟨x, Hx⟩.
pub(crate) fn residual(x: &[Complex64], hx: &[Complex64], dv: f64) -> (f64, Vec<Complex64>) {
    let lambda = inner(x, hx, dv).re;
    let r: Vec<Complex64> = hx.iter().zip(x).map(|(h, v)| h - lambda * v).collect();
    (lambda, r)
}

pub(crate) fn minimize_on_sphere<O: SphereObjective>(
    obj: &mut O,
    x0: Vec<Complex64>,
    opts: &DescentOptions,
) -> Result<DescentOutcome> {
    let dv = obj.dv();
    let mut x = x0;
    obj.project(&mut x);
    normalize(&mut x, dv);
    let ipr0 = participation(&x, dv);
    let (mut e, mut hx) = obj.energy_and_h(&x);
    let mut energies = vec![e];
    let mut d_prev: Option<Vec<Complex64>> = None;
    let mut r_prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    let mut t = opts.step;
    let mut iterations = 0;
    loop {
        let ratio = participation(&x, dv) / ipr0;
        if ratio < opts.spreading_factor {
            return Err(Error::Spreading { energy: e, ratio, iterations, energies });
        }
        let (_, r) = residual(&x, &hx, dv);
        let res = norm(&r, dv);
        if res <= opts.tolerance || iterations >= opts.max_iterations {
            return Ok(DescentOutcome { x, iterations, energies });
        }
        let mut p = r.clone();
        obj.precondition(&mut p);
        obj.project(&mut p);
        tangent(&mut p, &x, dv);

        let mut dir: Vec<Complex64> = p.iter().map(|v| -v).collect();
        if let (Some(dp), Some((rp, pp))) = (&d_prev, &r_prev) {
            let num = inner(&r, &p, dv).re - inner(&r, pp, dv).re;
            let den = inner(rp, pp, dv).re;
            let beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
            if beta > 0.0 {
                let mut dt = dp.clone();
                tangent(&mut dt, &x, dv);
                for (a, b) in dir.iter_mut().zip(&dt) {
                    *a += beta * b;
                }
            }
        }
        let mut slope = 2.0 * inner(&r, &dir, dv).re;
        if !(slope < 0.0) {
            dir = p.iter().map(|v| -v).collect();
            slope = 2.0 * inner(&r, &dir, dv).re;
        }

        let trial = |obj: &mut O, step: f64| -> (Vec<Complex64>, f64) {
            let mut y: Vec<Complex64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            obj.project(&mut y);
            normalize(&mut y, dv);
            let ey = obj.energy(&y);
            (y, ey)
        };

        let mut accepted = None;
        let mut step = t;
        if -slope * t < 1e-10 * e.abs().max(1.0) {
            // Energy differences are at round-off here; a secant on the directional derivative is not.
            let (y, _) = trial(obj, t);
            let (_, hy) = obj.energy_and_h(&y);
            let (_, ry) = residual(&y, &hy, dv);
            let scale: f64 = x.iter().zip(&dir).map(|(a, b)| (a + t * b).norm_sqr()).sum::<f64>() * dv;
            let g = 2.0 * inner(&ry, &dir, dv).re / scale.sqrt();
            let s = if g > slope { (t * -slope / (g - slope)).clamp(0.1 * t, 10.0 * t) } else { 2.0 * t };
            let (ys, es) = trial(obj, s);
            if es <= e {
                accepted = Some((ys, es, s));
            }
        }
        for _ in 0..if accepted.is_some() { 0 } else { opts.max_backtracks } {
            let (y, ey) = trial(obj, step);
            let curv = ey - e - slope * step;
            if curv > 0.0 {
                let tq = -slope * step * step / (2.0 * curv);
                if tq > 0.1 * step && tq < 4.0 * step && (tq - step).abs() > 1e-3 * step {
                    let (yq, eq) = trial(obj, tq);
                    if eq < ey && eq <= e + 1e-4 * tq * slope {
                        accepted = Some((yq, eq, tq));
                        break;
                    }
                }
            }
            if ey <= e + 1e-4 * step * slope {
                accepted = Some((y, ey, step));
                break;
            }
            step *= 0.5;
        }
        let (y, _, step) = match accepted {
            Some(a) => a,
            None => {
                if res <= 1e3 * opts.tolerance {
                    // Round-off floor: the state is as good as the arithmetic allows.
                    return Ok(DescentOutcome { x, iterations, energies });
                }
                return Err(Error::Divergence(opts.max_backtracks));
            }
        };
        t = (1.5 * step).min(10.0 * opts.step);
        x = y;
        let (e_new, h_new) = obj.energy_and_h(&x);
        e = e_new;
        hx = h_new;
        energies.push(e);
        d_prev = Some(dir);
        r_prev = Some((r, p));
        iterations += 1;
    }
}
