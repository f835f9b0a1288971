#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use polaron_core::fields::{fft, Grid, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normalized isotropic Gaussian of width σ centered at c.
pub fn gaussian(grid: &Arc<Grid>, sigma: f64, c: [f64; 3]) -> ScalarField {
    let d = grid.dim() as i32;
    let norm = (2.0 * PI * sigma * sigma).powf(-(d as f64) / 2.0);
    ScalarField::from_fn(grid.clone(), |x| {
        let r2: f64 = (0..3).map(|i| (x[i] - c[i]).powi(2)).sum();
        norm * (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Real random field whose Fourier support is |m_i| ≤ n_i/4, optionally with zero mean.
pub fn band_limited(grid: &Arc<Grid>, r: &mut ChaCha8Rng, zero_mean: bool) -> ScalarField {
    let n = grid.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for (i, ci) in c.iter_mut().enumerate() {
        let idx = grid.multi_index(i);
        let inside = (0..grid.dim()).all(|a| Grid::frequency(idx[a], grid.shape()[a]).unsigned_abs() as usize <= grid.shape()[a] / 4);
        if inside {
            *ci = Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        }
    }
    if zero_mean {
        c[0] = Complex64::new(0.0, 0.0);
    }
    fft::inverse(grid.shape(), &mut c);
    ScalarField::new(grid.clone(), c.iter().map(|v| v.re).collect()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Random normalized two-body amplitude on the N-fold tensor grid.
pub fn random_tensor(grid: &Arc<Grid>, n: usize, r: &mut ChaCha8Rng) -> Vec<Complex64> {
    let total = grid.len().pow(n as u32);
    let mut v: Vec<Complex64> =
        (0..total).map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect();
    let s: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dv().powi(n as i32);
    for z in &mut v {
        *z /= s.sqrt();
    }
    v
}

/// (T, R, F) of a two-body state on a 1-D periodic grid by explicit sums: naive DFT for the
/// kinetic term, double sums over minimum-image soft-Coulomb distances for the rest.
pub fn riemann_two_body(grid: &Grid, psi: &[Complex64], eps: f64, a: f64, weight: f64) -> (f64, f64, f64) {
    let m = grid.len();
    let h = grid.spacing()[0];
    let l = grid.lengths()[0];
    let dist = |i: usize, j: usize| {
        let k = (i as i64 - j as i64).rem_euclid(m as i64) as usize;
        k.min(m - k) as f64 * h
    };
    let w = |i: usize, j: usize| 1.0 / (dist(i, j).powi(2) + a * a).sqrt();
    let freq = |j: usize| {
        let f = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
        2.0 * PI * f / l
    };
    let mut t = 0.0;
    for k1 in 0..m {
        for k2 in 0..m {
            let mut c = Complex64::new(0.0, 0.0);
            for x1 in 0..m {
                for x2 in 0..m {
                    let ph = -2.0 * PI * ((k1 * x1 + k2 * x2) as f64) / m as f64;
                    c += psi[x1 * m + x2] * Complex64::from_polar(1.0, ph);
                }
            }
            t += 0.5 * (freq(k1).powi(2) + freq(k2).powi(2)) * c.norm_sqr();
        }
    }
    t *= h * h / (m * m) as f64;
    let mut rep = 0.0;
    let mut rho = vec![0.0; m];
    for x1 in 0..m {
        for x2 in 0..m {
            let p = psi[x1 * m + x2].norm_sqr();
            rep += p * w(x1, x2) * h * h;
            rho[x1] += weight * p * h;
            rho[x2] += weight * p * h;
        }
    }
    let mut d = 0.0;
    for x in 0..m {
        for y in 0..m {
            d += rho[x] * rho[y] * w(x, y) * h * h;
        }
    }
    (t, rep, 0.5 * (1.0 / eps - 1.0) * d)
}
