use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Multidimensional complex FFT over a row-major array.
pub struct FftNd {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<Vec<usize>, Rc<FftNd>>> = RefCell::new(HashMap::new());
}

impl FftNd {
    pub fn new(shape: &[usize]) -> FftNd {
        let mut planner = FftPlanner::new();
        FftNd {
            shape: shape.to_vec(),
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    /// Plan for `shape`, cached per thread.
    pub fn cached(shape: &[usize]) -> Rc<FftNd> {
        PLANS.with(|p| {
            p.borrow_mut()
                .entry(shape.to_vec())
                .or_insert_with(|| Rc::new(FftNd::new(shape)))
                .clone()
        })
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform, sign e^{−ikx}.
    pub fn forward(&self, data: &mut [Complex64]) {
        for ax in 0..self.shape.len() {
            self.axis(data, ax, &self.forward[ax]);
        }
    }

    /// Inverse transform including the 1/N factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_unnormalized(data);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        for ax in 0..self.shape.len() {
            self.axis(data, ax, &self.inverse[ax]);
        }
    }

    fn axis(&self, data: &mut [Complex64], ax: usize, plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let n = self.shape[ax];
        let stride: usize = self.shape[ax + 1..].iter().product();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            return;
        }
        let block = n * stride;
        let mut buf = vec![Complex64::new(0.0, 0.0); block];
        for chunk in data.chunks_mut(block) {
            for j in 0..n {
                let row = &chunk[j * stride..(j + 1) * stride];
                for (s, &v) in row.iter().enumerate() {
                    buf[s * n + j] = v;
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..n {
                let row = &mut chunk[j * stride..(j + 1) * stride];
                for (s, v) in row.iter_mut().enumerate() {
                    *v = buf[s * n + j];
                }
            }
        }
    }
}

pub fn forward(shape: &[usize], data: &mut [Complex64]) {
    FftNd::cached(shape).forward(data)
}

pub fn inverse(shape: &[usize], data: &mut [Complex64]) {
    FftNd::cached(shape).inverse(data)
}

pub fn real_to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}
