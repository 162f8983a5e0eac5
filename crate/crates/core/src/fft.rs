//! Multi-dimensional FFT on a uniform periodic box with `n` points per axis.
//!
//! Storage is row-major: the last axis is contiguous.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct TorusFft {
    dims: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusFft")
            .field("dims", &self.dims)
            .field("n", &self.n)
            .finish()
    }
}

impl TorusFft {
    pub fn new(dims: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let total = self.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.dims {
            let stride = n.pow((self.dims - 1 - axis) as u32);
            let block = stride * n;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (i, c) in line.iter_mut().enumerate() {
                        *c = data[base + i * stride];
                    }
                    plan.process(&mut line);
                    for (i, c) in line.iter().enumerate() {
                        data[base + i * stride] = *c;
                    }
                }
            }
        }
    }

    /// Unnormalised forward transform of real data.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform, normalised by `n^dims`, returning the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    /// Signed wavenumber of index `i` along one axis; the Nyquist index maps to `n/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        self.n % 2 == 0 && i == self.n / 2
    }

    /// Multi-index of flat position `flat`.
    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims];
        let mut rem = flat;
        for axis in (0..self.dims).rev() {
            idx[axis] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    /// Applies a Fourier multiplier `symbol(multi-index)` to real data.
    pub fn apply_multiplier<F>(&self, values: &[f64], mut symbol: F) -> Vec<f64>
    where
        F: FnMut(&[usize]) -> Complex64,
    {
        let mut data = self.forward_real(values);
        for (flat, c) in data.iter_mut().enumerate() {
            let idx = self.index(flat);
            *c *= symbol(&idx);
        }
        self.inverse_real(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_two_dims() {
        let fft = TorusFft::new(2, 8);
        let values: Vec<f64> = (0..64).map(|i| ((i * 7) % 11) as f64 - 3.0).collect();
        let back = fft.inverse_real(fft.forward_real(&values));
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_sine_one_dim() {
        let n = 16;
        let fft = TorusFft::new(1, n);
        let values: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect();
        let d = fft.apply_multiplier(&values, |idx| {
            if fft.is_nyquist(idx[0]) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, 2.0 * PI * fft.wavenumber(idx[0]) as f64)
            }
        });
        for j in 0..n {
            let exact = 2.0 * PI * (2.0 * PI * j as f64 / n as f64).cos();
            assert!((d[j] - exact).abs() < 1e-11);
        }
    }
}
