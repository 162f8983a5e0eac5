use num_complex::Complex64;

use super::GradMethod;
use crate::error::{Error, Result};
use crate::fft::TorusFft;

/// Samples of a continuous periodic function on the uniform collocation grid
/// `y_j = period * j / n` of the box `[0, period)^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    period: f64,
    values: Vec<f64>,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_period(dim, n, 1.0, values)
    }

    pub fn with_period(dim: usize, n: usize, period: f64, values: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("grid dimension {dim} not in 1..=3")));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!("grid needs n >= 2, got {n}")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        let expected = n.pow(dim as u32);
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite grid value {bad}")));
        }
        Ok(Self {
            dim,
            n,
            period,
            values,
        })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(dim: usize, n: usize, period: f64, f: F) -> Result<Self> {
        let total = n.pow(dim as u32);
        let mut values = Vec::with_capacity(total);
        let mut y = vec![0.0; dim];
        for flat in 0..total {
            point_into(dim, n, period, flat, &mut y);
            values.push(f(&y));
        }
        Self::with_period(dim, n, period, values)
    }

    pub fn constant(dim: usize, n: usize, c: f64) -> Result<Self> {
        Self::new(dim, n, vec![c; n.pow(dim as u32)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    /// Physical coordinates of grid node `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        point_into(self.dim, self.n, self.period, flat, &mut y);
        y
    }

    /// Grid average; the exact mean of the trigonometric interpolant.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn seminorm(&self, p: u32) -> f64 {
        match p {
            1 => self.values.iter().map(|v| v.abs()).sum::<f64>() / self.len() as f64,
            _ => {
                let s = self.values.iter().map(|v| v.abs().powi(p as i32)).sum::<f64>()
                    / self.len() as f64;
                s.powf(1.0 / p as f64)
            }
        }
    }

    pub fn compatible(&self, other: &PeriodicGrid) -> Result<()> {
        if self.dim != other.dim || self.n != other.n || self.period != other.period {
            return Err(Error::Incompatible(format!(
                "grids (dim {}, n {}, period {}) vs (dim {}, n {}, period {})",
                self.dim, self.n, self.period, other.dim, other.n, other.period
            )));
        }
        Ok(())
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &PeriodicGrid, f: F) -> Result<Self> {
        self.compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn gradient(&self, method: GradMethod) -> Vec<PeriodicGrid> {
        (0..self.dim)
            .map(|axis| {
                let values = match method {
                    GradMethod::Spectral => {
                        let fft = TorusFft::new(self.dim, self.n);
                        let scale = 2.0 * std::f64::consts::PI / self.period;
                        fft.apply_multiplier(&self.values, |idx| {
                            if fft.is_nyquist(idx[axis]) {
                                Complex64::new(0.0, 0.0)
                            } else {
                                Complex64::new(0.0, scale * fft.wavenumber(idx[axis]) as f64)
                            }
                        })
                    }
                    GradMethod::Centered => {
                        let h = self.spacing();
                        let stride = self.n.pow((self.dim - 1 - axis) as u32);
                        (0..self.len())
                            .map(|flat| {
                                let (fwd, bwd) = self.neighbours(flat, axis, stride);
                                (self.values[fwd] - self.values[bwd]) / (2.0 * h)
                            })
                            .collect()
                    }
                };
                Self {
                    values,
                    ..self.clone()
                }
            })
            .collect()
    }

    fn neighbours(&self, flat: usize, axis: usize, stride: usize) -> (usize, usize) {
        let i = (flat / stride) % self.n;
        let base = flat - i * stride;
        let fwd = base + ((i + 1) % self.n) * stride;
        let bwd = base + ((i + self.n - 1) % self.n) * stride;
        let _ = axis;
        (fwd, bwd)
    }

    /// `y -> u(y + a)`. Exact roll for grid-aligned shifts, spectral phase shift otherwise.
    pub fn translate(&self, a: &[f64]) -> Result<Self> {
        if a.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                got: a.len(),
            });
        }
        let h = self.spacing();
        let steps: Vec<f64> = a.iter().map(|ai| ai / h).collect();
        if steps.iter().all(|s| (s - s.round()).abs() < 1e-12) {
            let n = self.n as i64;
            let total = self.len();
            let fft = TorusFft::new(self.dim, self.n);
            let mut values = vec![0.0; total];
            for (flat, v) in values.iter_mut().enumerate() {
                let idx = fft.index(flat);
                let mut src = 0usize;
                for (axis, &i) in idx.iter().enumerate() {
                    let shifted = (i as i64 + steps[axis].round() as i64).rem_euclid(n) as usize;
                    src = src * self.n + shifted;
                }
                *v = self.values[src];
            }
            return Ok(Self {
                values,
                ..self.clone()
            });
        }
        let fft = TorusFft::new(self.dim, self.n);
        let scale = 2.0 * std::f64::consts::PI / self.period;
        let values = fft.apply_multiplier(&self.values, |idx| {
            let mut phase = 0.0;
            let mut nyquist_factor = 1.0;
            for (axis, &i) in idx.iter().enumerate() {
                if fft.is_nyquist(i) {
                    nyquist_factor *= (scale * (self.n / 2) as f64 * a[axis]).cos();
                } else {
                    phase += scale * fft.wavenumber(i) as f64 * a[axis];
                }
            }
            Complex64::from_polar(nyquist_factor, phase)
        });
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Periodic multilinear interpolation at physical point `y`.
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        let n = self.n;
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        for axis in 0..self.dim {
            let s = (y[axis] / self.period).rem_euclid(1.0) * n as f64;
            let i = s.floor();
            base[axis] = (i as usize) % n;
            frac[axis] = s - i;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for axis in 0..self.dim {
                let bit = (corner >> axis) & 1;
                w *= if bit == 1 { frac[axis] } else { 1.0 - frac[axis] };
                flat = flat * n + (base[axis] + bit) % n;
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }
}

pub(crate) fn point_into(dim: usize, n: usize, period: f64, flat: usize, y: &mut [f64]) {
    let mut rem = flat;
    for axis in (0..dim).rev() {
        y[axis] = period * (rem % n) as f64 / n as f64;
        rem /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_shapes() {
        assert!(PeriodicGrid::new(1, 1, vec![1.0]).is_err());
        assert!(PeriodicGrid::new(1, 4, vec![1.0; 3]).is_err());
        assert!(PeriodicGrid::new(1, 4, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn centered_gradient_of_sine() {
        let u = PeriodicGrid::from_fn(1, 256, 1.0, |y| (2.0 * PI * y[0]).sin()).unwrap();
        let g = &u.gradient(GradMethod::Centered)[0];
        let h = u.spacing();
        for j in 0..u.len() {
            let exact = 2.0 * PI * (2.0 * PI * j as f64 * h).cos();
            assert!((g.values()[j] - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn grid_aligned_translation_is_a_roll() {
        let u = PeriodicGrid::from_fn(1, 8, 1.0, |y| y[0]).unwrap();
        let t = u.translate(&[0.25]).unwrap();
        assert_eq!(t.values()[0], u.values()[2]);
        assert_eq!(t.values()[7], u.values()[1]);
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let u = PeriodicGrid::from_fn(2, 4, 2.0, |y| y[0] + 3.0 * y[1]).unwrap();
        for flat in 0..u.len() {
            let y = u.point(flat);
            assert!((u.evaluate(&y) - u.values()[flat]).abs() < 1e-12);
        }
    }
}
