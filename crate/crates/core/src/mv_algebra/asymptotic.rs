use super::PeriodicGrid;
use crate::error::{Error, Result};

/// Localized defect sampled on a truncated box `[lo, hi]^dim` with `n` nodes per
/// axis (endpoints included). Zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Defect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: usize,
    pub values: Vec<f64>,
    /// Declared decay at infinity. Only decaying defects are genuine
    /// asymptotic-periodic perturbations.
    pub decays: bool,
}

impl Defect {
    pub fn from_fn<F: Fn(&[f64]) -> f64>(lo: Vec<f64>, hi: Vec<f64>, n: usize, f: F) -> Result<Self> {
        let dim = lo.len();
        let total = n.pow(dim as u32);
        let mut values = Vec::with_capacity(total);
        let mut y = vec![0.0; dim];
        for flat in 0..total {
            let mut rem = flat;
            for axis in (0..dim).rev() {
                let i = rem % n;
                rem /= n;
                y[axis] = lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (n - 1) as f64;
            }
            values.push(f(&y));
        }
        let d = Self {
            lo,
            hi,
            n,
            values,
            decays: true,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.lo.len();
        if dim == 0 || self.hi.len() != dim {
            return Err(Error::InvalidInput("defect box bounds have inconsistent lengths".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidInput("defect box must have hi > lo".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidInput("defect grid needs n >= 2".into()));
        }
        let expected = self.n.pow(dim as u32);
        if self.values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite defect value".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, y: &[f64]) -> f64 {
        let dim = self.lo.len();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for axis in 0..dim {
            if y[axis] < self.lo[axis] || y[axis] > self.hi[axis] {
                return 0.0;
            }
            let s = (y[axis] - self.lo[axis]) / (self.hi[axis] - self.lo[axis]) * (self.n - 1) as f64;
            let i = (s.floor() as usize).min(self.n - 2);
            base[axis] = i;
            frac[axis] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for axis in 0..dim {
                let bit = (corner >> axis) & 1;
                w *= if bit == 1 { frac[axis] } else { 1.0 - frac[axis] };
                flat = flat * self.n + base[axis] + bit;
            }
            acc += w * self.values[flat];
        }
        acc
    }
}

/// `u = u_per + u_0` with `u_0` a localized defect.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticPeriodic {
    periodic: PeriodicGrid,
    defect: Defect,
}

impl AsymptoticPeriodic {
    pub fn new(periodic: PeriodicGrid, defect: Defect) -> Result<Self> {
        defect.validate()?;
        if defect.lo.len() != periodic.dim() {
            return Err(Error::ShapeMismatch {
                expected: periodic.dim(),
                got: defect.lo.len(),
            });
        }
        if !defect.decays {
            log::warn!("defect part is not flagged as decaying; mean value ignores it regardless");
        }
        Ok(Self { periodic, defect })
    }

    pub fn periodic(&self) -> &PeriodicGrid {
        &self.periodic
    }

    pub fn defect(&self) -> &Defect {
        &self.defect
    }

    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.periodic.evaluate(y) + self.defect.evaluate(y)
    }

    pub fn mean(&self) -> f64 {
        self.periodic.mean()
    }

    pub fn seminorm(&self, p: u32) -> f64 {
        self.periodic.seminorm(p)
    }

    pub fn with_periodic(&self, periodic: PeriodicGrid) -> Self {
        Self {
            periodic,
            defect: self.defect.clone(),
        }
    }

    pub fn map_defect<F: Fn(f64) -> f64>(&self, f: F) -> Defect {
        Defect {
            values: self.defect.values.iter().map(|&v| f(v)).collect(),
            ..self.defect.clone()
        }
    }
}
