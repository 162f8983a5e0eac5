use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use super::PeriodicGrid;
use crate::error::{Error, Result};
use crate::fft::TorusFft;

/// Default cap on the number of retained modes after a product.
pub const DEFAULT_MAX_TERMS: usize = 4096;

/// A trigonometric polynomial `u(y) = sum_m c_m exp(i lambda_m . y)` whose
/// frequencies lie in the module generated by `basis`:
/// `lambda_m = sum_i m_i * basis[i]`, `m` integer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAp {
    basis: Vec<Vec<f64>>,
    terms: BTreeMap<Vec<i64>, Complex64>,
}

/// Modes dropped by a capped product.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub dropped: usize,
    /// `sqrt(sum |c|^2)` over dropped modes.
    pub residual: f64,
}

impl SpectralAp {
    pub fn new(basis: Vec<Vec<f64>>, terms: Vec<(Vec<i64>, Complex64)>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidInput("spectral basis is empty".into()));
        }
        let d = basis[0].len();
        if d == 0 || basis.iter().any(|b| b.len() != d) {
            return Err(Error::InvalidInput(
                "spectral basis vectors must share a nonzero dimension".into(),
            ));
        }
        let r = basis.len();
        let mut map = BTreeMap::new();
        for (mode, c) in terms {
            if mode.len() != r {
                return Err(Error::ShapeMismatch {
                    expected: r,
                    got: mode.len(),
                });
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::InvalidInput("non-finite spectral coefficient".into()));
            }
            *map.entry(mode).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        map.entry(vec![0; r]).or_insert(Complex64::new(0.0, 0.0));
        for (mode, c) in &map {
            let neg: Vec<i64> = mode.iter().map(|m| -m).collect();
            match map.get(&neg) {
                Some(cn) if *cn == c.conj() => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "conjugate symmetry fails at mode {mode:?}"
                    )))
                }
            }
        }
        Ok(Self { basis, terms: map })
    }

    /// Builds `c0 + sum_k (a_k cos(lambda_k.y) + b_k sin(lambda_k.y))` with exactly
    /// conjugate-symmetric coefficients.
    pub fn from_real_terms(
        basis: Vec<Vec<f64>>,
        constant: f64,
        waves: &[(Vec<i64>, f64, f64)],
    ) -> Result<Self> {
        let r = basis.len();
        let mut terms = vec![(vec![0; r], Complex64::new(constant, 0.0))];
        for (mode, a, b) in waves {
            if mode.iter().all(|&m| m == 0) {
                terms.push((mode.clone(), Complex64::new(*a, 0.0)));
                continue;
            }
            let neg: Vec<i64> = mode.iter().map(|m| -m).collect();
            terms.push((mode.clone(), Complex64::new(0.5 * a, -0.5 * b)));
            terms.push((neg, Complex64::new(0.5 * a, 0.5 * b)));
        }
        Self::new(basis, terms)
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Physical dimension of `y`.
    pub fn dim(&self) -> usize {
        self.basis[0].len()
    }

    /// Rank of the frequency module (hull torus dimension).
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, mode: &[i64]) -> Complex64 {
        self.terms
            .get(mode)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn frequency(&self, mode: &[i64]) -> Vec<f64> {
        let mut lam = vec![0.0; self.dim()];
        for (m, b) in mode.iter().zip(&self.basis) {
            for (l, bi) in lam.iter_mut().zip(b) {
                *l += *m as f64 * bi;
            }
        }
        lam
    }

    pub fn mean(&self) -> f64 {
        self.coefficient(&vec![0; self.rank()]).re
    }

    pub fn seminorm(&self, p: u32) -> f64 {
        if p == 2 {
            return self.terms.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        }
        let n = self.sampling_resolution();
        let values = self.hull_values(n);
        let s = values.iter().map(|v| v.abs().powi(p as i32)).sum::<f64>() / values.len() as f64;
        s.powf(1.0 / p as f64)
    }

    fn sampling_resolution(&self) -> usize {
        let max_mode = self
            .terms
            .keys()
            .flat_map(|m| m.iter().map(|v| v.unsigned_abs() as usize))
            .max()
            .unwrap_or(0);
        let base = if self.rank() >= 3 { 16 } else { 64 };
        base.max(8 * (max_mode + 1))
    }

    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(mode, c)| {
                let lam = self.frequency(mode);
                let phase: f64 = lam.iter().zip(y).map(|(l, yi)| l * yi).sum();
                (c * Complex64::from_polar(1.0, phase)).re
            })
            .sum()
    }

    /// Values on the hull torus grid `theta_j = j / n` (row-major over the rank axes),
    /// where `u(y) = U(theta)` with `theta_i = basis[i] . y / (2 pi)`.
    pub fn hull_values(&self, n: usize) -> Vec<f64> {
        let fft = TorusFft::new(self.rank(), n);
        (0..fft.len())
            .map(|flat| {
                let idx = fft.index(flat);
                self.terms
                    .iter()
                    .map(|(mode, c)| {
                        let phase: f64 = mode
                            .iter()
                            .zip(&idx)
                            .map(|(m, &i)| 2.0 * PI * *m as f64 * i as f64 / n as f64)
                            .sum();
                        (c * Complex64::from_polar(1.0, phase)).re
                    })
                    .sum()
            })
            .collect()
    }

    fn same_basis(&self, other: &SpectralAp) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::Incompatible(
                "spectral functions over different frequency modules".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralAp) -> Result<Self> {
        self.same_basis(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        Ok(Self {
            basis: self.basis.clone(),
            terms,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    /// Product by frequency-sum convolution, keeping at most `max_terms` modes
    /// (largest magnitudes first, conjugate pairs kept together).
    pub fn mul_capped(&self, other: &SpectralAp, max_terms: usize) -> Result<(Self, Option<Truncation>)> {
        self.same_basis(other)?;
        let mut terms: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let m: Vec<i64> = m1.iter().zip(m2).map(|(a, b)| a + b).collect();
                *terms.entry(m).or_insert(Complex64::new(0.0, 0.0)) += c1 * c2;
            }
        }
        // Re-symmetrise: the accumulation order of c_{m} and c_{-m} can differ in the last bit.
        let keys: Vec<Vec<i64>> = terms.keys().cloned().collect();
        for m in keys {
            let neg: Vec<i64> = m.iter().map(|v| -v).collect();
            if m > neg {
                let c = terms[&neg].conj();
                terms.insert(m, c);
            } else if m == neg {
                let c = terms[&m];
                terms.insert(m, Complex64::new(c.re, 0.0));
            }
        }
        let mut truncation = None;
        if terms.len() > max_terms {
            let zero = vec![0; self.rank()];
            let mut ranked: Vec<(Vec<i64>, f64)> = terms
                .iter()
                .filter(|(m, _)| **m <= m.iter().map(|v| -v).collect::<Vec<_>>())
                .map(|(m, c)| (m.clone(), c.norm()))
                .collect();
            ranked.sort_by(|a, b| {
                let za = (a.0 == zero) as u8;
                let zb = (b.0 == zero) as u8;
                zb.cmp(&za)
                    .then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
                    .then(a.0.cmp(&b.0))
            });
            let mut kept = BTreeMap::new();
            let mut dropped = 0usize;
            let mut resid = 0.0;
            for (m, _) in ranked {
                let neg: Vec<i64> = m.iter().map(|v| -v).collect();
                let cost = if m == neg { 1 } else { 2 };
                if kept.len() + cost <= max_terms || m == zero {
                    kept.insert(m.clone(), terms[&m]);
                    kept.insert(neg.clone(), terms[&neg]);
                } else {
                    dropped += cost;
                    resid += terms[&m].norm_sqr() * cost as f64;
                }
            }
            let residual = resid.sqrt();
            log::warn!("spectral product truncated: {dropped} modes dropped, residual {residual:.3e}");
            truncation = Some(Truncation { dropped, residual });
            terms = kept;
        }
        Ok((
            Self {
                basis: self.basis.clone(),
                terms,
            },
            truncation,
        ))
    }

    pub fn gradient(&self) -> Vec<SpectralAp> {
        (0..self.dim())
            .map(|axis| {
                let terms = self
                    .terms
                    .iter()
                    .map(|(m, c)| {
                        let lam = self.frequency(m)[axis];
                        (m.clone(), c * Complex64::new(0.0, lam))
                    })
                    .collect();
                Self {
                    basis: self.basis.clone(),
                    terms,
                }
            })
            .collect()
    }

    /// `y -> u(y + a)`.
    pub fn translate(&self, a: &[f64]) -> Result<Self> {
        if a.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: a.len(),
            });
        }
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let phase: f64 = self.frequency(m).iter().zip(a).map(|(l, ai)| l * ai).sum();
                (m.clone(), c * Complex64::from_polar(1.0, phase))
            })
            .collect();
        Ok(Self {
            basis: self.basis.clone(),
            terms,
        })
    }

    /// Commensurate periodic approximant: each basis frequency is replaced by the
    /// nearest multiple of `2 pi / period`, and the result is sampled on an
    /// `n`-point grid of `[0, period)^d`.
    pub fn periodic_approximant(&self, period: f64, n: usize) -> Result<PeriodicGrid> {
        let step = 2.0 * PI / period;
        let rounded: Vec<Vec<f64>> = self
            .basis
            .iter()
            .map(|b| b.iter().map(|w| (w / step).round() * step).collect())
            .collect();
        let approx = SpectralAp {
            basis: rounded,
            terms: self.terms.clone(),
        };
        PeriodicGrid::from_fn(self.dim(), n, period, |y| approx.evaluate(y))
    }
}
