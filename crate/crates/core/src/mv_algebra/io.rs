//! Flat serialisations: grids as row-major real arrays (decimal text or
//! little-endian binary), spectra as `(frequency, re, im)` triples.

use num_complex::Complex64;

use super::{PeriodicGrid, SpectralAp};
use crate::error::{Error, Result};

pub fn grid_to_text(g: &PeriodicGrid) -> String {
    let mut out = String::new();
    for v in g.values() {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

pub fn grid_from_text(dim: usize, n: usize, period: f64, text: &str) -> Result<PeriodicGrid> {
    let values = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad grid value `{tok}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    PeriodicGrid::with_period(dim, n, period, values)
}

pub fn grid_to_le_bytes(g: &PeriodicGrid) -> Vec<u8> {
    g.values().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn grid_from_le_bytes(dim: usize, n: usize, period: f64, bytes: &[u8]) -> Result<PeriodicGrid> {
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidInput(format!(
            "binary grid length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    PeriodicGrid::with_period(dim, n, period, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTriple {
    pub frequency: Vec<f64>,
    pub re: f64,
    pub im: f64,
}

pub fn spectral_to_triples(s: &SpectralAp) -> Vec<SpectralTriple> {
    s.terms()
        .map(|(m, c)| SpectralTriple {
            frequency: s.frequency(m),
            re: c.re,
            im: c.im,
        })
        .collect()
}

/// Rebuilds a spectral function from triples. Each `+-lambda` pair becomes its
/// own generator of the frequency module.
pub fn spectral_from_triples(dim: usize, triples: &[SpectralTriple]) -> Result<SpectralAp> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut entries: Vec<(usize, i64, Complex64)> = Vec::new();
    let mut zero = Complex64::new(0.0, 0.0);
    for t in triples {
        if t.frequency.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                got: t.frequency.len(),
            });
        }
        let c = Complex64::new(t.re, t.im);
        if t.frequency.iter().all(|&l| l == 0.0) {
            zero += c;
            continue;
        }
        let neg: Vec<f64> = t.frequency.iter().map(|l| -l).collect();
        if let Some(k) = basis.iter().position(|b| *b == t.frequency) {
            entries.push((k, 1, c));
        } else if let Some(k) = basis.iter().position(|b| *b == neg) {
            entries.push((k, -1, c));
        } else {
            basis.push(t.frequency.clone());
            entries.push((basis.len() - 1, 1, c));
        }
    }
    if basis.is_empty() {
        basis.push(vec![0.0; dim]);
    }
    let r = basis.len();
    let mut terms = vec![(vec![0; r], zero)];
    for (k, sign, c) in entries {
        let mut mode = vec![0; r];
        mode[k] = sign;
        terms.push((mode, c));
    }
    SpectralAp::new(basis, terms)
}
