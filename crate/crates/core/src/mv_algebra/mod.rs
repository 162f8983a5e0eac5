//! Functions of the fast variable `y` in an algebra with mean value.

mod asymptotic;
pub mod io;
mod periodic;
mod spectral;

pub use asymptotic::{AsymptoticPeriodic, Defect};
pub use periodic::PeriodicGrid;
pub use spectral::{SpectralAp, Truncation, DEFAULT_MAX_TERMS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMethod {
    #[default]
    Spectral,
    Centered,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanValueFunction {
    Periodic(PeriodicGrid),
    Spectral(SpectralAp),
    Asymptotic(AsymptoticPeriodic),
}

impl From<PeriodicGrid> for MeanValueFunction {
    fn from(g: PeriodicGrid) -> Self {
        Self::Periodic(g)
    }
}

impl From<SpectralAp> for MeanValueFunction {
    fn from(s: SpectralAp) -> Self {
        Self::Spectral(s)
    }
}

impl From<AsymptoticPeriodic> for MeanValueFunction {
    fn from(a: AsymptoticPeriodic) -> Self {
        Self::Asymptotic(a)
    }
}

impl MeanValueFunction {
    pub fn dim(&self) -> usize {
        match self {
            Self::Periodic(g) => g.dim(),
            Self::Spectral(s) => s.dim(),
            Self::Asymptotic(a) => a.periodic().dim(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Periodic(_) => "periodic grid",
            Self::Spectral(_) => "spectral",
            Self::Asymptotic(_) => "asymptotic periodic",
        }
    }

    pub fn mean_value(&self) -> f64 {
        match self {
            Self::Periodic(g) => g.mean(),
            Self::Spectral(s) => s.mean(),
            Self::Asymptotic(a) => a.mean(),
        }
    }

    /// `(M(|u|^p))^(1/p)` for `p` in `{1, 2}`.
    pub fn besicovitch_seminorm(&self, p: u32) -> Result<f64> {
        if p != 1 && p != 2 {
            return Err(Error::InvalidInput(format!("seminorm exponent must be 1 or 2, got {p}")));
        }
        Ok(match self {
            Self::Periodic(g) => g.seminorm(p),
            Self::Spectral(s) => s.seminorm(p),
            Self::Asymptotic(a) => a.seminorm(p),
        })
    }

    pub fn grad_y(&self, method: GradMethod) -> Vec<MeanValueFunction> {
        match self {
            Self::Periodic(g) => g.gradient(method).into_iter().map(Self::Periodic).collect(),
            Self::Spectral(s) => s.gradient().into_iter().map(Self::Spectral).collect(),
            // The defect gradient does not enter any mean value; only the periodic part is kept.
            Self::Asymptotic(a) => a.periodic().gradient(method).into_iter().map(Self::Periodic).collect(),
        }
    }

    /// Pointwise value at physical `y`; includes the defect part.
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        match self {
            Self::Periodic(g) => g.evaluate(y),
            Self::Spectral(s) => s.evaluate(y),
            Self::Asymptotic(a) => a.evaluate(y),
        }
    }

    fn mismatch(&self, other: &MeanValueFunction) -> Error {
        Error::Incompatible(format!("{} vs {}", self.kind(), other.kind()))
    }

    pub fn add(&self, other: &MeanValueFunction) -> Result<Self> {
        match (self, other) {
            (Self::Periodic(a), Self::Periodic(b)) => Ok(Self::Periodic(a.zip_with(b, |x, y| x + y)?)),
            (Self::Spectral(a), Self::Spectral(b)) => Ok(Self::Spectral(a.add(b)?)),
            (Self::Asymptotic(a), Self::Asymptotic(b)) => {
                let per = a.periodic().zip_with(b.periodic(), |x, y| x + y)?;
                let (da, db) = (a.defect(), b.defect());
                if da.lo != db.lo || da.hi != db.hi || da.n != db.n {
                    return Err(Error::Incompatible("defect boxes differ".into()));
                }
                let defect = Defect {
                    values: da.values.iter().zip(&db.values).map(|(x, y)| x + y).collect(),
                    decays: da.decays && db.decays,
                    ..da.clone()
                };
                Ok(Self::Asymptotic(AsymptoticPeriodic::new(per, defect)?))
            }
            _ => Err(self.mismatch(other)),
        }
    }

    /// Product; spectral products are capped at [`DEFAULT_MAX_TERMS`] modes.
    pub fn mul(&self, other: &MeanValueFunction) -> Result<Self> {
        self.mul_capped(other, DEFAULT_MAX_TERMS).map(|(u, _)| u)
    }

    pub fn mul_capped(
        &self,
        other: &MeanValueFunction,
        max_terms: usize,
    ) -> Result<(Self, Option<Truncation>)> {
        match (self, other) {
            (Self::Periodic(a), Self::Periodic(b)) => {
                Ok((Self::Periodic(a.zip_with(b, |x, y| x * y)?), None))
            }
            (Self::Spectral(a), Self::Spectral(b)) => {
                let (p, t) = a.mul_capped(b, max_terms)?;
                Ok((Self::Spectral(p), t))
            }
            (Self::Asymptotic(a), Self::Asymptotic(b)) => {
                // (p1 + d1)(p2 + d2) = p1 p2 + (p1 d2 + d1 p2 + d1 d2); the bracket is localized.
                let per = a.periodic().zip_with(b.periodic(), |x, y| x * y)?;
                let (da, db) = (a.defect(), b.defect());
                if da.lo != db.lo || da.hi != db.hi || da.n != db.n {
                    return Err(Error::Incompatible("defect boxes differ".into()));
                }
                let dim = da.lo.len();
                let mut values = Vec::with_capacity(da.values.len());
                let mut y = vec![0.0; dim];
                for flat in 0..da.values.len() {
                    let mut rem = flat;
                    for axis in (0..dim).rev() {
                        let i = rem % da.n;
                        rem /= da.n;
                        y[axis] = da.lo[axis] + (da.hi[axis] - da.lo[axis]) * i as f64 / (da.n - 1) as f64;
                    }
                    let p1 = a.periodic().evaluate(&y);
                    let p2 = b.periodic().evaluate(&y);
                    let (d1, d2) = (da.values[flat], db.values[flat]);
                    values.push(p1 * d2 + d1 * p2 + d1 * d2);
                }
                let defect = Defect {
                    values,
                    decays: da.decays && db.decays,
                    ..da.clone()
                };
                Ok((Self::Asymptotic(AsymptoticPeriodic::new(per, defect)?), None))
            }
            _ => Err(self.mismatch(other)),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        match self {
            Self::Periodic(g) => Self::Periodic(g.map(|v| s * v)),
            Self::Spectral(sp) => Self::Spectral(sp.scale(s)),
            Self::Asymptotic(a) => {
                let per = a.periodic().map(|v| s * v);
                let defect = a.map_defect(|v| s * v);
                Self::Asymptotic(AsymptoticPeriodic::new(per, defect).expect("scaling keeps validity"))
            }
        }
    }

    /// `tau_a u (y) = u(y + a)`.
    pub fn translate(&self, a: &[f64]) -> Result<Self> {
        match self {
            Self::Periodic(g) => Ok(Self::Periodic(g.translate(a)?)),
            Self::Spectral(s) => Ok(Self::Spectral(s.translate(a)?)),
            Self::Asymptotic(ap) => {
                let per = ap.periodic().translate(a)?;
                let d = ap.defect();
                let defect = Defect {
                    lo: d.lo.iter().zip(a).map(|(l, s)| l - s).collect(),
                    hi: d.hi.iter().zip(a).map(|(h, s)| h - s).collect(),
                    ..d.clone()
                };
                Ok(Self::Asymptotic(AsymptoticPeriodic::new(per, defect)?))
            }
        }
    }
}
