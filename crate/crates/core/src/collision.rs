//! Scattering kernels `sigma(x, y, v, w) = X(x) s(y) g(v, w)` and the collision
//! operators `Q`, `Q*`, `K` on phase fields.
//!
//! Argument order: the gain term of `Q` is `sigma(x, y, v, w) f(w)`, and the
//! absorption rate is `Sigma(y, v) = int sigma(x, y, w, v) dmu(w)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mv_algebra::{AsymptoticPeriodic, Defect, MeanValueFunction, PeriodicGrid, SpectralAp};
use crate::phase_space::{CellGeometry, CellGrid, VelocityMeasure};

/// Relative tolerance of the semi-detailed balance check.
pub const SDB_TOL: f64 = 1e-12;

/// Function of `(y, v)` on `CellGrid x VelocityMeasure`, stored as `values[k * N + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    n_cell: usize,
    n_vel: usize,
    values: Vec<f64>,
}

impl PhaseField {
    pub fn zeros(n_cell: usize, n_vel: usize) -> Self {
        Self {
            n_cell,
            n_vel,
            values: vec![0.0; n_cell * n_vel],
        }
    }

    pub fn constant(n_cell: usize, n_vel: usize, c: f64) -> Self {
        Self {
            n_cell,
            n_vel,
            values: vec![c; n_cell * n_vel],
        }
    }

    pub fn from_values(n_cell: usize, n_vel: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_cell * n_vel {
            return Err(Error::ShapeMismatch {
                expected: n_cell * n_vel,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite phase-field value".into()));
        }
        Ok(Self {
            n_cell,
            n_vel,
            values,
        })
    }

    pub fn from_fn<F: Fn(usize, usize) -> f64>(n_cell: usize, n_vel: usize, f: F) -> Self {
        let mut values = Vec::with_capacity(n_cell * n_vel);
        for k in 0..n_vel {
            for j in 0..n_cell {
                values.push(f(j, k));
            }
        }
        Self {
            n_cell,
            n_vel,
            values,
        }
    }

    pub fn n_cell(&self) -> usize {
        self.n_cell
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[k * self.n_cell + j]
    }

    pub fn velocity_slice(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_cell..(k + 1) * self.n_cell]
    }

    pub fn same_shape(&self, other: &PhaseField) -> Result<()> {
        if self.n_cell != other.n_cell || self.n_vel != other.n_vel {
            return Err(Error::ShapeMismatch {
                expected: self.values.len(),
                got: other.values.len(),
            });
        }
        Ok(())
    }

    /// `int_V M(f(., v)) dmu(v)`.
    pub fn integral_mean(&self, vm: &VelocityMeasure) -> f64 {
        (0..self.n_vel)
            .map(|k| vm.weights()[k] * self.velocity_slice(k).iter().sum::<f64>())
            .sum::<f64>()
            / self.n_cell as f64
    }

    /// `<f, g> = int_V M(f g) dmu`.
    pub fn pairing(&self, other: &PhaseField, vm: &VelocityMeasure) -> f64 {
        (0..self.n_vel)
            .map(|k| {
                vm.weights()[k]
                    * self
                        .velocity_slice(k)
                        .iter()
                        .zip(other.velocity_slice(k))
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .sum::<f64>()
            / self.n_cell as f64
    }

    pub fn norm(&self, vm: &VelocityMeasure) -> f64 {
        self.pairing(self, vm).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn axpy(&mut self, alpha: f64, x: &PhaseField) {
        crate::linalg::axpy(alpha, &x.values, &mut self.values);
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_constant(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v += c);
    }

    pub fn pointwise_mul(&self, other: &PhaseField) -> PhaseField {
        PhaseField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            ..self.clone()
        }
    }
}

/// Macroscopic modulation `X(x)` of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XDependence {
    #[default]
    None,
    /// `sigma = (1 + beta tanh x_1) s(y) g`.
    TanhScale { beta: f64 },
    /// `s(y) -> 1 + (1 + beta tanh x_1)(s(y) - 1)`.
    TanhAmplitude { beta: f64 },
}

impl XDependence {
    pub fn is_trivial(&self) -> bool {
        matches!(self, XDependence::None)
    }

    fn scale(&self, x: &[f64]) -> f64 {
        match self {
            XDependence::TanhScale { beta } => 1.0 + beta * x[0].tanh(),
            _ => 1.0,
        }
    }

    fn amplitude(&self, x: &[f64]) -> f64 {
        match self {
            XDependence::TanhAmplitude { beta } => 1.0 + beta * x[0].tanh(),
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            XDependence::None => Ok(()),
            XDependence::TanhScale { beta } | XDependence::TanhAmplitude { beta } => {
                if beta.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("x-dependence needs |beta| < 1, got {beta}")))
                }
            }
        }
    }
}

/// Fast-variable profile `s(y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant,
    /// `1 + alpha sin(2 pi y_1)`.
    Sinusoidal { alpha: f64 },
    /// `1 + alpha1 cos(2 pi y_1) + alpha2 cos(2 sqrt(2) pi y_1)`.
    QuasiPeriodic { alpha1: f64, alpha2: f64 },
    /// Sinusoidal periodic part plus `amplitude exp(-|y|^2 / width^2)` truncated to `|y_i| <= 6 width`.
    AsymptoticSinusoidal { alpha: f64, amplitude: f64, width: f64 },
    Function(MeanValueFunction),
}

impl Profile {
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        match self {
            Profile::Constant => 1.0,
            Profile::Sinusoidal { alpha } => 1.0 + alpha * (2.0 * PI * y[0]).sin(),
            Profile::QuasiPeriodic { alpha1, alpha2 } => {
                1.0 + alpha1 * (2.0 * PI * y[0]).cos() + alpha2 * (2.0 * 2f64.sqrt() * PI * y[0]).cos()
            }
            Profile::AsymptoticSinusoidal {
                alpha,
                amplitude,
                width,
            } => {
                let r2: f64 = y.iter().map(|v| v * v).sum();
                let inside = y.iter().all(|v| v.abs() <= 6.0 * width);
                let bump = if inside { amplitude * (-r2 / (width * width)).exp() } else { 0.0 };
                1.0 + alpha * (2.0 * PI * y[0]).sin() + bump
            }
            Profile::Function(u) => u.evaluate(y),
        }
    }

    /// Spectral form over the profile's natural frequency module, when it has one.
    pub fn spectral(&self, dim: usize) -> Option<SpectralAp> {
        let e1 = |w: f64| {
            let mut v = vec![0.0; dim];
            v[0] = w;
            v
        };
        match self {
            Profile::Constant => SpectralAp::from_real_terms(vec![e1(2.0 * PI)], 1.0, &[]).ok(),
            Profile::Sinusoidal { alpha } | Profile::AsymptoticSinusoidal { alpha, .. } => {
                SpectralAp::from_real_terms(vec![e1(2.0 * PI)], 1.0, &[(vec![1], 0.0, *alpha)]).ok()
            }
            Profile::QuasiPeriodic { alpha1, alpha2 } => SpectralAp::from_real_terms(
                vec![e1(2.0 * PI), e1(2.0 * 2f64.sqrt() * PI)],
                1.0,
                &[(vec![1, 0], *alpha1, 0.0), (vec![0, 1], *alpha2, 0.0)],
            )
            .ok(),
            Profile::Function(MeanValueFunction::Spectral(s)) => Some(s.clone()),
            Profile::Function(_) => None,
        }
    }

    /// The profile as an element of the algebra, in the representation matching `cell`.
    pub fn to_mean_value_function(&self, cell: &CellGrid) -> Result<MeanValueFunction> {
        match (self, cell.geometry()) {
            (Profile::Function(u), _) => Ok(u.clone()),
            (Profile::AsymptoticSinusoidal { alpha, amplitude, width }, CellGeometry::Periodic { period }) => {
                let d = cell.phys_dim();
                let alpha = *alpha;
                let per = PeriodicGrid::from_fn(d, cell.n(), *period, |y| 1.0 + alpha * (2.0 * PI * y[0]).sin())?;
                let w = *width;
                let amp = *amplitude;
                let defect = Defect::from_fn(vec![-6.0 * w; d], vec![6.0 * w; d], 121, |y| {
                    amp * (-y.iter().map(|v| v * v).sum::<f64>() / (w * w)).exp()
                })?;
                Ok(AsymptoticPeriodic::new(per, defect)?.into())
            }
            (_, CellGeometry::Periodic { period }) => {
                Ok(PeriodicGrid::from_fn(cell.phys_dim(), cell.n(), *period, |y| self.evaluate(y))?.into())
            }
            (_, CellGeometry::Hull { .. }) => self
                .spectral(cell.phys_dim())
                .map(MeanValueFunction::from)
                .ok_or_else(|| Error::Incompatible("profile has no spectral representation".into())),
        }
    }

    /// Samples of the periodic part of `s` at the nodes of `cell`.
    pub fn sample(&self, cell: &CellGrid) -> Result<Vec<f64>> {
        match cell.geometry() {
            CellGeometry::Periodic { period } => {
                if let Profile::Function(MeanValueFunction::Periodic(g)) = self {
                    if g.n() == cell.n() && g.period() == *period && g.dim() == cell.torus_dim() {
                        return Ok(g.values().to_vec());
                    }
                }
                if let Profile::Function(MeanValueFunction::Asymptotic(a)) = self {
                    let g = a.periodic();
                    if g.n() == cell.n() && g.period() == *period && g.dim() == cell.torus_dim() {
                        return Ok(g.values().to_vec());
                    }
                    return Ok((0..cell.len())
                        .map(|j| g.evaluate(&cell.physical_point(j).expect("periodic")))
                        .collect());
                }
                let periodic_only = match self {
                    Profile::AsymptoticSinusoidal { alpha, .. } => Profile::Sinusoidal { alpha: *alpha },
                    other => other.clone(),
                };
                Ok((0..cell.len())
                    .map(|j| periodic_only.evaluate(&cell.physical_point(j).expect("periodic")))
                    .collect())
            }
            CellGeometry::Hull { basis } => {
                let s = self
                    .spectral(cell.phys_dim())
                    .ok_or_else(|| Error::Incompatible("profile has no spectral representation".into()))?;
                let constant = s.terms().all(|(m, c)| m.iter().all(|&v| v == 0) || c.norm() == 0.0);
                if constant {
                    return Ok(vec![s.mean(); cell.len()]);
                }
                if s.basis() != basis.as_slice() {
                    return Err(Error::Incompatible(
                        "profile frequency module differs from the hull basis".into(),
                    ));
                }
                Ok(s.hull_values(cell.n()))
            }
        }
    }
}

/// Separable scattering kernel `sigma(x, y, v_k, w_l) = X(x) s(y) g[k][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringKernel {
    profile: Profile,
    table: Vec<Vec<f64>>,
    x_dep: XDependence,
}

impl ScatteringKernel {
    pub fn new(profile: Profile, table: Vec<Vec<f64>>, x_dep: XDependence) -> Result<Self> {
        let k = table.len();
        if k < 2 || table.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidInput("kernel velocity table must be square with K >= 2".into()));
        }
        if let Some(bad) = table.iter().flatten().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidInput(format!("kernel table entry {bad} is not strictly positive")));
        }
        match &profile {
            Profile::Sinusoidal { alpha } | Profile::AsymptoticSinusoidal { alpha, .. } if alpha.abs() >= 1.0 => {
                return Err(Error::InvalidInput(format!("sinusoidal kernel needs |alpha| < 1, got {alpha}")));
            }
            Profile::QuasiPeriodic { alpha1, alpha2 } if alpha1.abs() + alpha2.abs() >= 1.0 => {
                return Err(Error::InvalidInput("quasi-periodic kernel needs |alpha1| + |alpha2| < 1".into()));
            }
            Profile::AsymptoticSinusoidal { width, .. } if !(*width > 0.0) => {
                return Err(Error::InvalidInput("defect width must be positive".into()));
            }
            _ => {}
        }
        x_dep.validate()?;
        Ok(Self {
            profile,
            table,
            x_dep,
        })
    }

    pub fn constant(sigma0: f64, k: usize) -> Result<Self> {
        Self::new(Profile::Constant, vec![vec![sigma0; k]; k], XDependence::None)
    }

    pub fn sinusoidal(alpha: f64, k: usize) -> Result<Self> {
        Self::new(Profile::Sinusoidal { alpha }, vec![vec![1.0; k]; k], XDependence::None)
    }

    pub fn quasi_periodic(alpha1: f64, alpha2: f64, k: usize) -> Result<Self> {
        Self::new(
            Profile::QuasiPeriodic { alpha1, alpha2 },
            vec![vec![1.0; k]; k],
            XDependence::None,
        )
    }

    pub fn table(table: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(Profile::Constant, table, XDependence::None)
    }

    /// y-constant symmetric table with entries uniform in `[0.5, 1.5)`.
    pub fn random_symmetric(k: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i..k {
                let g = 0.5 + rng.random::<f64>();
                t[i][j] = g;
                t[j][i] = g;
            }
        }
        Self::table(t)
    }

    pub fn asymptotic(alpha: f64, amplitude: f64, width: f64, k: usize) -> Result<Self> {
        Self::new(
            Profile::AsymptoticSinusoidal {
                alpha,
                amplitude,
                width,
            },
            vec![vec![1.0; k]; k],
            XDependence::None,
        )
    }

    pub fn with_x_dependence(mut self, x_dep: XDependence) -> Result<Self> {
        x_dep.validate()?;
        self.x_dep = x_dep;
        Ok(self)
    }

    /// `sigma -> c sigma`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let table = self.table.iter().map(|r| r.iter().map(|g| c * g).collect()).collect();
        Self::new(self.profile.clone(), table, self.x_dep)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn velocity_table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn x_dependence(&self) -> XDependence {
        self.x_dep
    }

    pub fn n_vel(&self) -> usize {
        self.table.len()
    }

    /// Closed-form pointwise value at any `(x, y, v_k, w_l)`, defect included.
    pub fn evaluate(&self, x: &[f64], y: &[f64], k: usize, l: usize) -> f64 {
        self.y_factor(x, y) * self.table[k][l]
    }

    /// `X(x) s_x(y)` including the defect part.
    pub fn y_factor(&self, x: &[f64], y: &[f64]) -> f64 {
        let s = self.profile.evaluate(y);
        self.x_dep.scale(x) * (1.0 + self.x_dep.amplitude(x) * (s - 1.0))
    }

    /// `y -> sigma(x, y, v_k, w_l)` as an algebra element.
    pub fn mean_value_function(&self, x: &[f64], k: usize, l: usize, cell: &CellGrid) -> Result<MeanValueFunction> {
        let u = self.profile.to_mean_value_function(cell)?;
        let amp = self.x_dep.amplitude(x);
        let one = constant_like(&u)?;
        let shaped = one.scale(1.0 - amp).add(&u.scale(amp))?;
        Ok(shaped.scale(self.x_dep.scale(x) * self.table[k][l]))
    }

    /// Sampled collision operator at macro point `x`.
    pub fn at(&self, x: &[f64], vm: &VelocityMeasure, cell: &CellGrid) -> Result<CollisionOperator> {
        if vm.len() != self.n_vel() {
            return Err(Error::ShapeMismatch {
                expected: self.n_vel(),
                got: vm.len(),
            });
        }
        let raw = self.profile.sample(cell)?;
        let (scale, amp) = (self.x_dep.scale(x), self.x_dep.amplitude(x));
        let s: Vec<f64> = raw.iter().map(|v| scale * (1.0 + amp * (v - 1.0))).collect();
        if let Some(bad) = s.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidInput(format!("kernel profile sample {bad} is not strictly positive")));
        }
        CollisionOperator::new(s, self.table.clone(), vm.weights().to_vec())
    }
}

fn constant_like(u: &MeanValueFunction) -> Result<MeanValueFunction> {
    Ok(match u {
        MeanValueFunction::Periodic(g) => g.map(|_| 1.0).into(),
        MeanValueFunction::Spectral(s) => {
            SpectralAp::new(s.basis().to_vec(), vec![(vec![0; s.rank()], num_complex::Complex64::new(1.0, 0.0))])?.into()
        }
        MeanValueFunction::Asymptotic(a) => {
            let d = a.map_defect(|_| 0.0);
            AsymptoticPeriodic::new(a.periodic().map(|_| 1.0), d)?.into()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdbReport {
    pub max_gap: f64,
    pub relative_gap: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Collision operator at a fixed macro point, on cell samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionOperator {
    s: Vec<f64>,
    g: Vec<f64>,
    mu: Vec<f64>,
    /// `int g(v, w) dmu(w)`
    row: Vec<f64>,
    /// `int g(w, v) dmu(w)`
    col: Vec<f64>,
}

impl CollisionOperator {
    pub fn new(s: Vec<f64>, table: Vec<Vec<f64>>, mu: Vec<f64>) -> Result<Self> {
        let k = mu.len();
        if table.len() != k || table.iter().any(|r| r.len() != k) {
            return Err(Error::ShapeMismatch {
                expected: k,
                got: table.len(),
            });
        }
        let g: Vec<f64> = table.into_iter().flatten().collect();
        let row = (0..k).map(|v| (0..k).map(|w| mu[w] * g[v * k + w]).sum()).collect();
        let col = (0..k).map(|v| (0..k).map(|w| mu[w] * g[w * k + v]).sum()).collect();
        Ok(Self { s, g, mu, row, col })
    }

    pub fn n_cell(&self) -> usize {
        self.s.len()
    }

    pub fn n_vel(&self) -> usize {
        self.mu.len()
    }

    pub fn profile_samples(&self) -> &[f64] {
        &self.s
    }

    /// `sigma(y_j, v_k, w_l)`.
    pub fn sigma(&self, j: usize, k: usize, l: usize) -> f64 {
        self.s[j] * self.g[k * self.n_vel() + l]
    }

    /// `Sigma(y, v)` as a phase field.
    pub fn absorption(&self) -> PhaseField {
        PhaseField::from_fn(self.n_cell(), self.n_vel(), |j, k| self.s[j] * self.col[k])
    }

    pub fn absorption_min(&self) -> f64 {
        let smin = self.s.iter().copied().fold(f64::INFINITY, f64::min);
        let cmin = self.col.iter().copied().fold(f64::INFINITY, f64::min);
        smin * cmin
    }

    pub fn absorption_max(&self) -> f64 {
        let smax = self.s.iter().copied().fold(0.0, f64::max);
        let cmax = self.col.iter().copied().fold(0.0, f64::max);
        smax * cmax
    }

    fn check_shape(&self, f: &PhaseField) -> Result<()> {
        if f.n_cell() != self.n_cell() || f.n_vel() != self.n_vel() {
            return Err(Error::ShapeMismatch {
                expected: self.n_cell() * self.n_vel(),
                got: f.values().len(),
            });
        }
        Ok(())
    }

    /// `(K f)(y, v) = int sigma(y, v, w) f(y, w) dmu(w)`.
    pub fn apply_k(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check_shape(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.gain_into(f.values(), out.values_mut(), false);
        Ok(out)
    }

    /// `(K* phi)(y, v) = int sigma(y, w, v) phi(y, w) dmu(w)`.
    pub fn apply_k_star(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check_shape(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.gain_into(f.values(), out.values_mut(), true);
        Ok(out)
    }

    pub fn apply_q(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check_shape(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.q_into(f.values(), out.values_mut(), false);
        Ok(out)
    }

    pub fn apply_q_star(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check_shape(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.q_into(f.values(), out.values_mut(), true);
        Ok(out)
    }

    /// Raw gain kernel on `k * N + j` slices; `adjoint` swaps the velocity arguments.
    pub(crate) fn gain_into(&self, f: &[f64], out: &mut [f64], adjoint: bool) {
        let (n, kk) = (self.n_cell(), self.n_vel());
        out.iter_mut().for_each(|o| *o = 0.0);
        for v in 0..kk {
            let o = &mut out[v * n..(v + 1) * n];
            for w in 0..kk {
                let gvw = if adjoint { self.g[w * kk + v] } else { self.g[v * kk + w] };
                let c = self.mu[w] * gvw;
                let fw = &f[w * n..(w + 1) * n];
                for j in 0..n {
                    o[j] += c * fw[j];
                }
            }
            for j in 0..n {
                o[j] *= self.s[j];
            }
        }
    }

    /// `Q f` (or `Q* f`): gain minus absorption times `f`.
    pub(crate) fn q_into(&self, f: &[f64], out: &mut [f64], adjoint: bool) {
        self.gain_into(f, out, adjoint);
        let n = self.n_cell();
        for v in 0..self.n_vel() {
            for j in 0..n {
                out[v * n + j] -= self.s[j] * self.col[v] * f[v * n + j];
            }
        }
    }

    /// Semi-detailed balance: `int sigma(v, w) dmu(w) = int sigma(w, v) dmu(w)` at every `(y, v)`.
    pub fn check_sdb(&self) -> SdbReport {
        let smax = self.s.iter().copied().fold(0.0, f64::max);
        let mut max_gap: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for v in 0..self.n_vel() {
            max_gap = max_gap.max(smax * (self.row[v] - self.col[v]).abs());
            scale = scale.max(smax * self.row[v].abs().max(self.col[v].abs()));
        }
        let relative_gap = if scale > 0.0 { max_gap / scale } else { 0.0 };
        SdbReport {
            max_gap,
            relative_gap,
            tol: SDB_TOL,
            passed: relative_gap <= SDB_TOL,
        }
    }

    /// `K x K` matrix of `Q` at cell node `j` (rows v, columns w).
    pub fn local_matrix(&self, j: usize) -> Vec<Vec<f64>> {
        let kk = self.n_vel();
        (0..kk)
            .map(|v| {
                (0..kk)
                    .map(|w| {
                        let gain = self.s[j] * self.mu[w] * self.g[v * kk + w];
                        if v == w {
                            gain - self.s[j] * self.col[v]
                        } else {
                            gain
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(n: usize) -> CellGrid {
        CellGrid::periodic(1, n).unwrap()
    }

    #[test]
    fn absorption_examples() {
        let vm = VelocityMeasure::two_velocity();
        let op = ScatteringKernel::constant(1.0, 2).unwrap().at(&[0.0], &vm, &cell(4)).unwrap();
        assert!(op.absorption().values().iter().all(|&v| v == 2.0));

        let op = ScatteringKernel::table(vec![vec![1.0, 2.0], vec![3.0, 4.0]])
            .unwrap()
            .at(&[0.0], &vm, &cell(4))
            .unwrap();
        let sig = op.absorption();
        assert_eq!(sig.get(0, 0), 4.0);
        assert_eq!(sig.get(0, 1), 6.0);
        let r = op.check_sdb();
        assert!(!r.passed);
        assert_eq!(r.max_gap, 1.0);

        let op = ScatteringKernel::sinusoidal(0.5, 2).unwrap().at(&[0.0], &vm, &cell(8)).unwrap();
        let sig = op.absorption();
        for j in 0..8 {
            let y = j as f64 / 8.0;
            assert!((sig.get(j, 1) - 2.0 * (1.0 + 0.5 * (2.0 * PI * y).sin())).abs() < 1e-14);
        }
        assert!(op.check_sdb().passed);
    }

    #[test]
    fn q_direct_evaluation() {
        let vm = VelocityMeasure::two_velocity();
        let op = ScatteringKernel::constant(1.0, 2).unwrap().at(&[0.0], &vm, &cell(3)).unwrap();
        let f = PhaseField::from_fn(3, 2, |_, k| if k == 1 { 1.0 } else { 0.0 });
        let q = op.apply_q(&f).unwrap();
        for j in 0..3 {
            assert_eq!(q.get(j, 1), -1.0);
            assert_eq!(q.get(j, 0), 1.0);
        }
        let c = PhaseField::constant(3, 2, 4.0);
        assert!(op.apply_q(&c).unwrap().max_abs() == 0.0);
        assert!(op.apply_q_star(&c).unwrap().max_abs() == 0.0);
        let kf = op.apply_k(&f).unwrap();
        assert_eq!(kf.get(0, 0), kf.get(0, 1));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let vm = VelocityMeasure::two_velocity();
        let op = ScatteringKernel::constant(1.0, 2).unwrap().at(&[0.0], &vm, &cell(3)).unwrap();
        assert!(op.apply_q(&PhaseField::zeros(4, 2)).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(ScatteringKernel::sinusoidal(1.0, 2).is_err());
        assert!(ScatteringKernel::table(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(ScatteringKernel::constant(1.0, 2)
            .unwrap()
            .with_x_dependence(XDependence::TanhScale { beta: 1.5 })
            .is_err());
    }

    #[test]
    fn hull_sampling_of_quasi_periodic_profile() {
        let vm = VelocityMeasure::two_velocity();
        let k = ScatteringKernel::quasi_periodic(0.2, 0.2, 2).unwrap();
        let basis = vec![vec![2.0 * PI], vec![2.0 * 2f64.sqrt() * PI]];
        let c = CellGrid::hull(basis, 8).unwrap();
        let op = k.at(&[0.0], &vm, &c).unwrap();
        let s = op.profile_samples();
        // theta = (0, 1/4)
        assert!((s[2] - (1.0 + 0.2 + 0.2 * (PI / 2.0).cos())).abs() < 1e-14);
        // Hull sampling of a mismatched module is refused.
        let sin = ScatteringKernel::sinusoidal(0.3, 2).unwrap();
        assert!(sin.at(&[0.0], &vm, &c).is_err());
    }

    #[test]
    fn mean_value_function_view() {
        let k = ScatteringKernel::sinusoidal(0.5, 2)
            .unwrap()
            .with_x_dependence(XDependence::TanhScale { beta: 0.3 })
            .unwrap();
        let u = k.mean_value_function(&[1.0], 0, 1, &cell(32)).unwrap();
        assert!((u.mean_value() - (1.0 + 0.3 * 1f64.tanh())).abs() < 1e-14);
        let a = ScatteringKernel::asymptotic(0.5, 0.4, 0.1, 2).unwrap();
        let ua = a.mean_value_function(&[0.0], 0, 0, &cell(32)).unwrap();
        assert!((ua.mean_value() - 1.0).abs() < 1e-14);
        assert!((ua.evaluate(&[0.0]) - 1.4).abs() < 1e-12);
        assert!((a.evaluate(&[0.0], &[0.0], 0, 0) - 1.4).abs() < 1e-14);
    }
}
