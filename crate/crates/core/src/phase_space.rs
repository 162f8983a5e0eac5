//! Velocity quadrature and the cell and macro grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete velocity measure: nodes `v_k`, weights `mu_k > 0` and the sampled
/// velocity field `a(v_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityMeasure {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    field: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct H1Report {
    /// Smallest `max_k |a_k . xi|` over probe directions `xi`.
    pub min_projection: f64,
    pub degenerate_directions: Vec<Vec<f64>>,
    pub passed: bool,
}

impl VelocityMeasure {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>, field: Vec<Vec<f64>>) -> Result<Self> {
        let k = nodes.len();
        if k < 2 {
            return Err(Error::InvalidInput(format!("velocity set needs at least 2 nodes, got {k}")));
        }
        if weights.len() != k {
            return Err(Error::ShapeMismatch {
                expected: k,
                got: weights.len(),
            });
        }
        if field.len() != k {
            return Err(Error::ShapeMismatch {
                expected: k,
                got: field.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!("velocity weight {w} is not positive")));
        }
        let d = field[0].len();
        if d == 0 || field.iter().any(|a| a.len() != d) {
            return Err(Error::InvalidInput("velocity field samples must share a nonzero dimension".into()));
        }
        if field.iter().flatten().chain(nodes.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite velocity sample".into()));
        }
        Ok(Self {
            nodes,
            weights,
            field,
        })
    }

    /// Nodes with `a(v) = v`.
    pub fn identity_field(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let field = nodes.clone();
        Self::new(nodes, weights, field)
    }

    /// `V = {-1, +1}`, `mu = {1, 1}`, `a(v) = v`.
    pub fn two_velocity() -> Self {
        Self::identity_field(vec![vec![-1.0], vec![1.0]], vec![1.0, 1.0]).expect("valid set")
    }

    /// `n` equispaced unit vectors with weights `2 pi / n`.
    pub fn circle(n: usize) -> Result<Self> {
        let nodes: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let w = 2.0 * std::f64::consts::PI / n as f64;
        Self::identity_field(nodes, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Spatial dimension of `a(v)`.
    pub fn dim(&self) -> usize {
        self.field[0].len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn field(&self) -> &[Vec<f64>] {
        &self.field
    }

    pub fn a(&self, k: usize) -> &[f64] {
        &self.field[k]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.field
            .iter()
            .map(|a| a.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `sum_k mu_k g_k`.
    pub fn integrate_v(&self, g: &[f64]) -> Result<f64> {
        if g.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: g.len(),
            });
        }
        Ok(self.weights.iter().zip(g).map(|(w, x)| w * x).sum())
    }

    /// Discrete surrogate of the transport non-degeneracy hypothesis: every probe
    /// direction must be seen by at least one velocity. Warns, never fails.
    pub fn validate_h1(&self) -> H1Report {
        let probes = probe_directions(self.dim());
        let mut min_projection = f64::INFINITY;
        let mut degenerate = Vec::new();
        for xi in probes {
            let best = self
                .field
                .iter()
                .map(|a| a.iter().zip(&xi).map(|(x, y)| x * y).sum::<f64>().abs())
                .fold(0.0, f64::max);
            min_projection = min_projection.min(best);
            if best <= 1e-14 {
                degenerate.push(xi);
            }
        }
        let passed = degenerate.is_empty();
        if !passed {
            log::warn!(
                "velocity field is degenerate along {} probe direction(s)",
                degenerate.len()
            );
        }
        H1Report {
            min_projection,
            degenerate_directions: degenerate,
            passed,
        }
    }
}

fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    match d {
        1 => vec![vec![1.0]],
        2 => (0..64)
            .map(|k| {
                let t = PI * k as f64 / 64.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci sphere (upper hemisphere suffices for |a . xi|).
            let n = 128;
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut out: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let z = 1.0 - (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    let mut v = vec![0.0; d];
                    v[0] = r * t.cos();
                    v[1] = r * t.sin();
                    v[2] = z;
                    v
                })
                .collect();
            for axis in 0..d {
                let mut e = vec![0.0; d];
                e[axis] = 1.0;
                out.push(e);
            }
            out
        }
    }
}

/// Geometry of the discrete cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellGeometry {
    /// `Y = [0, period)^d`; grid axes are the physical axes.
    Periodic { period: f64 },
    /// Hull torus of a quasi-periodic frequency module: `theta_i = omega_i . y / (2 pi)`.
    Hull { basis: Vec<Vec<f64>> },
}

/// Uniform grid on the unit torus `[0,1)^r` with `n` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    torus_dim: usize,
    n: usize,
    geometry: CellGeometry,
}

impl CellGrid {
    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        Self::periodic_with_period(dim, n, 1.0)
    }

    pub fn periodic_with_period(dim: usize, n: usize, period: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("cell dimension {dim} not in 1..=3")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!("cell period {period} must be positive")));
        }
        Self::checked(dim, n, CellGeometry::Periodic { period })
    }

    pub fn hull(basis: Vec<Vec<f64>>, n: usize) -> Result<Self> {
        if basis.is_empty() || basis[0].is_empty() || basis.iter().any(|b| b.len() != basis[0].len()) {
            return Err(Error::InvalidInput("hull basis must be nonempty with equal lengths".into()));
        }
        let r = basis.len();
        if r > 3 {
            return Err(Error::InvalidInput(format!("hull torus dimension {r} exceeds 3")));
        }
        Self::checked(r, n, CellGeometry::Hull { basis })
    }

    fn checked(torus_dim: usize, n: usize, geometry: CellGeometry) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("cell grid needs n_y >= 2, got {n}")));
        }
        Ok(Self {
            torus_dim,
            n,
            geometry,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn torus_dim(&self) -> usize {
        self.torus_dim
    }

    /// Dimension of the physical fast variable `y`.
    pub fn phys_dim(&self) -> usize {
        match &self.geometry {
            CellGeometry::Periodic { .. } => self.torus_dim,
            CellGeometry::Hull { basis } => basis[0].len(),
        }
    }

    pub fn geometry(&self) -> &CellGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.torus_dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Torus coordinates of node `flat` (row-major).
    pub fn theta(&self, flat: usize) -> Vec<f64> {
        let mut t = vec![0.0; self.torus_dim];
        let mut rem = flat;
        for axis in (0..self.torus_dim).rev() {
            t[axis] = (rem % self.n) as f64 / self.n as f64;
            rem /= self.n;
        }
        t
    }

    /// A physical point mapping to node `flat` (only meaningful for periodic cells).
    pub fn physical_point(&self, flat: usize) -> Option<Vec<f64>> {
        match &self.geometry {
            CellGeometry::Periodic { period } => {
                Some(self.theta(flat).into_iter().map(|t| t * period).collect())
            }
            CellGeometry::Hull { .. } => None,
        }
    }

    /// Coefficients `c` with `a . grad_y = sum_i c_i d/dtheta_i`.
    pub fn transport_speed(&self, a: &[f64]) -> Vec<f64> {
        match &self.geometry {
            CellGeometry::Periodic { period } => a.iter().map(|ai| ai / period).collect(),
            CellGeometry::Hull { basis } => basis
                .iter()
                .map(|w| {
                    w.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() / (2.0 * std::f64::consts::PI)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    #[default]
    Periodic,
    NoFlux,
}

/// Cell-centred grid on `[-L, L]^d` with `n` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroGrid {
    dim: usize,
    half_width: f64,
    n: usize,
    bc: BoundaryCondition,
}

impl MacroGrid {
    pub fn new(dim: usize, half_width: f64, n: usize, bc: BoundaryCondition) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("macro dimension {dim} not in 1..=2")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidInput(format!("macro half-width {half_width} must be positive")));
        }
        if n < 8 {
            return Err(Error::InvalidInput(format!("macro grid needs n_x >= 8, got {n}")));
        }
        Ok(Self {
            dim,
            half_width,
            n,
            bc,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            x[axis] = self.coordinate(rem % self.n);
            rem /= self.n;
        }
        x
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    /// `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
}
