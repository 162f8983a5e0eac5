//! Conservative finite-volume integration of
//! `d_t rho = div(D grad rho + U rho)` on a truncated macro box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, GmresOptions};
use crate::phase_space::{BoundaryCondition, MacroGrid, VelocityMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    #[default]
    Central,
    Upwind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroOptions {
    /// `0` explicit, `1/2` Crank-Nicolson, `1` implicit Euler.
    pub theta: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Output times; snapped to the nearest step.
    pub checkpoints: Vec<f64>,
    pub drift: DriftScheme,
}

impl Default for MacroOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            dt: 1e-3,
            t_final: 0.5,
            checkpoints: vec![],
            drift: DriftScheme::Central,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSolution {
    pub grid: MacroGrid,
    pub dt: f64,
    pub times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
    pub initial_mass: f64,
    pub max_mass_drift: f64,
}

impl MacroSolution {
    pub fn final_slice(&self) -> &[f64] {
        self.slices.last().expect("at least the initial slice")
    }
}

/// `rho(0, x_j) = int f0(x_j, v) dmu(v)`.
pub fn initial_density<F: Fn(&[f64], usize) -> f64>(f0: F, vm: &VelocityMeasure, grid: &MacroGrid) -> Vec<f64> {
    let mut warned = false;
    grid.points()
        .iter()
        .map(|x| {
            let vals: Vec<f64> = (0..vm.len()).map(|k| f0(x, k)).collect();
            if !warned && vals.iter().any(|v| *v <= 0.0) {
                log::warn!("initial distribution has a nonpositive sample at x = {x:?}");
                warned = true;
            }
            vm.integrate_v(&vals).expect("length matches")
        })
        .collect()
}

/// Discrete divergence-form operator `L rho = div(D grad rho + U rho)`.
#[derive(Debug, Clone)]
pub struct DriftDiffusion {
    grid: MacroGrid,
    /// Per cell.
    d: Vec<Vec<Vec<f64>>>,
    u: Vec<Vec<f64>>,
    drift: DriftScheme,
}

impl DriftDiffusion {
    pub fn new(grid: &MacroGrid, d: Vec<Vec<Vec<f64>>>, u: Vec<Vec<f64>>, drift: DriftScheme) -> Result<Self> {
        let len = grid.len();
        if d.len() != len || u.len() != len {
            return Err(Error::ShapeMismatch {
                expected: len,
                got: d.len().min(u.len()),
            });
        }
        let dim = grid.dim();
        if d.iter().any(|m| m.len() != dim || m.iter().any(|r| r.len() != dim)) || u.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput(format!("coefficients must be {dim}-dimensional")));
        }
        Ok(Self {
            grid: grid.clone(),
            d,
            u,
            drift,
        })
    }

    pub fn uniform(grid: &MacroGrid, d: Vec<Vec<f64>>, u: Vec<f64>, drift: DriftScheme) -> Result<Self> {
        let len = grid.len();
        Self::new(grid, vec![d; len], vec![u; len], drift)
    }

    pub fn max_norm_d(&self) -> f64 {
        self.d
            .iter()
            .map(|m| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn neighbour(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let n = self.grid.n();
        let dim = self.grid.dim();
        let stride = n.pow((dim - 1 - axis) as u32);
        let i = (flat / stride) % n;
        let base = flat - i * stride;
        let j = i as isize + offset;
        if j >= 0 && (j as usize) < n {
            Some(base + j as usize * stride)
        } else {
            match self.grid.bc() {
                BoundaryCondition::Periodic => Some(base + j.rem_euclid(n as isize) as usize * stride),
                BoundaryCondition::NoFlux => None,
            }
        }
    }

    /// Flux through the face between `flat` and its `+axis` neighbour `up`.
    fn face_flux(&self, rho: &[f64], flat: usize, up: usize, axis: usize) -> f64 {
        let h = self.grid.spacing();
        let dim = self.grid.dim();
        let mut flux = 0.0;
        for l in 0..dim {
            let dl = 0.5 * (self.d[flat][axis][l] + self.d[up][axis][l]);
            if dl == 0.0 {
                continue;
            }
            let grad = if l == axis {
                (rho[up] - rho[flat]) / h
            } else {
                // Average of the transverse centred differences on both sides of the face.
                let side = |c: usize| match (self.neighbour(c, l, 1), self.neighbour(c, l, -1)) {
                    (Some(p), Some(m)) => (rho[p] - rho[m]) / (2.0 * h),
                    (Some(p), None) => (rho[p] - rho[c]) / h,
                    (None, Some(m)) => (rho[c] - rho[m]) / h,
                    (None, None) => 0.0,
                };
                0.5 * (side(flat) + side(up))
            };
            flux += dl * grad;
        }
        let uf = 0.5 * (self.u[flat][axis] + self.u[up][axis]);
        flux += match self.drift {
            DriftScheme::Central => uf * 0.5 * (rho[flat] + rho[up]),
            // Material moves with velocity -U.
            DriftScheme::Upwind => {
                if uf > 0.0 {
                    uf * rho[up]
                } else {
                    uf * rho[flat]
                }
            }
        };
        flux
    }

    pub fn apply(&self, rho: &[f64], out: &mut [f64]) {
        let h = self.grid.spacing();
        out.iter_mut().for_each(|o| *o = 0.0);
        for axis in 0..self.grid.dim() {
            for flat in 0..rho.len() {
                if let Some(up) = self.neighbour(flat, axis, 1) {
                    let f = self.face_flux(rho, flat, up, axis) / h;
                    out[flat] += f;
                    out[up] -= f;
                }
            }
        }
    }

    /// Tridiagonal (1-D) coefficients `(lower, diag, upper)` of `L`, with the
    /// periodic wrap stored in `lower[0]` and `upper[n-1]`.
    fn tridiagonal(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut e = vec![0.0; n];
        for i in 0..n {
            let Some(up) = self.neighbour(i, 0, 1) else { continue };
            // Face flux is affine in (rho_i, rho_up): F = alpha rho_i + beta rho_up.
            e[i] = 1.0;
            let alpha = self.face_flux(&e, i, up, 0) / h;
            e[i] = 0.0;
            e[up] = 1.0;
            let beta = self.face_flux(&e, i, up, 0) / h;
            e[up] = 0.0;
            diag[i] += alpha;
            upper[i] += beta;
            lower[up] -= alpha;
            diag[up] -= beta;
        }
        (lower, diag, upper)
    }
}

/// Time integrator for a fixed operator and step.
pub struct MacroStepper {
    op: DriftDiffusion,
    theta: f64,
    dt: f64,
    tri: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl MacroStepper {
    pub fn new(op: DriftDiffusion, theta: f64, dt: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidInput(format!("theta {theta} not in [0, 1]")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        if theta < 0.5 {
            let h = op.grid.spacing();
            let limit = h * h / (2.0 * op.grid.dim() as f64 * op.max_norm_d().max(f64::MIN_POSITIVE));
            if dt > limit {
                return Err(Error::Stability(format!(
                    "explicit step dt = {dt:.3e} exceeds h^2/(2 d max|D|) = {limit:.3e}"
                )));
            }
        }
        let tri = if op.grid.dim() == 1 && theta > 0.0 {
            let (l, d, u) = op.tridiagonal();
            let s = theta * dt;
            Some((
                l.iter().map(|v| -s * v).collect(),
                d.iter().map(|v| 1.0 - s * v).collect(),
                u.iter().map(|v| -s * v).collect(),
            ))
        } else {
            None
        };
        Ok(Self { op, theta, dt, tri })
    }

    /// Solves `(I - theta dt L) z = b`.
    fn implicit_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if let Some((l, d, u)) = &self.tri {
            return Ok(match self.op.grid.bc() {
                BoundaryCondition::Periodic => linalg::solve_cyclic_tridiagonal(l, d, u, b),
                BoundaryCondition::NoFlux => linalg::solve_tridiagonal(l, d, u, b),
            });
        }
        let s = self.theta * self.dt;
        let n = b.len();
        // Jacobi preconditioner from the diagonal of L.
        let mut diag = vec![0.0; n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            self.op.apply(&e, &mut col);
            diag[i] = 1.0 - s * col[i];
            e[i] = 0.0;
        }
        let mut z = b.to_vec();
        let mut tmp = vec![0.0; n];
        let out = linalg::gmres(
            |x: &[f64], y: &mut [f64]| {
                self.op.apply(x, &mut tmp);
                for i in 0..n {
                    y[i] = x[i] - s * tmp[i];
                }
            },
            Some(|r: &[f64], zz: &mut [f64]| {
                for i in 0..n {
                    zz[i] = r[i] / diag[i];
                }
            }),
            b,
            &mut z,
            GmresOptions {
                tol: 1e-13,
                restart: 50,
                max_iter: 2000,
            },
        );
        if !out.converged && out.residual > 1e-11 {
            return Err(Error::Singular(format!(
                "implicit macro system residual {:.3e} after {} iterations",
                out.residual, out.iterations
            )));
        }
        Ok(z)
    }

    pub fn step(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let n = rho.len();
        let mut lr = vec![0.0; n];
        self.op.apply(rho, &mut lr);
        let explicit: Vec<f64> = (0..n).map(|i| rho[i] + (1.0 - self.theta) * self.dt * lr[i]).collect();
        if self.theta == 0.0 {
            return Ok(explicit);
        }
        // x = (I - s L)^{-1} b is computed as b + L z with (I - s L) z = s b, so the
        // update stays in divergence form and mass is conserved independently of
        // the linear-solve error.
        let s = self.theta * self.dt;
        let sb: Vec<f64> = explicit.iter().map(|v| s * v).collect();
        let z = self.implicit_solve(&sb)?;
        let mut lz = vec![0.0; n];
        self.op.apply(&z, &mut lz);
        Ok((0..n).map(|i| explicit[i] + lz[i]).collect())
    }
}

/// Integrates to `opts.t_final`, recording the initial slice and each checkpoint.
pub fn solve_macro(op: DriftDiffusion, rho0: &[f64], opts: &MacroOptions) -> Result<MacroSolution> {
    if rho0.len() != op.grid.len() {
        return Err(Error::ShapeMismatch {
            expected: op.grid.len(),
            got: rho0.len(),
        });
    }
    if !(opts.t_final > 0.0) {
        return Err(Error::InvalidInput("final time must be positive".into()));
    }
    let n_steps = ((opts.t_final / opts.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = opts.t_final / n_steps as f64;
    let grid = op.grid.clone();
    let stepper = MacroStepper::new(op, opts.theta, dt)?;
    let mut marks: Vec<usize> = opts
        .checkpoints
        .iter()
        .filter(|t| **t > 0.0 && **t <= opts.t_final * (1.0 + 1e-12))
        .map(|t| ((t / dt).round() as usize).clamp(1, n_steps))
        .collect();
    marks.push(n_steps);
    marks.sort_unstable();
    marks.dedup();
    let mass = |r: &[f64]| r.iter().sum::<f64>() * grid.cell_volume();
    let initial_mass = mass(rho0);
    let mut rho = rho0.to_vec();
    let mut times = vec![0.0];
    let mut slices = vec![rho.clone()];
    let mut max_drift: f64 = 0.0;
    let mut next = 0;
    for step in 1..=n_steps {
        rho = stepper.step(&rho)?;
        let m = mass(&rho);
        max_drift = max_drift.max((m - initial_mass).abs() / initial_mass.abs().max(f64::MIN_POSITIVE));
        if next < marks.len() && marks[next] == step {
            times.push(step as f64 * dt);
            slices.push(rho.clone());
            next += 1;
        }
    }
    Ok(MacroSolution {
        grid,
        dt,
        times,
        slices,
        initial_mass,
        max_mass_drift: max_drift,
    })
}

/// Relative discrete `L^2(dx)` distance.
pub fn relative_l2(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
