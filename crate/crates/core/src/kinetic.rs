//! Direct solver for `eps d_t f + a(v) . grad_x f = (1/eps) Q_eps f` in one
//! space dimension with periodic boundary conditions.
//!
//! Strang splitting `C(dt/2) T(dt) C(dt/2)`: transport is upwind (an exact
//! shift at unit Courant number) or semi-Lagrangian, collisions use a per-node
//! `K x K` theta-scheme.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{ScatteringKernel, SDB_TOL};
use crate::error::{Error, Result};
use crate::phase_space::{BoundaryCondition, MacroGrid, VelocityMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticTransport {
    #[default]
    Upwind,
    SemiLagrangian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticOptions {
    pub c_cfl: f64,
    /// Collision theta-scheme weight; `1/2` is Crank-Nicolson, `1` implicit Euler.
    pub theta: f64,
    pub transport: KineticTransport,
    pub checkpoints: Vec<f64>,
    /// Lets a kernel that violates semi-detailed balance through (negative controls only).
    pub allow_sdb_violation: bool,
}

impl Default for KineticOptions {
    fn default() -> Self {
        Self {
            c_cfl: 1.0,
            theta: 0.5,
            transport: KineticTransport::Upwind,
            checkpoints: vec![],
            allow_sdb_violation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub t: f64,
    /// `f[k * n_x + j]`.
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticRun {
    pub eps: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub grid: MacroGrid,
    pub n_vel: usize,
    pub states: Vec<KineticState>,
    pub l2: Vec<f64>,
    /// Set when the L2 norm exceeded its initial value by more than `1e-8` relative.
    pub l2_flag: bool,
    pub max_mass_drift: f64,
}

impl KineticRun {
    pub fn final_state(&self) -> &KineticState {
        self.states.last().expect("initial state recorded")
    }
}

/// `rho(x_j) = int f(x_j, v) dmu(v)`.
pub fn density(state: &KineticState, vm: &VelocityMeasure) -> Vec<f64> {
    let nx = state.f.len() / vm.len();
    (0..nx)
        .map(|j| (0..vm.len()).map(|k| vm.weights()[k] * state.f[k * nx + j]).sum())
        .collect()
}

/// Discrete `L^2(dx dmu)` norm.
pub fn l2_monitor(state: &KineticState, vm: &VelocityMeasure, h: f64) -> f64 {
    let nx = state.f.len() / vm.len();
    let s: f64 = (0..vm.len())
        .map(|k| vm.weights()[k] * state.f[k * nx..(k + 1) * nx].iter().map(|v| v * v).sum::<f64>())
        .sum();
    (h * s).sqrt()
}

/// `sum_k mu_k (g_k / F_k - mean)^2` with the `mu`-weighted mean of `g / F`.
pub fn angular_variance(g: &[f64], equilibrium: &[f64], mu: &[f64]) -> f64 {
    let mass: f64 = mu.iter().sum();
    let ratio: Vec<f64> = g.iter().zip(equilibrium).map(|(a, b)| a / b).collect();
    let mean = ratio.iter().zip(mu).map(|(r, w)| r * w).sum::<f64>() / mass;
    ratio.iter().zip(mu).map(|(r, w)| w * (r - mean).powi(2)).sum()
}

/// `K x K` collision matrix `Q(x, y)` (rows v, columns w).
pub fn collision_matrix(kernel: &ScatteringKernel, vm: &VelocityMeasure, x: &[f64], y: &[f64]) -> DMatrix<f64> {
    let kk = vm.len();
    let mu = vm.weights();
    let sig = DMatrix::from_fn(kk, kk, |v, w| kernel.evaluate(x, y, v, w));
    let mut q = DMatrix::zeros(kk, kk);
    for v in 0..kk {
        let absorption: f64 = (0..kk).map(|w| mu[w] * sig[(w, v)]).sum();
        for w in 0..kk {
            q[(v, w)] = mu[w] * sig[(v, w)];
        }
        q[(v, v)] -= absorption;
    }
    q
}

/// `(I - theta c Q)^{-1} (I + (1 - theta) c Q)` with column weights corrected so
/// that `mu^T M = mu^T` holds to the last bit the diagonal allows.
fn theta_matrix(q: &DMatrix<f64>, c: f64, theta: f64, mu: &[f64]) -> Result<DMatrix<f64>> {
    let kk = q.nrows();
    let id = DMatrix::<f64>::identity(kk, kk);
    let lhs = &id - q * (theta * c);
    let rhs = &id + q * ((1.0 - theta) * c);
    let mut m = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("collision system".into()))?;
    for w in 0..kk {
        let col: f64 = (0..kk).map(|v| mu[v] * m[(v, w)]).sum();
        m[(w, w)] += (mu[w] - col) / mu[w];
    }
    Ok(m)
}

fn sdb_gap(q: &DMatrix<f64>, kernel: &ScatteringKernel, vm: &VelocityMeasure, x: &[f64], y: &[f64]) -> (f64, f64) {
    let _ = q;
    let kk = vm.len();
    let mu = vm.weights();
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for v in 0..kk {
        let out: f64 = (0..kk).map(|w| mu[w] * kernel.evaluate(x, y, v, w)).sum();
        let inn: f64 = (0..kk).map(|w| mu[w] * kernel.evaluate(x, y, w, v)).sum();
        gap = gap.max((out - inn).abs());
        scale = scale.max(out.abs().max(inn.abs()));
    }
    (gap, scale)
}

pub fn solve_kinetic<F0>(
    kernel: &ScatteringKernel,
    vm: &VelocityMeasure,
    grid: &MacroGrid,
    eps: f64,
    t_final: f64,
    f0: F0,
    opts: &KineticOptions,
) -> Result<KineticRun>
where
    F0: Fn(&[f64], usize) -> f64,
{
    if grid.dim() != 1 || vm.dim() != 1 {
        return Err(Error::InvalidInput("kinetic reference is one-dimensional".into()));
    }
    if grid.bc() != BoundaryCondition::Periodic {
        return Err(Error::InvalidInput("kinetic reference supports periodic boundaries only".into()));
    }
    if !(eps > 0.0) || !(t_final > 0.0) {
        return Err(Error::InvalidInput("eps and T must be positive".into()));
    }
    if !(opts.c_cfl > 0.0) {
        return Err(Error::InvalidInput("c_cfl must be positive".into()));
    }
    if opts.transport == KineticTransport::Upwind && opts.c_cfl > 1.0 + 1e-12 {
        return Err(Error::Stability(format!("upwind transport needs c_cfl <= 1, got {}", opts.c_cfl)));
    }
    if !(0.5..=1.0).contains(&opts.theta) {
        return Err(Error::InvalidInput(format!("collision theta {} not in [1/2, 1]", opts.theta)));
    }
    let nx = grid.n();
    let kk = vm.len();
    let h = grid.spacing();
    let amax = vm.max_speed();
    let dt_cfl = if amax > 0.0 { opts.c_cfl * eps * h / amax } else { t_final };
    let n_steps = ((t_final / dt_cfl) - 1e-9).ceil().max(1.0) as usize;
    let dt = t_final / n_steps as f64;
    let c_half = 0.5 * dt / (eps * eps);

    let xs = grid.points();
    let mu = vm.weights().to_vec();
    let uniform = kernel.x_dependence().is_trivial() && matches!(kernel.profile(), crate::collision::Profile::Constant);
    let build = |x: &[f64]| -> Result<DMatrix<f64>> {
        let y: Vec<f64> = x.iter().map(|v| v / eps).collect();
        let q = collision_matrix(kernel, vm, x, &y);
        if !opts.allow_sdb_violation {
            let (gap, scale) = sdb_gap(&q, kernel, vm, x, &y);
            if gap > SDB_TOL * scale {
                return Err(Error::SemiDetailedBalance {
                    gap: gap / scale,
                    tol: SDB_TOL,
                });
            }
        }
        theta_matrix(&q, c_half, opts.theta, &mu)
    };
    let mats: Vec<DMatrix<f64>> = if uniform {
        let m = build(&xs[0])?;
        vec![m; nx]
    } else {
        xs.par_iter().map(|x| build(x)).collect::<Result<Vec<_>>>()?
    };

    let mut f = vec![0.0; kk * nx];
    for k in 0..kk {
        for j in 0..nx {
            f[k * nx + j] = f0(&xs[j], k);
        }
    }
    let mass = |f: &[f64]| -> f64 {
        (0..kk).map(|k| mu[k] * f[k * nx..(k + 1) * nx].iter().sum::<f64>()).sum::<f64>() * h
    };
    let initial_mass = mass(&f);
    let mut marks: Vec<usize> = opts
        .checkpoints
        .iter()
        .filter(|t| **t > 0.0 && **t <= t_final * (1.0 + 1e-12))
        .map(|t| ((t / dt).round() as usize).clamp(1, n_steps))
        .collect();
    marks.push(n_steps);
    marks.sort_unstable();
    marks.dedup();

    let shifts: Vec<f64> = (0..kk).map(|k| vm.a(k)[0] * dt / (eps * h)).collect();
    let mut states = vec![KineticState { t: 0.0, f: f.clone() }];
    let l20 = l2_monitor(&states[0], vm, h);
    let mut l2 = vec![l20];
    let mut l2_flag = false;
    let mut max_drift: f64 = 0.0;
    let mut scratch = vec![0.0; kk * nx];
    let mut next = 0;
    for step in 1..=n_steps {
        collide(&mats, &mut f, nx, kk);
        transport(&f, &mut scratch, &shifts, nx, opts.transport);
        std::mem::swap(&mut f, &mut scratch);
        collide(&mats, &mut f, nx, kk);
        let m = mass(&f);
        max_drift = max_drift.max((m - initial_mass).abs() / initial_mass.abs().max(f64::MIN_POSITIVE));
        if next < marks.len() && marks[next] == step {
            let st = KineticState {
                t: step as f64 * dt,
                f: f.clone(),
            };
            let norm = l2_monitor(&st, vm, h);
            if norm > l20 * (1.0 + 1e-8) {
                if !l2_flag {
                    log::warn!("kinetic L2 norm grew from {l20:.6e} to {norm:.6e} at t = {:.4}", st.t);
                }
                l2_flag = true;
            }
            l2.push(norm);
            states.push(st);
            next += 1;
        }
    }
    Ok(KineticRun {
        eps,
        dt,
        n_steps,
        grid: grid.clone(),
        n_vel: kk,
        states,
        l2,
        l2_flag,
        max_mass_drift: max_drift,
    })
}

fn collide(mats: &[DMatrix<f64>], f: &mut [f64], nx: usize, kk: usize) {
    let apply = |j: usize, f: &[f64]| -> Vec<f64> {
        let m = &mats[j];
        (0..kk)
            .map(|v| (0..kk).map(|w| m[(v, w)] * f[w * nx + j]).sum())
            .collect()
    };
    let cols: Vec<Vec<f64>> = if nx * kk * kk >= 1 << 16 {
        let fr: &[f64] = f;
        (0..nx).into_par_iter().map(|j| apply(j, fr)).collect()
    } else {
        (0..nx).map(|j| apply(j, f)).collect()
    };
    for (j, c) in cols.into_iter().enumerate() {
        for v in 0..kk {
            f[v * nx + j] = c[v];
        }
    }
}

/// `f_k(x) <- f_k(x - a_k dt / eps)` on the periodic grid; `shift` in cells.
fn transport(f: &[f64], out: &mut [f64], shifts: &[f64], nx: usize, scheme: KineticTransport) {
    for (k, &s) in shifts.iter().enumerate() {
        let src = &f[k * nx..(k + 1) * nx];
        let dst = &mut out[k * nx..(k + 1) * nx];
        match scheme {
            KineticTransport::Upwind => {
                let nu = s.abs();
                for j in 0..nx {
                    let up = if s > 0.0 { (j + nx - 1) % nx } else { (j + 1) % nx };
                    dst[j] = (1.0 - nu) * src[j] + nu * src[up];
                }
            }
            KineticTransport::SemiLagrangian => {
                let m = s.floor();
                let frac = s - m;
                let m = m as i64;
                let n = nx as i64;
                for j in 0..nx {
                    let a = (j as i64 - m).rem_euclid(n) as usize;
                    let b = (j as i64 - m - 1).rem_euclid(n) as usize;
                    dst[j] = (1.0 - frac) * src[a] + frac * src[b];
                }
            }
        }
    }
}
