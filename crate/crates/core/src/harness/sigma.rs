//! Weak sigma-convergence functionals: pairs kinetic checkpoints with
//! oscillating test functions `phi(x) m(x / eps) c(v)` and compares against
//! `int int M(rho_0 F psi) dmu dx dt`. Trapezoid in `t`, so first order in the
//! checkpoint spacing.

use std::f64::consts::PI;

use super::pipeline::Setup;
use super::sweep::SweepRuns;
use super::tables::{num, Table};
use crate::collision::Profile;
use crate::effective::CellSolution;
use crate::error::{Error, Result};
use crate::phase_space::CellGeometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oscillation {
    One,
    Cos(f64),
    Sin(f64),
}

impl Oscillation {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Oscillation::One => 1.0,
            Oscillation::Cos(w) => (w * y).cos(),
            Oscillation::Sin(w) => (w * y).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub m: Oscillation,
    /// `phi(x) = exp(-|x - x_c|^2)`, `x_c = (1/2, 0, ..)`, when set; `1` otherwise.
    /// Off-centre so that fluxes odd in `x` do not cancel against it.
    pub localized: bool,
}

impl TestFunction {
    pub fn phi(&self, x: &[f64]) -> f64 {
        if self.localized {
            let r2: f64 = x.iter().enumerate().map(|(i, v)| (v - if i == 0 { 0.5 } else { 0.0 }).powi(2)).sum();
            (-r2).exp()
        } else {
            1.0
        }
    }
}

/// `1`, `phi`, `phi cos(2 pi y)`, `phi sin(2 pi y)`, plus `phi cos(2 sqrt2 pi y)`
/// for quasi-periodic kernels.
pub fn catalogue(profile: &Profile) -> Vec<TestFunction> {
    let tf = |name: &str, m, localized| TestFunction {
        name: name.into(),
        m,
        localized,
    };
    let w = 2.0 * PI;
    let mut c = vec![
        tf("one", Oscillation::One, false),
        tf("phi", Oscillation::One, true),
        tf("phi_cos", Oscillation::Cos(w), true),
        tf("phi_sin", Oscillation::Sin(w), true),
    ];
    if matches!(profile, Profile::QuasiPeriodic { .. }) {
        c.push(tf("phi_cos_sqrt2", Oscillation::Cos(w * 2f64.sqrt()), true));
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRow {
    pub psi: String,
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `M_y(F(., v_k) m)` for every velocity.
fn mean_against(sol: &CellSolution, setup: &Setup, m: Oscillation) -> Vec<f64> {
    let f = &sol.equilibrium.f;
    let n = f.n_cell();
    let weight: Vec<f64> = match setup.cell.geometry() {
        CellGeometry::Periodic { .. } => (0..n)
            .map(|j| m.eval(setup.cell.physical_point(j).expect("periodic cell")[0]))
            .collect(),
        CellGeometry::Hull { basis } => {
            let (w, is_cos) = match m {
                Oscillation::One => (0.0, true),
                Oscillation::Cos(w) => (w, true),
                Oscillation::Sin(w) => (w, false),
            };
            match basis.iter().position(|b| (b[0] - w).abs() <= 1e-12 * w.abs().max(1.0)) {
                _ if w == 0.0 => vec![1.0; n],
                Some(axis) => (0..n)
                    .map(|j| {
                        let t = 2.0 * PI * setup.cell.theta(j)[axis];
                        if is_cos {
                            t.cos()
                        } else {
                            t.sin()
                        }
                    })
                    .collect(),
                // Frequencies outside the module pair to zero.
                None => vec![0.0; n],
            }
        }
    };
    (0..f.n_vel())
        .map(|k| f.velocity_slice(k).iter().zip(&weight).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

pub fn sigma_test(runs: &SweepRuns, setup: &Setup, sols: &[CellSolution]) -> Result<Vec<SigmaRow>> {
    let vm = &setup.vm;
    let mu = vm.weights();
    let grid = &setup.grid;
    let h = grid.cell_volume();
    let pts = grid.points();
    let nx = grid.len();
    let mut rows = vec![];
    for psi in catalogue(setup.kernel.profile()) {
        let means: Vec<Vec<f64>> = sols.iter().map(|s| mean_against(s, setup, psi.m)).collect();
        let phi: Vec<f64> = pts.iter().map(|x| psi.phi(x)).collect();
        for case in &runs.cases {
            let eps = case.eps;
            if case.run.states.len() < 2 || case.macro_solution.times.len() < 2 {
                return Err(Error::InvalidInput(format!("sigma functional at eps = {eps} needs at least two checkpoints")));
            }
            let osc: Vec<f64> = pts.iter().map(|x| phi_m(&psi, x, eps)).collect();
            let lhs_t: Vec<f64> = case
                .run
                .states
                .iter()
                .map(|st| {
                    (0..nx)
                        .map(|j| osc[j] * (0..vm.len()).map(|k| mu[k] * st.f[k * nx + j]).sum::<f64>())
                        .sum::<f64>()
                        * h
                })
                .collect();
            let times: Vec<f64> = case.run.states.iter().map(|s| s.t).collect();
            let lhs = trapezoid(&times, &lhs_t);
            let rhs_t: Vec<f64> = case
                .macro_solution
                .slices
                .iter()
                .map(|rho| {
                    (0..nx)
                        .map(|j| {
                            let m = &means[if means.len() == 1 { 0 } else { j }];
                            phi[j] * rho[j] * (0..vm.len()).map(|k| mu[k] * m[k]).sum::<f64>()
                        })
                        .sum::<f64>()
                        * h
                })
                .collect();
            let rhs = trapezoid(&case.macro_solution.times, &rhs_t);
            rows.push(SigmaRow {
                psi: psi.name.clone(),
                eps,
                lhs,
                rhs,
                residual: (lhs - rhs).abs(),
            });
        }
    }
    Ok(rows)
}

fn phi_m(psi: &TestFunction, x: &[f64], eps: f64) -> f64 {
    psi.phi(x) * psi.m.eval(x[0] / eps)
}

pub fn sigma_table(rows: &[SigmaRow]) -> Table {
    let mut t = Table::new(&["psi", "eps", "lhs", "rhs", "residual"]);
    for r in rows {
        t.push(vec![r.psi.clone(), num(r.eps), num(r.lhs), num(r.rhs), num(r.residual)]);
    }
    t
}
