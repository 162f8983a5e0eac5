//! Cell problem at a fixed macro point: `P = a(v).grad_y - Q = A - K` with
//! `A = a.grad_y + Sigma`, its adjoint `P* = -a.grad_y - Q*`, the equilibrium
//! `F` (principal eigenvector of `K A^{-1}`) and the Fredholm-constrained
//! corrector solves.
//!
//! Discrete pairing: `<f, g> = sum_k mu_k (1/N) sum_j f_jk g_jk`. The discrete
//! `P*` is the exact adjoint of the discrete `P` under this pairing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionOperator, PhaseField, ScatteringKernel};
use crate::error::{Error, Result};
use crate::fft::TorusFft;
use crate::linalg::{self, GmresOptions};
use crate::phase_space::{CellGrid, VelocityMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Upwind,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigMethod {
    #[default]
    Power,
    ShiftedInverse,
}

/// Start vector of the power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerStart {
    /// `h_0 = 1`.
    #[default]
    Ones,
    /// `h_0 = A 1 = Sigma`, i.e. a velocity-uniform initial `F`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellOptions {
    pub scheme: Scheme,
    pub tol_eig: f64,
    pub tol_lin: f64,
    pub tol_compat: f64,
    pub max_iter: usize,
    pub eig_method: EigMethod,
    pub power_start: PowerStart,
    pub gmres_restart: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Upwind,
            tol_eig: 1e-12,
            tol_lin: 1e-10,
            tol_compat: 1e-10,
            max_iter: 100_000,
            eig_method: EigMethod::Power,
            power_start: PowerStart::Ones,
            gmres_restart: 120,
        }
    }
}

/// Inner solves (`A^{-1}`) run well below the outer tolerance.
const INNER_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
enum Transport {
    /// Flux-form first-order upwind; `speeds[k][axis] / h` per velocity.
    Upwind {
        prev: Vec<Vec<usize>>,
        next: Vec<Vec<usize>>,
    },
    Spectral {
        fft: TorusFft,
        /// `2 pi i c_k . m` per velocity, Nyquist zeroed.
        symbols: Vec<Vec<Complex64>>,
    },
}

#[derive(Debug, Clone)]
pub struct CellOperator {
    x: Vec<f64>,
    cell: CellGrid,
    vm: VelocityMeasure,
    coll: CollisionOperator,
    /// `c_k` with `a_k . grad_y = sum_i c_k[i] d/dtheta_i`.
    speeds: Vec<Vec<f64>>,
    sigma: PhaseField,
    sigma1: f64,
    transport: Transport,
    precond: Option<(TorusFft, Vec<Vec<Complex64>>)>,
    opts: CellOptions,
}

/// Output of [`CellOperator::equilibrium_f`].
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub lambda: f64,
    pub f: PhaseField,
    pub iterations: usize,
    /// Entries in `[-1e-12, 0]` lifted to zero-plus (spectral scheme only).
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: PhaseField,
    pub iterations: usize,
    /// `||P f - g|| / ||g||` measured on the returned solution.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ChiStar {
    pub chi: Vec<PhaseField>,
    /// Flux defect `b_j = int M(a_j F) dmu`.
    pub b: Vec<f64>,
    pub shifted: bool,
    /// `|int M(rhs_j F) dmu|` after the shift, per component.
    pub compatibility: Vec<f64>,
    pub iterations: usize,
}

impl CellOperator {
    pub fn assemble(
        x: &[f64],
        kernel: &ScatteringKernel,
        vm: &VelocityMeasure,
        cell: &CellGrid,
        opts: CellOptions,
    ) -> Result<Self> {
        let coll = kernel.at(x, vm, cell)?;
        let sdb = coll.check_sdb();
        if !sdb.passed {
            return Err(Error::SemiDetailedBalance {
                gap: sdb.relative_gap,
                tol: sdb.tol,
            });
        }
        Self::from_collision(x, coll, vm, cell, opts)
    }

    /// Assembly from an already sampled collision operator; semi-detailed
    /// balance is not re-checked here.
    pub fn from_collision(
        x: &[f64],
        coll: CollisionOperator,
        vm: &VelocityMeasure,
        cell: &CellGrid,
        opts: CellOptions,
    ) -> Result<Self> {
        if vm.dim() != cell.phys_dim() {
            return Err(Error::InvalidInput(format!(
                "velocity field dimension {} differs from cell dimension {}",
                vm.dim(),
                cell.phys_dim()
            )));
        }
        if coll.n_cell() != cell.len() || coll.n_vel() != vm.len() {
            return Err(Error::ShapeMismatch {
                expected: cell.len() * vm.len(),
                got: coll.n_cell() * coll.n_vel(),
            });
        }
        let sigma1 = coll.absorption_min();
        if !(sigma1 > 0.0) {
            return Err(Error::NonPositiveAbsorption(sigma1));
        }
        let sigma = coll.absorption();
        let speeds: Vec<Vec<f64>> = (0..vm.len()).map(|k| cell.transport_speed(vm.a(k))).collect();
        let r = cell.torus_dim();
        let n = cell.n();
        let nn = cell.len();
        let transport = match opts.scheme {
            Scheme::Upwind => {
                let mut prev = vec![vec![0; nn]; r];
                let mut next = vec![vec![0; nn]; r];
                for axis in 0..r {
                    let stride = n.pow((r - 1 - axis) as u32);
                    for j in 0..nn {
                        let i = (j / stride) % n;
                        let base = j - i * stride;
                        next[axis][j] = base + ((i + 1) % n) * stride;
                        prev[axis][j] = base + ((i + n - 1) % n) * stride;
                    }
                }
                Transport::Upwind { prev, next }
            }
            Scheme::Spectral => {
                let fft = TorusFft::new(r, n);
                let symbols = speeds
                    .iter()
                    .map(|c| {
                        (0..nn)
                            .map(|flat| {
                                let idx = fft.index(flat);
                                let mut s = 0.0;
                                for (axis, &i) in idx.iter().enumerate() {
                                    if !fft.is_nyquist(i) {
                                        s += 2.0 * std::f64::consts::PI * c[axis] * fft.wavenumber(i) as f64;
                                    }
                                }
                                Complex64::new(0.0, s)
                            })
                            .collect()
                    })
                    .collect();
                Transport::Spectral { fft, symbols }
            }
        };
        let mut op = Self {
            x: x.to_vec(),
            cell: cell.clone(),
            vm: vm.clone(),
            coll,
            speeds,
            sigma,
            sigma1,
            transport,
            precond: None,
            opts,
        };
        if !op.exact_inverse() {
            op.precond = Some(op.build_preconditioner());
        }
        Ok(op)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn cell(&self) -> &CellGrid {
        &self.cell
    }

    pub fn velocity(&self) -> &VelocityMeasure {
        &self.vm
    }

    pub fn collision(&self) -> &CollisionOperator {
        &self.coll
    }

    pub fn options(&self) -> &CellOptions {
        &self.opts
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn absorption(&self) -> &PhaseField {
        &self.sigma
    }

    pub fn n_cell(&self) -> usize {
        self.cell.len()
    }

    pub fn n_vel(&self) -> usize {
        self.vm.len()
    }

    pub fn len(&self) -> usize {
        self.n_cell() * self.n_vel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn exact_inverse(&self) -> bool {
        matches!(self.transport, Transport::Upwind { .. }) && self.cell.torus_dim() == 1
    }

    fn build_preconditioner(&self) -> (TorusFft, Vec<Vec<Complex64>>) {
        let fft = TorusFft::new(self.cell.torus_dim(), self.cell.n());
        let n = self.cell.n() as f64;
        let nn = self.n_cell();
        let symbols = (0..self.n_vel())
            .map(|k| {
                let s = self.sigma.velocity_slice(k);
                let smax = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
                let sbar = 0.5 * (smax + smin);
                (0..nn)
                    .map(|flat| {
                        let idx = fft.index(flat);
                        let mut sym = Complex64::new(sbar, 0.0);
                        for (axis, &i) in idx.iter().enumerate() {
                            let c = self.speeds[k][axis];
                            match &self.transport {
                                Transport::Upwind { .. } => {
                                    let ph = 2.0 * std::f64::consts::PI * i as f64 / n;
                                    let z = if c > 0.0 {
                                        Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -ph)
                                    } else {
                                        Complex64::from_polar(1.0, ph) - Complex64::new(1.0, 0.0)
                                    };
                                    sym += z * (c * n);
                                }
                                Transport::Spectral { .. } => {
                                    if !fft.is_nyquist(i) {
                                        sym += Complex64::new(
                                            0.0,
                                            2.0 * std::f64::consts::PI * c * fft.wavenumber(i) as f64,
                                        );
                                    }
                                }
                            }
                        }
                        sym
                    })
                    .collect()
            })
            .collect();
        (fft, symbols)
    }

    /// Transport `T` (or `T^T`) on velocity slice `k`.
    fn transport_slice(&self, k: usize, f: &[f64], out: &mut [f64], adjoint: bool) {
        match &self.transport {
            Transport::Upwind { prev, next } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let n = self.cell.n() as f64;
                for (axis, &c) in self.speeds[k].iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let alpha = c.abs() * n;
                    // c > 0: (T f)_j = alpha (f_j - f_{j-1}); c < 0 mirrors it.
                    // The transpose swaps the neighbour.
                    let nb = if (c > 0.0) != adjoint { &prev[axis] } else { &next[axis] };
                    for j in 0..f.len() {
                        out[j] += alpha * (f[j] - f[nb[j]]);
                    }
                }
            }
            Transport::Spectral { fft, symbols } => {
                let mut data = fft.forward_real(f);
                for (d, s) in data.iter_mut().zip(&symbols[k]) {
                    *d *= if adjoint { s.conj() } else { *s };
                }
                out.copy_from_slice(&fft.inverse_real(data));
            }
        }
    }

    fn apply_a_slice(&self, k: usize, f: &[f64], out: &mut [f64], adjoint: bool) {
        self.transport_slice(k, f, out, adjoint);
        let s = self.sigma.velocity_slice(k);
        for j in 0..f.len() {
            out[j] += s[j] * f[j];
        }
    }

    fn check(&self, f: &PhaseField) -> Result<()> {
        if f.n_cell() != self.n_cell() || f.n_vel() != self.n_vel() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: f.values().len(),
            });
        }
        Ok(())
    }

    fn apply_a_raw(&self, f: &[f64], out: &mut [f64], adjoint: bool) {
        let nn = self.n_cell();
        for k in 0..self.n_vel() {
            self.apply_a_slice(k, &f[k * nn..(k + 1) * nn], &mut out[k * nn..(k + 1) * nn], adjoint);
        }
    }

    /// `P f = A f - K f` (or `P* f = A* f - K* f`) on raw storage.
    fn apply_p_raw(&self, f: &[f64], out: &mut [f64], adjoint: bool) {
        self.apply_a_raw(f, out, adjoint);
        let mut kf = vec![0.0; f.len()];
        self.coll.gain_into(f, &mut kf, adjoint);
        linalg::axpy(-1.0, &kf, out);
    }

    pub fn apply_a(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.apply_a_raw(f.values(), out.values_mut(), false);
        Ok(out)
    }

    pub fn apply_a_star(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.apply_a_raw(f.values(), out.values_mut(), true);
        Ok(out)
    }

    pub fn apply_p(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.apply_p_raw(f.values(), out.values_mut(), false);
        Ok(out)
    }

    pub fn apply_p_star(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check(f)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.apply_p_raw(f.values(), out.values_mut(), true);
        Ok(out)
    }

    /// Discrete `a . grad_y` (the transport part of `P`).
    pub fn apply_transport(&self, f: &PhaseField) -> Result<PhaseField> {
        self.check(f)?;
        let nn = self.n_cell();
        let mut out = PhaseField::zeros(nn, self.n_vel());
        for k in 0..self.n_vel() {
            self.transport_slice(k, f.velocity_slice(k), &mut out.values_mut()[k * nn..(k + 1) * nn], false);
        }
        Ok(out)
    }

    fn solve_a_slice(&self, k: usize, h: &[f64], out: &mut [f64], adjoint: bool) -> Result<()> {
        let s = self.sigma.velocity_slice(k);
        if self.exact_inverse() {
            let c = self.speeds[k][0];
            let alpha = c.abs() * self.cell.n() as f64;
            // Direction of the upwind recurrence; the transpose reverses it.
            let forward = (c > 0.0) != adjoint;
            cyclic_bidiagonal(alpha, s, h, out, forward);
            return Ok(());
        }
        let (fft, symbols) = self.precond.as_ref().expect("preconditioner built");
        let sym = &symbols[k];
        let precond = |r: &[f64], z: &mut [f64]| {
            let mut d = fft.forward_real(r);
            for (di, si) in d.iter_mut().zip(sym) {
                *di /= if adjoint { si.conj() } else { *si };
            }
            z.copy_from_slice(&fft.inverse_real(d));
        };
        out.iter_mut().for_each(|o| *o = 0.0);
        let outcome = linalg::gmres(
            |x: &[f64], y: &mut [f64]| self.apply_a_slice(k, x, y, adjoint),
            Some(precond),
            h,
            out,
            GmresOptions {
                tol: INNER_TOL,
                restart: 60,
                max_iter: 2000,
            },
        );
        if !outcome.converged && outcome.residual > 1e-11 {
            return Err(Error::NoConvergence {
                what: "advection solve",
                iterations: outcome.iterations,
                residual: outcome.residual,
            });
        }
        Ok(())
    }

    fn solve_a_raw(&self, h: &[f64], out: &mut [f64], adjoint: bool) -> Result<()> {
        let nn = self.n_cell();
        for k in 0..self.n_vel() {
            self.solve_a_slice(k, &h[k * nn..(k + 1) * nn], &mut out[k * nn..(k + 1) * nn], adjoint)?;
        }
        Ok(())
    }

    /// `f = A^{-1} h`: solves `(a . grad_y + Sigma) f = h` per velocity node.
    pub fn apply_a_inverse(&self, h: &PhaseField) -> Result<PhaseField> {
        self.check(h)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.solve_a_raw(h.values(), out.values_mut(), false)?;
        Ok(out)
    }

    pub fn apply_a_star_inverse(&self, h: &PhaseField) -> Result<PhaseField> {
        self.check(h)?;
        let mut out = PhaseField::zeros(self.n_cell(), self.n_vel());
        self.solve_a_raw(h.values(), out.values_mut(), true)?;
        Ok(out)
    }

    /// `O h = K A^{-1} h`.
    fn apply_o_raw(&self, h: &[f64], out: &mut [f64]) -> Result<()> {
        let mut f = vec![0.0; h.len()];
        self.solve_a_raw(h, &mut f, false)?;
        self.coll.gain_into(&f, out, false);
        Ok(())
    }

    /// `O' h = K* A*^{-1} h`.
    fn apply_o_adj_raw(&self, h: &[f64], out: &mut [f64]) -> Result<()> {
        let mut f = vec![0.0; h.len()];
        self.solve_a_raw(h, &mut f, true)?;
        self.coll.gain_into(&f, out, true);
        Ok(())
    }

    fn pair(&self, a: &[f64], b: &[f64]) -> f64 {
        let nn = self.n_cell();
        let mut acc = 0.0;
        for k in 0..self.n_vel() {
            acc += self.vm.weights()[k] * linalg::dot(&a[k * nn..(k + 1) * nn], &b[k * nn..(k + 1) * nn]);
        }
        acc / nn as f64
    }

    fn mean_raw(&self, a: &[f64]) -> f64 {
        let nn = self.n_cell();
        let mut acc = 0.0;
        for k in 0..self.n_vel() {
            acc += self.vm.weights()[k] * a[k * nn..(k + 1) * nn].iter().sum::<f64>();
        }
        acc / nn as f64
    }

    /// Principal eigenpair of `O = K A^{-1}`; returns `F = A^{-1} h`
    /// normalised to `int M(F) dmu = 1`.
    pub fn equilibrium_f(&self) -> Result<Equilibrium> {
        let len = self.len();
        let mut h = match self.opts.power_start {
            PowerStart::Ones => vec![1.0; len],
            PowerStart::Uniform => self.sigma.values().to_vec(),
        };
        let nrm = self.pair(&h, &h).sqrt();
        h.iter_mut().for_each(|v| *v /= nrm);
        let mut oh = vec![0.0; len];
        let mut lambda_prev = f64::NAN;
        let mut iterations = 0usize;
        let mut lambda;
        let vec_tol = 1e-11;
        let shift = 1.0 + 1e-3;
        loop {
            match self.opts.eig_method {
                EigMethod::Power => self.apply_o_raw(&h, &mut oh)?,
                EigMethod::ShiftedInverse => {
                    // (s I - O) z = h; the dominant eigenvalue 1 of O maps to 1 / (s - 1).
                    let mut z = h.clone();
                    let mut inner_err = None;
                    let out = linalg::gmres(
                        |x: &[f64], y: &mut [f64]| {
                            if let Err(e) = self.apply_o_raw(x, y) {
                                inner_err.get_or_insert(e);
                            }
                            for i in 0..x.len() {
                                y[i] = shift * x[i] - y[i];
                            }
                        },
                        None::<fn(&[f64], &mut [f64])>,
                        &h,
                        &mut z,
                        GmresOptions {
                            tol: 1e-13,
                            restart: self.opts.gmres_restart,
                            max_iter: 5000,
                        },
                    );
                    if let Some(e) = inner_err {
                        return Err(e);
                    }
                    if !out.converged && out.residual > 1e-10 {
                        return Err(Error::NoConvergence {
                            what: "shifted inverse iteration",
                            iterations: out.iterations,
                            residual: out.residual,
                        });
                    }
                    oh.copy_from_slice(&z);
                }
            }
            iterations += 1;
            let rq = self.pair(&h, &oh) / self.pair(&h, &h);
            lambda = match self.opts.eig_method {
                EigMethod::Power => rq,
                EigMethod::ShiftedInverse => shift - 1.0 / rq,
            };
            let nrm = self.pair(&oh, &oh).sqrt();
            let mut change = 0.0f64;
            for i in 0..len {
                let v = oh[i] / nrm;
                change = change.max((v - h[i]).abs());
                h[i] = v;
            }
            let done = (lambda - lambda_prev).abs() < self.opts.tol_eig && change < vec_tol;
            lambda_prev = lambda;
            if done {
                break;
            }
            if iterations >= self.opts.max_iter {
                return Err(Error::NoConvergence {
                    what: "power iteration",
                    iterations,
                    residual: change,
                });
            }
        }
        if (lambda - 1.0).abs() > 1e-8 {
            return Err(Error::EigenvalueMismatch { lambda, tol: 1e-8 });
        }
        let mut f = vec![0.0; len];
        self.solve_a_raw(&h, &mut f, false)?;
        let m = self.mean_raw(&f);
        f.iter_mut().for_each(|v| *v /= m);
        let fmax = f.iter().copied().fold(0.0, f64::max);
        let fmin = f.iter().copied().fold(f64::INFINITY, f64::min);
        let mut clamped = 0;
        if fmin <= 0.0 {
            if fmin < -1e-12 * fmax.max(1.0) {
                return Err(Error::NonPositiveEquilibrium(fmin));
            }
            for v in f.iter_mut() {
                if *v <= 0.0 {
                    *v = 1e-13 * fmax;
                    clamped += 1;
                }
            }
            log::warn!("equilibrium: {clamped} tiny nonpositive entries clamped");
        }
        Ok(Equilibrium {
            lambda,
            f: PhaseField::from_values(self.n_cell(), self.n_vel(), f)?,
            iterations,
            clamped,
        })
    }

    fn compat_scale(&self, g: &PhaseField, weight: &PhaseField) -> f64 {
        g.norm(&self.vm) * weight.norm(&self.vm)
    }

    /// Solves `P f = g` with `int M(f) dmu = 0`; needs `int M(g) dmu = 0`.
    pub fn solve_corrector(&self, g: &PhaseField, eq: &Equilibrium) -> Result<SolveReport> {
        self.check(g)?;
        let one = PhaseField::constant(self.n_cell(), self.n_vel(), 1.0);
        let c = g.pairing(&one, &self.vm);
        let tol = self.opts.tol_compat * self.compat_scale(g, &one).max(1.0);
        if c.abs() > tol {
            return Err(Error::Compatibility {
                which: "int M(g) dmu",
                value: c,
                tol: self.opts.tol_compat,
            });
        }
        let mass = self.vm.mass();
        let mut rhs = g.values().to_vec();
        rhs.iter_mut().for_each(|v| *v -= c / mass);
        let gnorm = linalg::norm2(&rhs);
        if gnorm == 0.0 {
            return Ok(SolveReport {
                solution: PhaseField::zeros(self.n_cell(), self.n_vel()),
                iterations: 0,
                residual: 0.0,
            });
        }
        // (I - O) h + 1 <1, h> = g
        let mut h = vec![0.0; self.len()];
        let mut inner_err = None;
        let out = linalg::gmres(
            |x: &[f64], y: &mut [f64]| {
                if let Err(e) = self.apply_o_raw(x, y) {
                    inner_err.get_or_insert(e);
                }
                let m = self.mean_raw(x);
                for i in 0..x.len() {
                    y[i] = x[i] - y[i] + m;
                }
            },
            None::<fn(&[f64], &mut [f64])>,
            &rhs,
            &mut h,
            GmresOptions {
                tol: self.opts.tol_lin * 1e-2,
                restart: self.opts.gmres_restart,
                max_iter: self.opts.max_iter,
            },
        );
        if let Some(e) = inner_err {
            return Err(e);
        }
        let mut f = vec![0.0; self.len()];
        self.solve_a_raw(&h, &mut f, false)?;
        let m = self.mean_raw(&f);
        linalg::axpy(-m, eq.f.values(), &mut f);
        let solution = PhaseField::from_values(self.n_cell(), self.n_vel(), f)?;
        let residual = self.residual(&solution, g, false)?;
        if residual > self.opts.tol_lin * 10.0 {
            return Err(Error::NoConvergence {
                what: "corrector solve",
                iterations: out.iterations,
                residual,
            });
        }
        Ok(SolveReport {
            solution,
            iterations: out.iterations,
            residual,
        })
    }

    /// Solves `P* phi = rhs` with `int M(phi) dmu = 0`; needs `int M(rhs F) dmu = 0`.
    pub fn solve_adjoint_corrector(&self, rhs: &PhaseField, eq: &Equilibrium) -> Result<SolveReport> {
        self.check(rhs)?;
        let f = &eq.f;
        let c = rhs.pairing(f, &self.vm);
        let tol = self.opts.tol_compat * self.compat_scale(rhs, f).max(1.0);
        if c.abs() > tol {
            return Err(Error::Compatibility {
                which: "int M(rhs F) dmu",
                value: c,
                tol: self.opts.tol_compat,
            });
        }
        let ff = f.pairing(f, &self.vm);
        let mut r = rhs.values().to_vec();
        linalg::axpy(-c / ff, f.values(), &mut r);
        if linalg::norm2(&r) == 0.0 {
            return Ok(SolveReport {
                solution: PhaseField::zeros(self.n_cell(), self.n_vel()),
                iterations: 0,
                residual: 0.0,
            });
        }
        // (I - K* A*^{-1}) psi + F <1, psi> = r
        let mut psi = vec![0.0; self.len()];
        let mut inner_err = None;
        let out = linalg::gmres(
            |x: &[f64], y: &mut [f64]| {
                if let Err(e) = self.apply_o_adj_raw(x, y) {
                    inner_err.get_or_insert(e);
                }
                let m = self.mean_raw(x);
                let fv = f.values();
                for i in 0..x.len() {
                    y[i] = x[i] - y[i] + m * fv[i];
                }
            },
            None::<fn(&[f64], &mut [f64])>,
            &r,
            &mut psi,
            GmresOptions {
                tol: self.opts.tol_lin * 1e-2,
                restart: self.opts.gmres_restart,
                max_iter: self.opts.max_iter,
            },
        );
        if let Some(e) = inner_err {
            return Err(e);
        }
        let mut phi = vec![0.0; self.len()];
        self.solve_a_raw(&psi, &mut phi, true)?;
        let m = self.mean_raw(&phi) / self.vm.mass();
        phi.iter_mut().for_each(|v| *v -= m);
        let solution = PhaseField::from_values(self.n_cell(), self.n_vel(), phi)?;
        let residual = self.residual(&solution, rhs, true)?;
        if residual > self.opts.tol_lin * 10.0 {
            return Err(Error::NoConvergence {
                what: "adjoint corrector solve",
                iterations: out.iterations,
                residual,
            });
        }
        Ok(SolveReport {
            solution,
            iterations: out.iterations,
            residual,
        })
    }

    fn residual(&self, f: &PhaseField, g: &PhaseField, adjoint: bool) -> Result<f64> {
        let pf = if adjoint { self.apply_p_star(f)? } else { self.apply_p(f)? };
        let diff: Vec<f64> = pf.values().iter().zip(g.values()).map(|(a, b)| a - b).collect();
        let gn = linalg::norm2(g.values());
        Ok(linalg::norm2(&diff) / gn.max(f64::MIN_POSITIVE))
    }

    /// Flux defect `b_j = int M(a_j F) dmu`.
    pub fn flux_defect(&self, eq: &Equilibrium) -> Vec<f64> {
        (0..self.vm.dim())
            .map(|i| {
                let af = self.velocity_component(i).pointwise_mul(&eq.f);
                af.integral_mean(&self.vm)
            })
            .collect()
    }

    /// `a_i(v)` as a phase field.
    pub fn velocity_component(&self, i: usize) -> PhaseField {
        PhaseField::from_fn(self.n_cell(), self.n_vel(), |_, k| self.vm.a(k)[i])
    }

    /// `chi*_j` solving `P* chi = -(a_j - b_j)`; the shift by `b_j` is applied
    /// when `|b_j| > 1e-10`.
    pub fn solve_chi_star(&self, eq: &Equilibrium) -> Result<ChiStar> {
        let b = self.flux_defect(eq);
        let shifted = b.iter().any(|bj| bj.abs() > 1e-10);
        let mut chi = Vec::with_capacity(b.len());
        let mut compatibility = Vec::with_capacity(b.len());
        let mut iterations = 0;
        for (i, &bi) in b.iter().enumerate() {
            let shift = if bi.abs() > 1e-10 { bi } else { 0.0 };
            let rhs = PhaseField::from_fn(self.n_cell(), self.n_vel(), |_, k| -(self.vm.a(k)[i] - shift));
            compatibility.push(rhs.pairing(&eq.f, &self.vm).abs());
            let sol = self.solve_adjoint_corrector(&rhs, eq)?;
            iterations += sol.iterations;
            chi.push(sol.solution);
        }
        Ok(ChiStar {
            chi,
            b,
            shifted,
            compatibility,
            iterations,
        })
    }

    /// `max_phi |int M(F (a . grad_y phi + Q* phi)) dmu| / (||F|| ||phi||)` over a
    /// catalogue of trigonometric-in-theta times polynomial-in-a test fields.
    pub fn verify_variational(&self, f: &PhaseField) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for phi in self.variational_tests() {
            // a . grad phi + Q* phi = -P* phi
            let p = self.apply_p_star(&phi)?;
            let r = f.pairing(&p, &self.vm).abs() / (f.norm(&self.vm) * phi.norm(&self.vm));
            worst = worst.max(r);
        }
        Ok(worst)
    }

    fn variational_tests(&self) -> Vec<PhaseField> {
        let r = self.cell.torus_dim();
        let nn = self.n_cell();
        let kk = self.n_vel();
        let d = self.vm.dim();
        let mut modes: Vec<Box<dyn Fn(&[f64]) -> f64>> = vec![Box::new(|_| 1.0)];
        for axis in 0..r {
            for m in 1..=2 {
                let w = 2.0 * std::f64::consts::PI * m as f64;
                modes.push(Box::new(move |t: &[f64]| (w * t[axis]).cos()));
                modes.push(Box::new(move |t: &[f64]| (w * t[axis]).sin()));
            }
        }
        let mut vpolys: Vec<Vec<f64>> = vec![vec![1.0; kk]];
        for i in 0..d {
            vpolys.push((0..kk).map(|k| self.vm.a(k)[i]).collect());
        }
        vpolys.push((0..kk).map(|k| self.vm.a(k).iter().map(|x| x * x).sum()).collect());
        let thetas: Vec<Vec<f64>> = (0..nn).map(|j| self.cell.theta(j)).collect();
        let mut out = Vec::new();
        for m in &modes {
            let mv: Vec<f64> = thetas.iter().map(|t| m(t)).collect();
            for p in &vpolys {
                out.push(PhaseField::from_fn(nn, kk, |j, k| mv[j] * p[k]));
            }
        }
        out
    }

    /// Dense matrix of `P` (or `P*`) in the storage order `k * N + j`.
    pub fn dense(&self, adjoint: bool) -> Result<Vec<Vec<f64>>> {
        let len = self.len();
        if len > 4096 {
            return Err(Error::InvalidInput(format!("dense assembly refused for {len} unknowns")));
        }
        let mut cols = vec![vec![0.0; len]; len];
        let mut e = vec![0.0; len];
        for (c, col) in cols.iter_mut().enumerate() {
            e[c] = 1.0;
            self.apply_p_raw(&e, col, adjoint);
            e[c] = 0.0;
        }
        // transpose columns into rows
        Ok((0..len).map(|r| (0..len).map(|c| cols[c][r]).collect()).collect())
    }

    /// Coordinate-format text dump of dense `P`: `row col value` per nonzero.
    pub fn dump_coordinate(&self) -> Result<String> {
        let m = self.dense(false)?;
        let mut out = format!("{} {}\n", m.len(), m.len());
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    out.push_str(&format!("{i} {j} {v:.16e}\n"));
                }
            }
        }
        Ok(out)
    }
}

/// Periodic bidiagonal solve of `(alpha + s_j) f_j - alpha f_{j-1} = h_j`
/// (`forward`) or `(alpha + s_j) f_j - alpha f_{j+1} = h_j`.
fn cyclic_bidiagonal(alpha: f64, s: &[f64], h: &[f64], out: &mut [f64], forward: bool) {
    let n = s.len();
    let idx = |i: usize| if forward { i } else { n - 1 - i };
    // Along the recurrence, f_{idx(i)} = p_i + q_i t with t = f_{idx(0)}.
    let (mut p, mut q) = (0.0, 1.0);
    for i in 1..n {
        let j = idx(i);
        let d = alpha + s[j];
        p = (h[j] + alpha * p) / d;
        q = alpha * q / d;
    }
    let j0 = idx(0);
    let t = (h[j0] + alpha * p) / (alpha + s[j0] - alpha * q);
    out[j0] = t;
    let mut prev = t;
    for i in 1..n {
        let j = idx(i);
        prev = (h[j] + alpha * prev) / (alpha + s[j]);
        out[j] = prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::ScatteringKernel;

    fn op(kernel: ScatteringKernel, n: usize, scheme: Scheme) -> CellOperator {
        let vm = VelocityMeasure::two_velocity();
        let cell = CellGrid::periodic(1, n).unwrap();
        CellOperator::assemble(
            &[0.0],
            &kernel,
            &vm,
            &cell,
            CellOptions {
                scheme,
                ..CellOptions::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let o = op(ScatteringKernel::constant(1.0, 2).unwrap(), 16, Scheme::Upwind);
        let c = PhaseField::constant(16, 2, 3.0);
        assert!(o.apply_p(&c).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn a_inverse_of_constant() {
        let o = op(ScatteringKernel::constant(1.0, 2).unwrap(), 16, Scheme::Upwind);
        let h = PhaseField::constant(16, 2, 3.0);
        let f = o.apply_a_inverse(&h).unwrap();
        assert!(f.values().iter().all(|v| (v - 1.5).abs() < 1e-14));
        let fs = o.apply_a_star_inverse(&h).unwrap();
        assert!(fs.values().iter().all(|v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn a_inverse_residual_both_schemes() {
        for scheme in [Scheme::Upwind, Scheme::Spectral] {
            let o = op(ScatteringKernel::sinusoidal(0.5, 2).unwrap(), 32, scheme);
            let h = PhaseField::from_fn(32, 2, |j, k| ((j * 7 + k * 3) % 5) as f64 - 1.7);
            for adjoint in [false, true] {
                let f = if adjoint { o.apply_a_star_inverse(&h) } else { o.apply_a_inverse(&h) }.unwrap();
                let af = if adjoint { o.apply_a_star(&f) } else { o.apply_a(&f) }.unwrap();
                let err: f64 = af.values().iter().zip(h.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(err <= 1e-10 * crate::linalg::norm2(h.values()), "{scheme:?} {adjoint} {err}");
            }
        }
    }

    #[test]
    fn equilibrium_of_constant_kernel() {
        let o = op(ScatteringKernel::constant(1.0, 2).unwrap(), 8, Scheme::Upwind);
        let eq = o.equilibrium_f().unwrap();
        assert!((eq.lambda - 1.0).abs() < 1e-12);
        assert!(eq.f.values().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn chi_star_constant_kernel() {
        let o = op(ScatteringKernel::constant(1.0, 2).unwrap(), 8, Scheme::Upwind);
        let eq = o.equilibrium_f().unwrap();
        let chi = o.solve_chi_star(&eq).unwrap();
        assert!(!chi.shifted);
        for j in 0..8 {
            assert!((chi.chi[0].get(j, 0) - 0.5).abs() < 1e-10);
            assert!((chi.chi[0].get(j, 1) + 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn incompatible_right_hand_sides_are_rejected() {
        let o = op(ScatteringKernel::sinusoidal(0.5, 2).unwrap(), 8, Scheme::Upwind);
        let eq = o.equilibrium_f().unwrap();
        let g = PhaseField::constant(8, 2, 1.0);
        assert!(matches!(o.solve_corrector(&g, &eq), Err(Error::Compatibility { .. })));
        assert!(matches!(o.solve_adjoint_corrector(&g, &eq), Err(Error::Compatibility { .. })));
        let z = PhaseField::zeros(8, 2);
        assert_eq!(o.solve_corrector(&z, &eq).unwrap().solution.max_abs(), 0.0);
        assert_eq!(o.solve_adjoint_corrector(&z, &eq).unwrap().solution.max_abs(), 0.0);
    }

    #[test]
    fn sdb_violation_refused() {
        let vm = VelocityMeasure::two_velocity();
        let cell = CellGrid::periodic(1, 8).unwrap();
        let k = ScatteringKernel::table(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let r = CellOperator::assemble(&[0.0], &k, &vm, &cell, CellOptions::default());
        assert!(matches!(r, Err(Error::SemiDetailedBalance { .. })));
    }

    #[test]
    fn unconverged_equilibrium_fails_variational_check() {
        let o = op(ScatteringKernel::sinusoidal(0.5, 2).unwrap(), 32, Scheme::Upwind);
        let eq = o.equilibrium_f().unwrap();
        assert!(o.verify_variational(&eq.f).unwrap() < 1e-8);
        let bad = PhaseField::from_fn(32, 2, |j, k| 1.0 + 0.3 * ((j + k) as f64).sin());
        assert!(o.verify_variational(&bad).unwrap() > 1e-4);
    }

    #[test]
    fn spectral_scheme_on_hull_torus() {
        let pi = std::f64::consts::PI;
        let vm = VelocityMeasure::two_velocity();
        let cell = CellGrid::hull(vec![vec![2.0 * pi], vec![2.0 * 2f64.sqrt() * pi]], 16).unwrap();
        let k = ScatteringKernel::quasi_periodic(0.2, 0.2, 2).unwrap();
        let o = CellOperator::assemble(
            &[0.0],
            &k,
            &vm,
            &cell,
            CellOptions {
                scheme: Scheme::Spectral,
                ..CellOptions::default()
            },
        )
        .unwrap();
        let eq = o.equilibrium_f().unwrap();
        assert!((eq.lambda - 1.0).abs() < 1e-8);
        let chi = o.solve_chi_star(&eq).unwrap();
        assert!(chi.chi[0].integral_mean(&vm).abs() < 1e-10);
    }
}
