//! Homogenized coefficients from the equilibrium and the adjoint correctors.
//!
//! Sign convention: the literal coefficient `D_raw = int M(chi* a F) dmu`
//! is negative semi-definite for the constant kernel; the macro solver is fed
//! `D_eff = -D_raw` and `U_eff = -U_raw` and integrates
//! `d_t rho = div(D_eff grad rho + U_eff rho)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cell_solver::{CellOperator, CellOptions, ChiStar, Equilibrium};
use crate::collision::{PhaseField, ScatteringKernel};
use crate::error::{Error, Result};
use crate::phase_space::{CellGrid, MacroGrid, VelocityMeasure};

/// Everything the cell stage produces at one macro point.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub x: Vec<f64>,
    pub equilibrium: Equilibrium,
    pub chi: ChiStar,
}

impl CellSolution {
    pub fn compute(
        x: &[f64],
        kernel: &ScatteringKernel,
        vm: &VelocityMeasure,
        cell: &CellGrid,
        opts: CellOptions,
    ) -> Result<(Self, CellOperator)> {
        let op = CellOperator::assemble(x, kernel, vm, cell, opts)?;
        let equilibrium = op.equilibrium_f()?;
        let chi = op.solve_chi_star(&equilibrium)?;
        Ok((
            Self {
                x: x.to_vec(),
                equilibrium,
                chi,
            },
            op,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSample {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub d_raw: Vec<Vec<f64>>,
    pub d_eff: Vec<Vec<f64>>,
    pub u_raw: Vec<f64>,
    pub u_eff: Vec<f64>,
    pub b: Vec<f64>,
    /// Smallest eigenvalue of the symmetric part of `D_eff`.
    pub ellipticity_min: f64,
    pub shifted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VfcReport {
    pub b: Vec<f64>,
    pub passed: bool,
}

/// `b_j = int M(a_j F) dmu`; passes when `max |b_j| <= 1e-10`.
pub fn check_vfc(f: &PhaseField, vm: &VelocityMeasure) -> VfcReport {
    let b: Vec<f64> = (0..vm.dim())
        .map(|j| {
            let a = PhaseField::from_fn(f.n_cell(), f.n_vel(), |_, k| vm.a(k)[j]);
            a.pointwise_mul(f).integral_mean(vm)
        })
        .collect();
    let passed = b.iter().all(|bj| bj.abs() <= 1e-10);
    VfcReport { b, passed }
}

/// `d_ij = int M(chi*_i (a_j - b_j) F) dmu`. With `b = 0` this is the literal
/// formula; the `b` shift keeps it invariant under `chi*_i -> chi*_i + c`.
pub fn diffusion_matrix(f: &PhaseField, chi: &[PhaseField], b: &[f64], vm: &VelocityMeasure) -> Result<Vec<Vec<f64>>> {
    let d = vm.dim();
    if chi.len() != d || b.len() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            got: chi.len(),
        });
    }
    for c in chi {
        c.same_shape(f)?;
    }
    Ok((0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let w = PhaseField::from_fn(f.n_cell(), f.n_vel(), |_, k| vm.a(k)[j] - b[j]);
                    chi[i].pairing(&w.pointwise_mul(f), vm)
                })
                .collect()
        })
        .collect())
}

/// `U_i = int M(chi*_i a . grad_x F) dmu` given `grad_x F` components.
pub fn drift_from_gradient(chi: &[PhaseField], grad_f: &[PhaseField], vm: &VelocityMeasure) -> Vec<f64> {
    let d = vm.dim();
    let n_cell = grad_f[0].n_cell();
    let n_vel = grad_f[0].n_vel();
    let a_grad = PhaseField::from_fn(n_cell, n_vel, |j, k| (0..d).map(|l| vm.a(k)[l] * grad_f[l].get(j, k)).sum());
    chi.iter().map(|c| c.pairing(&a_grad, vm)).collect()
}

/// `U(x)` at every macro node by centred differences of the sampled `F`
/// (one-sided at the truncation boundary).
pub fn drift_vector(
    f_samples: &[&PhaseField],
    chi: &[&[PhaseField]],
    vm: &VelocityMeasure,
    grid: &MacroGrid,
) -> Result<Vec<Vec<f64>>> {
    let len = grid.len();
    if f_samples.len() != len || chi.len() != len {
        return Err(Error::ShapeMismatch {
            expected: len,
            got: f_samples.len(),
        });
    }
    let n = grid.n();
    let dim = grid.dim();
    let h = grid.spacing();
    (0..len)
        .map(|flat| {
            let grad: Vec<PhaseField> = (0..dim)
                .map(|axis| {
                    let stride = n.pow((dim - 1 - axis) as u32);
                    let i = (flat / stride) % n;
                    let base = flat - i * stride;
                    let (lo, hi, span) = if i == 0 {
                        (flat, base + stride, h)
                    } else if i == n - 1 {
                        (base + (n - 2) * stride, flat, h)
                    } else {
                        (base + (i - 1) * stride, base + (i + 1) * stride, 2.0 * h)
                    };
                    let (fl, fh) = (f_samples[lo], f_samples[hi]);
                    PhaseField::from_fn(fl.n_cell(), fl.n_vel(), |j, k| (fh.get(j, k) - fl.get(j, k)) / span)
                })
                .collect();
            Ok(drift_from_gradient(chi[flat], &grad, vm))
        })
        .collect()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mat = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[i][j] + m[j][i]));
    SymmetricEigen::new(mat).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

impl EffectiveSample {
    pub fn from_cell(sol: &CellSolution, u_raw: Vec<f64>, vm: &VelocityMeasure) -> Result<Self> {
        let d_raw = diffusion_matrix(&sol.equilibrium.f, &sol.chi.chi, &effective_shift(&sol.chi), vm)?;
        let d_eff: Vec<Vec<f64>> = d_raw.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let ellipticity_min = min_symmetric_eigenvalue(&d_eff);
        Ok(Self {
            x: sol.x.clone(),
            lambda: sol.equilibrium.lambda,
            u_eff: u_raw.iter().map(|u| -u).collect(),
            u_raw,
            d_raw,
            d_eff,
            b: sol.chi.b.clone(),
            ellipticity_min,
            shifted: sol.chi.shifted,
        })
    }

    /// Hard gate: `lambda_min(sym D_eff) >= -1e-10 trace`.
    pub fn check_ellipticity(&self) -> Result<()> {
        let trace: f64 = (0..self.d_eff.len()).map(|i| self.d_eff[i][i]).sum();
        if self.ellipticity_min < -1e-10 * trace.abs().max(f64::MIN_POSITIVE) || !self.ellipticity_min.is_finite() {
            return Err(Error::NotElliptic {
                x: self.x.clone(),
                min_eig: self.ellipticity_min,
            });
        }
        Ok(())
    }
}

fn effective_shift(chi: &ChiStar) -> Vec<f64> {
    chi.b.iter().map(|&b| if b.abs() > 1e-10 { b } else { 0.0 }).collect()
}

/// Effective coefficients over a macro grid. For an `x`-independent kernel a
/// single cell solution is reused and `U = 0` exactly.
#[derive(Debug, Clone)]
pub struct EffectiveField {
    pub samples: Vec<EffectiveSample>,
    pub x_dependent: bool,
}

impl EffectiveField {
    pub fn uniform(sol: &CellSolution, vm: &VelocityMeasure, grid: &MacroGrid) -> Result<Self> {
        let base = EffectiveSample::from_cell(sol, vec![0.0; vm.dim()], vm)?;
        base.check_ellipticity()?;
        let samples = grid
            .points()
            .into_iter()
            .map(|x| EffectiveSample {
                x,
                ..base.clone()
            })
            .collect();
        Ok(Self {
            samples,
            x_dependent: false,
        })
    }

    pub fn from_solutions(sols: &[CellSolution], vm: &VelocityMeasure, grid: &MacroGrid) -> Result<Self> {
        let fs: Vec<&PhaseField> = sols.iter().map(|s| &s.equilibrium.f).collect();
        let chis: Vec<&[PhaseField]> = sols.iter().map(|s| s.chi.chi.as_slice()).collect();
        let u = drift_vector(&fs, &chis, vm, grid)?;
        let samples = sols
            .iter()
            .zip(u)
            .map(|(s, u)| {
                let e = EffectiveSample::from_cell(s, u, vm)?;
                e.check_ellipticity()?;
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            x_dependent: true,
        })
    }

    pub fn d_eff(&self) -> Vec<Vec<Vec<f64>>> {
        self.samples.iter().map(|s| s.d_eff.clone()).collect()
    }

    pub fn u_eff(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.u_eff.clone()).collect()
    }

    pub fn b(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.b.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_solver::CellOptions;

    #[test]
    fn two_velocity_constant_kernel() {
        let vm = VelocityMeasure::two_velocity();
        let cell = CellGrid::periodic(1, 8).unwrap();
        let k = ScatteringKernel::constant(1.0, 2).unwrap();
        let (sol, _) = CellSolution::compute(&[0.0], &k, &vm, &cell, CellOptions::default()).unwrap();
        let e = EffectiveSample::from_cell(&sol, vec![0.0], &vm).unwrap();
        assert!((e.d_raw[0][0] + 0.5).abs() < 1e-10);
        assert!((e.d_eff[0][0] - 0.5).abs() < 1e-10);
        assert_eq!(e.b, vec![0.0]);
        e.check_ellipticity().unwrap();
    }

    #[test]
    fn zero_corrector_gives_zero_coefficients() {
        let vm = VelocityMeasure::two_velocity();
        let f = PhaseField::constant(4, 2, 0.5);
        let z = vec![PhaseField::zeros(4, 2)];
        assert_eq!(diffusion_matrix(&f, &z, &[0.0], &vm).unwrap(), vec![vec![0.0]]);
        let g = vec![PhaseField::constant(4, 2, 1.0)];
        assert_eq!(drift_from_gradient(&z, &g, &vm), vec![0.0]);
    }

    #[test]
    fn vfc_examples() {
        let vm = VelocityMeasure::two_velocity();
        assert!(check_vfc(&PhaseField::constant(4, 2, 0.5), &vm).passed);
        let asym = VelocityMeasure::identity_field(vec![vec![-1.0], vec![1.0]], vec![1.0, 2.0]).unwrap();
        let r = check_vfc(&PhaseField::constant(4, 2, 1.0 / 3.0), &asym);
        assert!((r.b[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(!r.passed);
        let still = VelocityMeasure::new(vec![vec![-1.0], vec![1.0]], vec![1.0, 2.0], vec![vec![0.0], vec![0.0]]).unwrap();
        assert!(check_vfc(&PhaseField::constant(4, 2, 1.0 / 3.0), &still).passed);
    }

    #[test]
    fn ellipticity_gate() {
        let e = EffectiveSample {
            x: vec![0.0],
            lambda: 1.0,
            d_raw: vec![vec![0.5]],
            d_eff: vec![vec![-0.5]],
            u_raw: vec![0.0],
            u_eff: vec![0.0],
            b: vec![0.0],
            ellipticity_min: -0.5,
            shifted: false,
        };
        assert!(matches!(e.check_ellipticity(), Err(Error::NotElliptic { .. })));
    }
}
