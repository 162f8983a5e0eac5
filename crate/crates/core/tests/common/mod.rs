//! Dense oracles for the 32 x 2 upwind cell discretization, assembled
//! independently of the library and solved by SVD.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use kinhom::collision::ScatteringKernel;
use kinhom::phase_space::VelocityMeasure;

pub const N: usize = 32;

pub struct Case {
    pub vm: VelocityMeasure,
    pub kernel: ScatteringKernel,
    pub profile: fn(f64) -> f64,
}

pub fn cases() -> Vec<Case> {
    vec![
        Case {
            vm: VelocityMeasure::two_velocity(),
            kernel: ScatteringKernel::sinusoidal(0.5, 2).unwrap(),
            profile: |y| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * y).sin(),
        },
        Case {
            vm: VelocityMeasure::identity_field(vec![vec![-1.0], vec![1.0]], vec![1.0, 2.0]).unwrap(),
            kernel: ScatteringKernel::sinusoidal(0.25, 2).unwrap(),
            profile: |y| 1.0 + 0.25 * (2.0 * std::f64::consts::PI * y).sin(),
        },
    ]
}

/// `P = a d_y - Q` with first-order upwind in flux form, index `k * N + j`.
pub fn oracle_p(case: &Case) -> DMatrix<f64> {
    let kk = case.vm.len();
    let mu = case.vm.weights();
    let g = case.kernel.velocity_table();
    let h = 1.0 / N as f64;
    let mut p = DMatrix::zeros(kk * N, kk * N);
    for k in 0..kk {
        let c = case.vm.a(k)[0];
        for j in 0..N {
            let r = k * N + j;
            if c > 0.0 {
                p[(r, r)] += c / h;
                p[(r, k * N + (j + N - 1) % N)] -= c / h;
            } else {
                p[(r, r)] -= c / h;
                p[(r, k * N + (j + 1) % N)] += c / h;
            }
            let s = (case.profile)(j as f64 * h);
            for w in 0..kk {
                p[(r, w * N + j)] -= mu[w] * s * g[k][w];
                p[(r, r)] += mu[w] * s * g[w][k];
            }
        }
    }
    p
}

/// Pairing weights `mu_k / N`.
pub fn pairing(case: &Case) -> DVector<f64> {
    DVector::from_fn(case.vm.len() * N, |r, _| case.vm.weights()[r / N] / N as f64)
}

/// Adjoint under the weighted pairing: `W^{-1} P^T W`.
pub fn oracle_p_star(case: &Case, p: &DMatrix<f64>) -> DMatrix<f64> {
    let w = pairing(case);
    let mut m = p.transpose();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            m[(r, c)] *= w[c] / w[r];
        }
    }
    m
}

/// Least-squares solution of `M x = rhs` subject to `<w, x> = target`.
pub fn constrained_lsq(m: &DMatrix<f64>, rhs: &DVector<f64>, w: &DVector<f64>, target: f64) -> DVector<f64> {
    let n = m.nrows();
    let mut a = DMatrix::zeros(n + 1, n);
    a.view_mut((0, 0), (n, n)).copy_from(m);
    for c in 0..n {
        a[(n, c)] = w[c];
    }
    let mut b = DVector::zeros(n + 1);
    b.rows_mut(0, n).copy_from(rhs);
    b[n] = target;
    a.svd(true, true).solve(&b, 1e-14).unwrap()
}

pub fn gl4() -> VelocityMeasure {
    let (a, b) = (0.3399810435848563, 0.8611363115940526);
    let (wa, wb) = (0.6521451548625461, 0.3478548451374538);
    VelocityMeasure::identity_field(vec![vec![-b], vec![-a], vec![a], vec![b]], vec![wb, wa, wa, wb]).unwrap()
}
