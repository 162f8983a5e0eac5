//! Small dense/iterative kernels shared by the cell and macro solvers.

/// Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Relative residual target `||b - Ax|| <= tol * ||b||`.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            restart: 200,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// True relative residual at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Restarted GMRES with optional right preconditioning.
///
/// `apply(x, y)` writes `A x` into `y`; `precond(r, z)` writes `M^{-1} r`
/// into `z`. `x` holds the initial guess on entry and the solution on exit.
pub fn gmres<A, M>(
    mut apply: A,
    mut precond: Option<M>,
    b: &[f64],
    x: &mut [f64],
    opts: GmresOptions,
) -> KrylovOutcome
where
    A: FnMut(&[f64], &mut [f64]),
    M: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let m = opts.restart.max(1).min(n.max(1));
    let mut total = 0usize;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    let true_residual = |apply: &mut A, x: &[f64], r: &mut [f64], w: &mut [f64]| -> f64 {
        apply(x, w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        norm2(r)
    };

    let mut rnorm = true_residual(&mut apply, x, &mut r, &mut w);
    loop {
        if rnorm <= opts.tol * bnorm {
            return KrylovOutcome {
                iterations: total,
                residual: rnorm / bnorm,
                converged: true,
            };
        }
        if total >= opts.max_iter {
            return KrylovOutcome {
                iterations: total,
                residual: rnorm / bnorm,
                converged: false,
            };
        }
        // Arnoldi basis, Hessenberg in column-major (j, i) order.
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m + 1]; m];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = rnorm;
        v.push(r.iter().map(|ri| ri / rnorm).collect());
        let mut k_used = 0;
        for j in 0..m {
            match precond.as_mut() {
                Some(p) => p(&v[j], &mut z),
                None => z.copy_from_slice(&v[j]),
            }
            apply(&z, &mut w);
            zs.push(z.clone());
            // Modified Gram-Schmidt with one reorthogonalisation pass.
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = dot(&w, vi);
                    h[j][i] += hij;
                    axpy(-hij, vi, &mut w);
                }
            }
            let wnorm = norm2(&w);
            h[j][j + 1] = wnorm;
            for i in 0..j {
                let t = cs[i] * h[j][i] + sn[i] * h[j][i + 1];
                h[j][i + 1] = -sn[i] * h[j][i] + cs[i] * h[j][i + 1];
                h[j][i] = t;
            }
            let (c, s) = givens(h[j][j], h[j][j + 1]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c * h[j][j] + s * h[j][j + 1];
            h[j][j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            total += 1;
            k_used = j + 1;
            let est = g[j + 1].abs();
            if est <= opts.tol * bnorm * 0.5 || wnorm == 0.0 || total >= opts.max_iter {
                break;
            }
            v.push(w.iter().map(|wi| wi / wnorm).collect());
        }
        // Back substitution.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for jj in i + 1..k_used {
                s -= h[jj][i] * y[jj];
            }
            y[i] = s / h[i][i];
        }
        for (jj, yj) in y.iter().enumerate() {
            axpy(*yj, &zs[jj], x);
        }
        let prev = rnorm;
        rnorm = true_residual(&mut apply, x, &mut r, &mut w);
        if k_used == 0 || (rnorm >= prev && total >= opts.max_iter) {
            return KrylovOutcome {
                iterations: total,
                residual: rnorm / bnorm,
                converged: rnorm <= opts.tol * bnorm,
            };
        }
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves the tridiagonal system `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`
/// with the Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { upper[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Cyclic tridiagonal solve (periodic coupling `lower[0]` to `x[n-1]` and
/// `upper[n-1]` to `x[0]`) via Sherman-Morrison.
pub fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Vec<f64> {
    let n = diag.len();
    assert!(n >= 3, "cyclic tridiagonal solve needs at least 3 unknowns");
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut dd = diag.to_vec();
    dd[0] -= gamma;
    dd[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &dd, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &dd, upper, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, -1.0, 3.0]];
        let b = [1.0, 2.0, 3.0];
        let mut x = vec![0.0; 3];
        let out = gmres(
            |v: &[f64], y: &mut [f64]| {
                for i in 0..3 {
                    y[i] = (0..3).map(|j| a[i][j] * v[j]).sum();
                }
            },
            None::<fn(&[f64], &mut [f64])>,
            &b,
            &mut x,
            GmresOptions::default(),
        );
        assert!(out.converged);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_restarts_still_converge() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let out = gmres(
            |v: &[f64], y: &mut [f64]| {
                for i in 0..n {
                    y[i] = 3.0 * v[i] - v[(i + 1) % n] - 0.5 * v[(i + n - 1) % n];
                }
            },
            None::<fn(&[f64], &mut [f64])>,
            &b,
            &mut x,
            GmresOptions {
                tol: 1e-13,
                restart: 5,
                max_iter: 1000,
            },
        );
        assert!(out.converged, "{out:?}");
    }

    #[test]
    fn cyclic_tridiagonal_matches_dense() {
        let n = 6;
        let lower: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let diag = vec![4.0; n];
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs);
        for i in 0..n {
            let r = lower[i] * x[(i + n - 1) % n] + diag[i] * x[i] + upper[i] * x[(i + 1) % n];
            assert!((r - rhs[i]).abs() < 1e-12);
        }
    }
}
