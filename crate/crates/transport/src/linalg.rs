//! Direct and Krylov solvers for the small systems assembled in this crate:
//! per-cell DG blocks (order k+1 <= 5), multi-right-hand-side solves for the
//! block elimination of the synthetic correction, and a restarted GMRES for
//! the optional Krylov wrap around the accelerated fixed point.

use crate::{Error, Result};

/// Solve the dense system `a x = b` in place by Gaussian elimination with
/// partial pivoting; `a` is row-major n-by-n and is destroyed, `b` becomes x.
pub fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> Result<()> {
    solve_dense_many(n, 1, a, b)
}

/// Solve `a X = B` for several right-hand sides sharing one factorization;
/// `b` is row-major n-by-nrhs and is overwritten with the solution columns.
pub fn solve_dense_many(n: usize, nrhs: usize, a: &mut [f64], b: &mut [f64]) -> Result<()> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * nrhs);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].abs();
        for row in col + 1..n {
            let mag = a[row * n + col].abs();
            if mag > pivot_mag {
                pivot_row = row;
                pivot_mag = mag;
            }
        }
        if pivot_mag == 0.0 {
            return Err(Error::Breakdown(format!(
                "singular local system (no pivot in column {col})"
            )));
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            for j in 0..nrhs {
                b.swap(col * nrhs + j, pivot_row * nrhs + j);
            }
        }
        let inv_pivot = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv_pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            for j in 0..nrhs {
                b[row * nrhs + j] -= factor * b[col * nrhs + j];
            }
        }
    }
    for row in (0..n).rev() {
        for j in 0..nrhs {
            let mut sum = b[row * nrhs + j];
            for k in row + 1..n {
                sum -= a[row * n + k] * b[k * nrhs + j];
            }
            b[row * nrhs + j] = sum / a[row * n + row];
        }
    }
    Ok(())
}

/// Restarted-GMRES controls.
#[derive(Debug, Clone)]
pub struct GmresConfig {
    pub restart: usize,
    pub max_iterations: usize,
    /// Relative residual target, measured against the right-hand side norm.
    pub tolerance: f64,
}

/// Outcome of a GMRES run.
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` where `A` is available only as a matrix-vector product.
/// Starts from x = 0; restarts every `config.restart` inner steps.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    config: &GmresConfig,
) -> GmresOutcome {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return GmresOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let m = config.restart.max(1);
    let mut total_iters = 0;
    let mut res = b_norm;

    while total_iters < config.max_iterations {
        // r = b - A x
        let ax = apply(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        res = beta;
        if beta <= config.tolerance * b_norm {
            return GmresOutcome {
                x,
                iterations: total_iters,
                residual: beta / b_norm,
                converged: true,
            };
        }
        for v in r.iter_mut() {
            *v /= beta;
        }
        let mut basis_v = vec![r];
        // Hessenberg columns, Givens rotations, rotated rhs
        let mut h_cols: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut inner_used = 0;

        for j in 0..m {
            if total_iters >= config.max_iterations {
                break;
            }
            total_iters += 1;
            let mut w = apply(&basis_v[j]);
            let mut h = vec![0.0; j + 2];
            for (i, v) in basis_v.iter().enumerate() {
                h[i] = dot(&w, v);
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= h[i] * vk;
                }
            }
            let h_next = norm(&w);
            // previous rotations touch entries 0..=j only
            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = (h[j] * h[j] + h_next * h_next).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (h[j] / denom, h_next / denom)
            };
            cs.push(c);
            sn.push(s);
            h[j] = denom;
            h[j + 1] = 0.0;
            g.push(-s * g[j]);
            g[j] *= c;
            h_cols.push(h);
            inner_used = j + 1;
            res = g[j + 1].abs();
            if res <= config.tolerance * b_norm || h_next == 0.0 || !denom.is_finite() {
                break;
            }
            for v in w.iter_mut() {
                *v /= h_next;
            }
            basis_v.push(w);
        }

        // back-substitute the triangular system H y = g
        let k = inner_used;
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut sum = g[i];
            for j in i + 1..k {
                sum -= h_cols[j][i] * y[j];
            }
            y[i] = sum / h_cols[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis_v[j]) {
                *xi += yj * vi;
            }
        }
        if res <= config.tolerance * b_norm {
            let ax = apply(&x);
            let true_res = rhs
                .iter()
                .zip(&ax)
                .map(|(b, a)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt();
            return GmresOutcome {
                x,
                iterations: total_iters,
                residual: true_res / b_norm,
                converged: true_res <= 10.0 * config.tolerance * b_norm,
            };
        }
    }
    GmresOutcome {
        x,
        iterations: total_iters,
        residual: res / b_norm,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solves_identity() {
        let mut a = vec![1.0, 0.0, 0.0, 1.0];
        let mut b = vec![3.0, -2.0];
        solve_dense(2, &mut a, &mut b).unwrap();
        assert_eq!(b, vec![3.0, -2.0]);
    }

    #[test]
    fn dense_solves_permuted_system() {
        // first pivot is zero; partial pivoting must reorder
        let mut a = vec![0.0, 1.0, 2.0, 0.0];
        let mut b = vec![5.0, 6.0];
        solve_dense(2, &mut a, &mut b).unwrap();
        assert!((b[0] - 3.0).abs() < 1e-14);
        assert!((b[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn dense_reports_singularity() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(matches!(
            solve_dense(2, &mut a, &mut b),
            Err(Error::Breakdown(_))
        ));
    }

    #[test]
    fn dense_random_roundtrip() {
        // fixed pseudo-random 4x4 system: check A x == b after solving
        let a0 = [
            4.0, 1.0, -0.3, 0.2, //
            1.0, 3.5, 0.7, -0.4, //
            -0.3, 0.7, 5.0, 1.1, //
            0.2, -0.4, 1.1, 2.9,
        ];
        let b0 = [1.0, -2.0, 0.5, 3.0];
        let mut a = a0.to_vec();
        let mut x = b0.to_vec();
        solve_dense(4, &mut a, &mut x).unwrap();
        for i in 0..4 {
            let ax: f64 = (0..4).map(|j| a0[i * 4 + j] * x[j]).sum();
            assert!((ax - b0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn many_rhs_matches_column_solves() {
        let a0 = [
            2.0, -1.0, 0.4, //
            -1.0, 3.0, 0.9, //
            0.4, 0.9, 1.7,
        ];
        let cols = [[1.0, 0.0, -2.0], [0.5, 1.5, 0.25]];
        let mut a = a0.to_vec();
        // row-major 3x2 right-hand-side block
        let mut b = vec![
            cols[0][0], cols[1][0], //
            cols[0][1], cols[1][1], //
            cols[0][2], cols[1][2],
        ];
        solve_dense_many(3, 2, &mut a, &mut b).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let mut single_a = a0.to_vec();
            let mut x = col.to_vec();
            solve_dense(3, &mut single_a, &mut x).unwrap();
            for i in 0..3 {
                assert!((b[i * 2 + j] - x[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gmres_solves_small_dense_system() {
        let a = [
            3.0, 1.0, 0.0, //
            1.0, 2.5, 0.3, //
            0.0, 0.3, 4.0,
        ];
        let b = vec![1.0, -1.0, 2.0];
        let out = gmres(
            |v: &[f64]| {
                (0..3)
                    .map(|i| (0..3).map(|j| a[i * 3 + j] * v[j]).sum())
                    .collect()
            },
            &b,
            &GmresConfig {
                restart: 3,
                max_iterations: 50,
                tolerance: 1e-12,
            },
        );
        assert!(out.converged);
        let mut expect_a = a.to_vec();
        let mut expect = b.clone();
        solve_dense(3, &mut expect_a, &mut expect).unwrap();
        for i in 0..3 {
            assert!((out.x[i] - expect[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn gmres_with_restart_converges() {
        // diagonally dominant 20x20, restart shorter than dimension
        let n = 20;
        let apply = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for i in 0..n {
                out[i] = 4.0 * v[i];
                if i > 0 {
                    out[i] -= v[i - 1];
                }
                if i < n - 1 {
                    out[i] -= v[i + 1];
                }
            }
            out
        };
        let b = vec![1.0; n];
        let out = gmres(
            |v: &[f64]| apply(v),
            &b,
            &GmresConfig {
                restart: 5,
                max_iterations: 400,
                tolerance: 1e-11,
            },
        );
        assert!(out.converged, "residual {}", out.residual);
        let ax = apply(&out.x);
        let err: f64 = ax
            .iter()
            .zip(&b)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn gmres_zero_rhs() {
        let out = gmres(
            |v: &[f64]| v.to_vec(),
            &[0.0, 0.0],
            &GmresConfig {
                restart: 2,
                max_iterations: 10,
                tolerance: 1e-12,
            },
        );
        assert!(out.converged);
        assert_eq!(out.x, vec![0.0, 0.0]);
    }
}
