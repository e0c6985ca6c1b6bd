//! Krylov solvers: Jacobi-preconditioned CG and right-preconditioned GMRES(m).
//!
//! Both report convergence against the true residual `‖b - A x‖₂ ≤ tol·‖b‖₂`.

use super::sparse::{dot, norm2, residual, SparseMatrix};
use super::{LinalgError, SolveStats};

fn jacobi_inverse(a: &SparseMatrix) -> Vec<f64> {
    a.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 && d.is_finite() { 1.0 / d } else { 1.0 })
        .collect()
}

fn check_square(a: &SparseMatrix, b: &[f64]) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() || b.len() != a.nrows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} matrix with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    Ok(())
}

/// Preconditioned conjugate gradients. Breakdown (`pᵀAp ≤ 0`) is reported as
/// non-convergence.
pub fn solve_cg(
    a: &SparseMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    check_square(a, b)?;
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let target = tol_rel * bnorm;
    let dinv = jacobi_inverse(a);
    let mut r = residual(a, &x, b);
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                residual: rnorm / bnorm,
            },
        ));
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(LinalgError::NotConverged {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            // Confirm against the true residual to guard against drift.
            let true_res = norm2(&residual(a, &x, b));
            if true_res <= target {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        residual: true_res / bnorm,
                    },
                ));
            }
            r = residual(a, &x, b);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::NotConverged {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

/// Restarted GMRES with right diagonal scaling.
pub fn solve_gmres(
    a: &SparseMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    tol_rel: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    check_square(a, b)?;
    let n = b.len();
    let m = restart.max(1).min(n.max(1));
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let target = tol_rel * bnorm;
    let dinv = jacobi_inverse(a);
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut total = 0usize;
    let mut w = vec![0.0; n];
    let mut zbuf = vec![0.0; n];

    loop {
        let r = residual(a, &x, b);
        let beta = norm2(&r);
        if beta <= target {
            return Ok((
                x,
                SolveStats {
                    iterations: total,
                    residual: beta / bnorm,
                },
            ));
        }
        if total >= max_iter {
            return Err(LinalgError::NotConverged {
                iterations: total,
                residual: beta / bnorm,
            });
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if total >= max_iter {
                break;
            }
            total += 1;
            for i in 0..n {
                zbuf[i] = basis[k][i] * dinv[i];
            }
            a.mul_vec_into(&zbuf, &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let hij = dot(&w, vj);
                h[j][k] = hij;
                for i in 0..n {
                    w[i] -= hij * vj[i];
                }
            }
            let wnorm = norm2(&w);
            h[k + 1][k] = wnorm;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= target || wnorm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }
        if k_used == 0 {
            return Err(LinalgError::NotConverged {
                iterations: total,
                residual: beta / bnorm,
            });
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * basis[j][i] * dinv[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::CooBuilder;
    use rand::{Rng, SeedableRng};

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    /// Dense Gaussian elimination with partial pivoting, independent of the
    /// banded factorization.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    fn assert_contract(a: &SparseMatrix, x: &[f64], b: &[f64], tol: f64) {
        assert!(norm2(&residual(a, x, b)) <= tol * norm2(b));
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cg_identity() {
        let a = SparseMatrix::identity(5);
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (x, _) = solve_cg(&a, &b, None, 1e-12, 10).unwrap();
        assert_contract(&a, &x, &b, 1e-12);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_laplacian_matches_dense() {
        let a = laplacian_1d(4);
        let b = vec![1.0; 4];
        let oracle = dense_solve(a.to_dense(), b.clone());
        assert!(oracle
            .iter()
            .zip([2.0, 3.0, 3.0, 2.0])
            .all(|(o, e)| (o - e).abs() < 1e-12));
        let (x, _) = solve_cg(&a, &b, None, 1e-12, 100).unwrap();
        assert_contract(&a, &x, &b, 1e-12);
        for (xi, oi) in x.iter().zip(&oracle) {
            assert!((xi - oi).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_indefinite_reports_failure() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let b = [1.0, 1.0];
        match solve_cg(&a, &b, None, 1e-12, 50) {
            Err(LinalgError::NotConverged { .. }) => {}
            Ok((x, _)) => panic!("indefinite system accepted: {x:?}"),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cg_pinned_laplacian_converges() {
        let mut a = laplacian_1d(30);
        let mut b = vec![0.1; 30];
        a.apply_dirichlet(&mut b, &[0, 29], &[1.0, -1.0]).unwrap();
        let (x, _) = solve_cg(&a, &b, None, 1e-10, 200).unwrap();
        assert_contract(&a, &x, &b, 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[29] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmres_scaled_identity() {
        let mut a = SparseMatrix::identity(7);
        a.scale(2.0);
        let b: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let (x, _) = solve_gmres(&a, &b, None, 1e-12, 50, 100).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_permutation() {
        let a = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (x, _) = solve_gmres(&a, &[1.0, 2.0], None, 1e-12, 50, 100).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmres_random_matches_dense_lu() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let n = 50;
        let mut dense = vec![vec![0.0; n]; n];
        for (i, row) in dense.iter_mut().enumerate() {
            for v in row.iter_mut() {
                if rng.gen_bool(0.2) {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            row[i] += 10.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = SparseMatrix::from_dense(&dense);
        let oracle = dense_solve(dense, b.clone());
        let (x, _) = solve_gmres(&a, &b, None, 1e-12, 50, 500).unwrap();
        assert_contract(&a, &x, &b, 1e-12);
        for (xi, oi) in x.iter().zip(&oracle) {
            assert!((xi - oi).abs() < 1e-8);
        }
        let lu = crate::linalg::solve_lu(&a, &b).unwrap();
        for (li, oi) in lu.iter().zip(&oracle) {
            assert!((li - oi).abs() < 1e-10);
        }
    }

    #[test]
    fn gmres_restart_small_still_converges() {
        let a = laplacian_1d(40);
        let b = vec![1.0; 40];
        let (x, stats) = solve_gmres(&a, &b, None, 1e-10, 5, 5000).unwrap();
        assert_contract(&a, &x, &b, 1e-10);
        assert!(stats.iterations > 5);
    }

    #[test]
    fn gmres_iteration_cap() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        assert!(matches!(
            solve_gmres(&a, &b, None, 1e-14, 3, 6),
            Err(LinalgError::NotConverged { iterations: 6, .. })
        ));
    }
}
