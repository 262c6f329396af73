//! Small dense solvers used by the optimizers.

use nalgebra::{DMatrix, DVector};

/// Solve `m x = rhs` for symmetric positive semi-definite `m` by a Cholesky
/// factorization that skips variables whose pivot falls below
/// `rel_tol * scale[j]`. Skipped variables are set to zero and reported as
/// `false` in the returned mask. Variables are eliminated in index order,
/// so a leading block that is known to be nonsingular is never dropped.
pub(crate) fn solve_psd_dropping(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    scale: &[f64],
    rel_tol: f64,
) -> (DVector<f64>, Vec<bool>) {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    let mut kept = vec![false; n];
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            if kept[k] {
                d -= l[(j, k)] * l[(j, k)];
            }
        }
        if !(d > rel_tol * scale[j]) {
            continue;
        }
        kept[j] = true;
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                if kept[k] {
                    s -= l[(i, k)] * l[(j, k)];
                }
            }
            l[(i, j)] = s / ljj;
        }
    }
    let mut y = DVector::zeros(n);
    for i in 0..n {
        if !kept[i] {
            continue;
        }
        let mut s = rhs[i];
        for k in 0..i {
            if kept[k] {
                s -= l[(i, k)] * y[k];
            }
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        if !kept[i] {
            continue;
        }
        let mut s = y[i];
        for k in (i + 1)..n {
            if kept[k] {
                s -= l[(k, i)] * x[k];
            }
        }
        x[i] = s / l[(i, i)];
    }
    (x, kept)
}
