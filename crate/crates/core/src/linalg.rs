//! Small dense solver used by the surrogate fits.
// index-based loops mirror the usual matrix notation here
#![allow(clippy::needless_range_loop)]

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
/// `a` is row-major n x n. Returns `None` for a singular system.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Weighted ridge regression with an unpenalized intercept.
///
/// Solves `(X'WX + lambda * D) beta = X'Wy` where the design gains a
/// leading intercept column and `D` is the identity with a zero in the
/// intercept position. Returns `(intercept, coefficients)`.
pub fn weighted_ridge(
    columns: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Option<(f64, Vec<f64>)> {
    let n = y.len();
    let p = columns.len() + 1; // intercept + slopes
    let design = |row: usize, col: usize| -> f64 {
        if col == 0 {
            1.0
        } else {
            columns[col - 1][row]
        }
    };

    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for row in 0..n {
        let w = weights[row];
        for i in 0..p {
            let xi = design(row, i);
            xty[i] += w * xi * y[row];
            for j in i..p {
                xtx[i][j] += w * xi * design(row, j);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }
    for (i, row) in xtx.iter_mut().enumerate().skip(1) {
        row[i] += lambda;
    }

    let beta = solve(xtx, xty)?;
    Some((beta[0], beta[1..].to_vec()))
}
