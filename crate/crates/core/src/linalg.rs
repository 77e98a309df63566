//! Small dense solvers.

use crate::error::{Error, Result};

/// Solves `a x = b` for a square row-major `a` by Gaussian elimination with
/// partial pivoting.
pub(crate) fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("solve: matrix is not square or does not match rhs".into()));
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Internal("singular linear system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Least-squares solution of `m x ~ t` through the normal equations.
pub(crate) fn least_squares(m: &[Vec<f64>], t: &[f64]) -> Result<Vec<f64>> {
    let cols = m.first().map_or(0, Vec::len);
    let mut ata = vec![vec![0.0; cols]; cols];
    let mut atb = vec![0.0; cols];
    for (row, &ti) in m.iter().zip(t) {
        for i in 0..cols {
            atb[i] += row[i] * ti;
            for j in i..cols {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            ata[i][j] = ata[j][i];
        }
    }
    solve(ata, atb)
}
