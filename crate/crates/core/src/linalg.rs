//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Pivot magnitude below which a column is treated as dependent.
pub const PIVOT_TOL: f64 = 1e-10;

/// Numerical rank by Gaussian elimination with partial pivoting.
pub fn rank(m: &DMatrix<f64>, pivot_tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot_row, pivot_abs) = (rank..rows)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= pivot_tol {
            continue;
        }
        a.swap_rows(rank, pivot_row);
        let pivot = a[(rank, col)];
        for r in (rank + 1)..rows {
            let factor = a[(r, col)] / pivot;
            if factor != 0.0 {
                for c in col..cols {
                    let v = a[(rank, c)];
                    a[(r, c)] -= factor * v;
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn mat_t_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m.transpose() * DVector::from_column_slice(v)).as_slice().to_vec()
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
