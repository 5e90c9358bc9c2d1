//! Small dense linear solves used by policy evaluation and hitting times.
//!
//! Problem sizes here are a few hundred unknowns at most, so Gaussian
//! elimination with partial pivoting is plenty and avoids a BLAS dependency.

use ndarray::{Array1, Array2};

/// Pivot magnitudes below this are treated as exact zeros (singular matrix).
const SINGULAR_TOL: f64 = 1e-12;

/// Solves `a x = b` in place on copies. Returns `None` when `a` is singular
/// to working precision.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);

    let mut m = a.clone();
    let mut x = b.clone();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if m[[pivot_row, col]].abs() <= SINGULAR_TOL {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap([pivot_row, k], [col, k]);
            }
            x.swap(pivot_row, col);
        }
        let pivot = m[[col, col]];
        for row in col + 1..n {
            let factor = m[[row, col]] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[[row, k]] -= factor * m[[col, k]];
            }
            x[row] -= factor * x[col];
        }
    }

    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[[col, k]] * x[k];
        }
        x[col] = acc / m[[col, col]];
    }
    Some(x)
}

/// Reusable LU factorization with partial pivoting, for solving one matrix
/// against many right-hand sides.
pub(crate) struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors `a` in place. Returns `None` when `a` is singular to working
    /// precision.
    pub fn factor(a: Array2<f64>) -> Option<Lu> {
        let n = a.nrows();
        debug_assert_eq!(a.ncols(), n);
        let mut m = a;
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
                .unwrap();
            if m[[pivot_row, col]].abs() <= SINGULAR_TOL {
                return None;
            }
            if pivot_row != col {
                for k in 0..n {
                    m.swap([pivot_row, k], [col, k]);
                }
                perm.swap(pivot_row, col);
            }
            let pivot = m[[col, col]];
            for row in col + 1..n {
                let factor = m[[row, col]] / pivot;
                // Store the multiplier where the eliminated entry was.
                m[[row, col]] = factor;
                if factor == 0.0 {
                    continue;
                }
                for k in col + 1..n {
                    m[[row, k]] -= factor * m[[col, k]];
                }
            }
        }
        Some(Lu { lu: m, perm })
    }

    /// Solves `a x = b` using the stored factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for col in 0..n {
            for row in col + 1..n {
                x[row] -= self.lu[[row, col]] * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut acc = x[col];
            for k in col + 1..n {
                acc -= self.lu[[col, k]] * x[k];
            }
            x[col] = acc / self.lu[[col, col]];
        }
        x
    }
}
