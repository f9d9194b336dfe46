//! Small dense linear-algebra helpers.

use ndarray::Array2;

/// Dense linear solve with partial pivoting; `None` when singular.
pub(crate) fn gaussian_solve(mut a: Array2<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r1, &r2| a[[r1, col]].abs().total_cmp(&a[[r2, col]].abs()))?;
        if a[[piv, col]].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[piv, c]];
                a[[piv, c]] = tmp;
            }
            b.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = a[[r, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[[r, c]] -= f * a[[col, c]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in (r + 1)..n {
            acc -= a[[r, c]] * x[c];
        }
        x[r] = acc / a[[r, r]];
    }
    Some(x)
}

