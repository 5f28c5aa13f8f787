//! Minimal dense symmetric linear algebra for the unpenalized refits.

use crate::num::Scalar;

/// Cholesky factorization of a symmetric positive-definite matrix stored
/// row-major. Returns the lower factor, or None when a pivot is not
/// strictly positive.
pub fn cholesky<S: Scalar>(a: &[S], p: usize) -> Option<Vec<S>> {
    debug_assert_eq!(a.len(), p * p);
    let mut l = vec![S::zero(); p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= S::zero() {
                    return None;
                }
                l[i * p + j] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Some(l)
}

/// Solves A x = b given the lower Cholesky factor of A.
pub fn cholesky_solve<S: Scalar>(l: &[S], p: usize, b: &[S]) -> Vec<S> {
    let mut x = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            let t = l[i * p + k] * x[k];
            x[i] -= t;
        }
        x[i] = x[i] / l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            let t = l[k * p + i] * x[k];
            x[i] -= t;
        }
        x[i] = x[i] / l[i * p + i];
    }
    x
}

/// Greedy rank detection in fixed column order: processes columns left to
/// right, dropping any whose residual diagonal after projection on the
/// kept columns falls below `rel_tol` times its original diagonal.
/// Returns the kept-column mask.
pub fn independent_columns<S: Scalar>(gram: &[S], p: usize, rel_tol: S) -> Vec<bool> {
    // Incremental Cholesky over kept columns only.
    let mut keep = vec![false; p];
    let mut l: Vec<Vec<S>> = Vec::new(); // rows of L restricted to kept columns
    let mut kept_idx: Vec<usize> = Vec::new();
    for j in 0..p {
        let diag = gram[j * p + j];
        if diag <= S::zero() {
            continue;
        }
        // compute row of L for column j against previously kept columns
        let mut row = Vec::with_capacity(kept_idx.len());
        for (m, &k) in kept_idx.iter().enumerate() {
            let mut sum = gram[j * p + k];
            for t in 0..m {
                sum -= row[t] * l[m][t];
            }
            row.push(sum / l[m][m]);
        }
        let mut resid = diag;
        for v in &row {
            resid -= *v * *v;
        }
        if resid > rel_tol * diag {
            row.push(resid.sqrt());
            l.push(row);
            kept_idx.push(j);
            keep[j] = true;
        }
    }
    keep
}
