//! Data-adaptive zero-order spline basis over (W1, W2).
//!
//! Main-effect columns are indicators 1(w_j >= knot) at observed values;
//! interaction columns are products of the two indicators at observed row
//! pairs. Left-closed indicators give right-continuous fits.

use crate::data::Dataset;
use crate::num::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// The basis map: knot sets plus a stable column ordering.
///
/// Column order: intercept (when present), W1 main knots ascending, W2 main
/// knots ascending, interaction pairs in lexicographic order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BasisExpansion<S: Scalar> {
    pub w1_knots: Vec<S>,
    pub w2_knots: Vec<S>,
    pub interaction_knots: Vec<[S; 2]>,
    pub include_intercept: bool,
}

impl<S: Scalar> BasisExpansion<S> {
    /// Total number of basis columns d~.
    pub fn n_columns(&self) -> usize {
        usize::from(self.include_intercept)
            + self.w1_knots.len()
            + self.w2_knots.len()
            + self.interaction_knots.len()
    }

    /// Evaluates every column at (w1, w2); entries are exactly 0 or 1.
    pub fn evaluate(&self, w1: S, w2: S) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.n_columns());
        if self.include_intercept {
            out.push(1);
        }
        for &k in &self.w1_knots {
            out.push(u8::from(w1 >= k));
        }
        for &k in &self.w2_knots {
            out.push(u8::from(w2 >= k));
        }
        for &[k1, k2] in &self.interaction_knots {
            out.push(u8::from(w1 >= k1 && w2 >= k2));
        }
        out
    }
}

fn sorted_dedup<S: Scalar>(mut v: Vec<S>) -> Vec<S> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite knot values"));
    v.dedup();
    v
}

/// Builds the saturated basis from the observed values: per-coordinate main
/// knots plus same-row interaction pairs, duplicates collapsed.
pub fn build_basis<S: Scalar>(data: &Dataset<S>) -> BasisExpansion<S> {
    let w1 = sorted_dedup(data.rows().iter().map(|r| r[0]).collect());
    let w2 = sorted_dedup(data.rows().iter().map(|r| r[1]).collect());
    let mut pairs: Vec<[S; 2]> = data.rows().to_vec();
    pairs.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .expect("finite knot values")
            .then(a[1].partial_cmp(&b[1]).expect("finite knot values"))
    });
    pairs.dedup();
    BasisExpansion {
        w1_knots: w1,
        w2_knots: w2,
        interaction_knots: pairs,
        include_intercept: true,
    }
}

/// Sparse binary column: sorted indices of the rows where the entry is 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseCol {
    pub rows: Vec<u32>,
}

/// Design matrix of the basis on a dataset, with exact duplicate columns
/// merged. `col_map[j]` sends original basis column j to its kept column;
/// `representatives[k]` is one original column index evaluating to kept
/// column k (used to predict on new points).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub cols: Vec<SparseCol>,
    pub col_map: Vec<usize>,
    pub representatives: Vec<usize>,
}

impl DesignMatrix {
    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Linear predictor X beta for a coefficient vector over kept columns.
    pub fn linear_predictor<S: Scalar>(&self, beta: &[S]) -> Vec<S> {
        assert_eq!(beta.len(), self.cols.len());
        let mut eta = vec![S::zero(); self.n_rows];
        for (j, col) in self.cols.iter().enumerate() {
            let b = beta[j];
            if b != S::zero() {
                for &i in &col.rows {
                    eta[i as usize] += b;
                }
            }
        }
        eta
    }
}

/// Evaluates the basis on every row and dedups identical columns.
pub fn design_matrix<S: Scalar>(basis: &BasisExpansion<S>, data: &Dataset<S>) -> DesignMatrix {
    let n = data.n();
    let d = basis.n_columns();
    let mut raw: Vec<Vec<u32>> = vec![Vec::new(); d];
    for i in 0..n {
        let row = basis.evaluate(data.w(i)[0], data.w(i)[1]);
        for (j, &v) in row.iter().enumerate() {
            if v == 1 {
                raw[j].push(i as u32);
            }
        }
    }
    let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut cols = Vec::new();
    let mut col_map = Vec::with_capacity(d);
    let mut representatives = Vec::new();
    for (j, rows) in raw.into_iter().enumerate() {
        match seen.get(&rows) {
            Some(&k) => col_map.push(k),
            None => {
                let k = cols.len();
                seen.insert(rows.clone(), k);
                cols.push(SparseCol { rows });
                col_map.push(k);
                representatives.push(j);
            }
        }
    }
    DesignMatrix {
        n_rows: n,
        cols,
        col_map,
        representatives,
    }
}
