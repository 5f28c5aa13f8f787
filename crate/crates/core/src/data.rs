//! Observed-data container and the per-estimator report type.

use crate::num::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, thiserror::Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("length mismatch: w has {w} rows, a has {a}, y has {y}")]
    LengthMismatch { w: usize, a: usize, y: usize },
    #[error("non-binary value {value} in column `{column}` at row {row}")]
    NonBinary {
        column: &'static str,
        row: usize,
        value: f64,
    },
    #[error("csv error at row {row}, column `{column}`: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },
    #[error("io error: {0}")]
    Io(String),
}

/// n observations of (W1, W2, A, Y) plus the RNG seed they came from
/// (0 for externally supplied data). Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dataset<S: Scalar> {
    w: Vec<[S; 2]>,
    a: Vec<u8>,
    y: Vec<u8>,
    seed: u64,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(w: Vec<[S; 2]>, a: Vec<u8>, y: Vec<u8>, seed: u64) -> Result<Self, DataError> {
        if w.is_empty() {
            return Err(DataError::Empty);
        }
        if w.len() != a.len() || w.len() != y.len() {
            return Err(DataError::LengthMismatch {
                w: w.len(),
                a: a.len(),
                y: y.len(),
            });
        }
        for (i, &v) in a.iter().enumerate() {
            if v > 1 {
                return Err(DataError::NonBinary {
                    column: "a",
                    row: i,
                    value: v as f64,
                });
            }
        }
        for (i, &v) in y.iter().enumerate() {
            if v > 1 {
                return Err(DataError::NonBinary {
                    column: "y",
                    row: i,
                    value: v as f64,
                });
            }
        }
        Ok(Self { w, a, y, seed })
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self, i: usize) -> [S; 2] {
        self.w[i]
    }

    pub fn rows(&self) -> &[[S; 2]] {
        &self.w
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the `w1,w2,a,y` CSV form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["w1", "w2", "a", "y"])
            .map_err(|e| DataError::Io(e.to_string()))?;
        for i in 0..self.n() {
            wtr.write_record([
                format!("{}", self.w[i][0]),
                format!("{}", self.w[i][1]),
                format!("{}", self.a[i]),
                format!("{}", self.y[i]),
            ])
            .map_err(|e| DataError::Io(e.to_string()))?;
        }
        wtr.flush().map_err(|e| DataError::Io(e.to_string()))?;
        Ok(())
    }

    /// Reads the `w1,w2,a,y` CSV form, naming row and column on failure.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let headers = rdr
            .headers()
            .map_err(|e| DataError::Io(e.to_string()))?
            .clone();
        let expected = ["w1", "w2", "a", "y"];
        for (k, name) in expected.iter().enumerate() {
            if headers.get(k).map(str::trim) != Some(*name) {
                return Err(DataError::Csv {
                    row: 0,
                    column: name.to_string(),
                    message: format!(
                        "expected header `w1,w2,a,y`, got `{}`",
                        headers.iter().collect::<Vec<_>>().join(",")
                    ),
                });
            }
        }
        let mut w = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let row = idx + 1;
            let rec = rec.map_err(|e| DataError::Csv {
                row,
                column: String::new(),
                message: e.to_string(),
            })?;
            let field = |k: usize, name: &str| -> Result<f64, DataError> {
                rec.get(k)
                    .ok_or_else(|| DataError::Csv {
                        row,
                        column: name.to_string(),
                        message: "missing field".into(),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| DataError::Csv {
                        row,
                        column: name.to_string(),
                        message: e.to_string(),
                    })
            };
            let w1 = field(0, "w1")?;
            let w2 = field(1, "w2")?;
            let av = field(2, "a")?;
            let yv = field(3, "y")?;
            for (name, v) in [("a", av), ("y", yv)] {
                if v != 0.0 && v != 1.0 {
                    return Err(DataError::NonBinary {
                        column: if name == "a" { "a" } else { "y" },
                        row,
                        value: v,
                    });
                }
            }
            w.push([S::cast(w1), S::cast(w2)]);
            a.push(av as u8);
            y.push(yv as u8);
        }
        Dataset::new(w, a, y, 0)
    }
}

/// Point estimate with EIF-based inference and targeting diagnostics.
/// `se`/CI are absent for the non-targeted plug-ins.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EstimateReport<S: Scalar> {
    pub psi_hat: S,
    pub se: Option<S>,
    pub ci_lower: Option<S>,
    pub ci_upper: Option<S>,
    /// Empirical mean of the estimated EIF (the plug-in-bias diagnostic).
    pub eif_mean: S,
    /// Largest absolute targeted score mean at convergence (0 for plug-ins).
    pub max_score_residual: S,
    pub iterations: usize,
}
