//! Dictionaries `D = [d_1, ..., d_n]` in `R^{d x n}`.

use std::path::PathBuf;
use std::sync::OnceLock;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, RngStream, DEFAULT_POWER_TOL};

/// Largest number of `d x d` determinants a full-spark check may evaluate.
pub const FULL_SPARK_BUDGET: u128 = 1_000_000;

/// Relative determinant threshold of the full-spark check.
pub const FULL_SPARK_DET_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictionaryKind {
    /// i.i.d. standard normal entries, columns rescaled to unit norm.
    GaussianUnitNorm,
    /// The `d x d` identity (requires `n = d`).
    Identity,
    /// Random matrix with orthonormal rows, so `D D^T = I_d`.
    ParsevalRandom,
    /// A matrix read from the text matrix format.
    UserMatrix { path: PathBuf },
}

/// A dictionary with its column-norm bound `rho = max_i ||d_i||^2` and
/// operator norm cached at construction.
#[derive(Debug)]
pub struct Dictionary {
    matrix: Matrix,
    rho: f64,
    op_norm: f64,
    full_spark: OnceLock<bool>,
}

impl Clone for Dictionary {
    fn clone(&self) -> Self {
        let full_spark = OnceLock::new();
        if let Some(&v) = self.full_spark.get() {
            let _ = full_spark.set(v);
        }
        Dictionary {
            matrix: self.matrix.clone(),
            rho: self.rho,
            op_norm: self.op_norm,
            full_spark,
        }
    }
}

impl Dictionary {
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dictionary entries must be finite"));
        }
        let rho = matrix.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
        let op_norm = numerics::operator_norm(&matrix, DEFAULT_POWER_TOL);
        Ok(Dictionary {
            matrix,
            rho,
            op_norm,
            full_spark: OnceLock::new(),
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::from_matrix(Matrix::identity(d, d)).expect("identity is finite")
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// Ambient (signal) dimension.
    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of atoms.
    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm()).collect()
    }

    /// Cached [`full_spark_check`].
    pub fn is_full_spark(&self) -> Result<bool> {
        if let Some(&v) = self.full_spark.get() {
            return Ok(v);
        }
        let v = full_spark_check(self)?;
        let _ = self.full_spark.set(v);
        Ok(v)
    }
}

pub fn make_dictionary(kind: &DictionaryKind, d: usize, n: usize, rng: &mut RngStream) -> Result<Dictionary> {
    if d == 0 {
        return Err(Error::invalid("dictionary needs d >= 1"));
    }
    match kind {
        DictionaryKind::Identity => {
            if n != d {
                return Err(Error::dim(format!("identity dictionary needs n = d, got d={d}, n={n}")));
            }
            Ok(Dictionary::identity(d))
        }
        DictionaryKind::GaussianUnitNorm => {
            if n < d {
                return Err(Error::dim(format!("gaussian_unit_norm needs n >= d, got d={d}, n={n}")));
            }
            let mut m = Matrix::from_fn(d, n, |_, _| rng.gaussian());
            for mut col in m.column_iter_mut() {
                let norm = col.norm();
                col /= norm;
            }
            Dictionary::from_matrix(m)
        }
        DictionaryKind::ParsevalRandom => {
            if n < d {
                return Err(Error::dim(format!("parseval_random needs n >= d, got d={d}, n={n}")));
            }
            // rows of D are the orthonormal columns of Q in G^T = QR
            let g = Matrix::from_fn(n, d, |_, _| rng.gaussian());
            let q = g.qr().q();
            Dictionary::from_matrix(q.transpose())
        }
        DictionaryKind::UserMatrix { path } => {
            let m = numerics::read_matrix(path)?;
            if m.shape() != (d, n) {
                return Err(Error::dim(format!(
                    "{} holds a {}x{} matrix, expected {d}x{n}",
                    path.display(),
                    m.nrows(),
                    m.ncols()
                )));
            }
            Dictionary::from_matrix(m)
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    acc
}

/// True iff every `d x d` column submatrix is nonsingular, judged by
/// `|det| > 1e-10 * prod(column norms)`.
///
/// Refuses with [`Error::BudgetExceeded`] when `C(n, d)` exceeds
/// [`FULL_SPARK_BUDGET`]. A dictionary with fewer than `d` atoms cannot span
/// `R^d` and is reported as not full spark.
pub fn full_spark_check(dict: &Dictionary) -> Result<bool> {
    let (d, n) = (dict.d(), dict.n());
    if n < d {
        return Ok(false);
    }
    let needed = binomial(n, d);
    if needed > FULL_SPARK_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "full-spark check",
            needed,
            budget: FULL_SPARK_BUDGET,
        });
    }
    let norms = dict.column_norms();
    let m = dict.matrix();
    let full = (0..n).combinations(d).all(|cols| {
        let sub = m.select_columns(&cols);
        let scale: f64 = cols.iter().map(|&j| norms[j]).product();
        sub.determinant().abs() > FULL_SPARK_DET_TOL * scale
    });
    Ok(full)
}
