use nalgebra::{SymmetricEigen, SVD};

use super::{Matrix, RngStream, Vector, POWER_MAX_ITER};
use crate::error::{Error, Result};

/// Absolute values sorted in nonincreasing order.
pub fn nonincreasing_rearrangement(x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    out.sort_unstable_by(|a, b| b.total_cmp(a));
    out
}

/// Soft thresholding `S_t(u)`: shrinks `|u|` by `t`, zero inside `[-t, t]`.
pub fn soft_threshold(u: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("soft threshold level must be >= 0, got {t}")));
    }
    Ok(shrink(u, t))
}

#[inline]
pub(crate) fn shrink(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Largest singular value by power iteration on `A^T A`.
///
/// The start vector is a fixed Gaussian draw from stream `(0, 0)`; if it
/// happens to lie in the kernel of `A` it is replaced by coordinate vectors
/// until one is not. Stops when the Rayleigh quotient changes by less than
/// `tol` relative, or after [`POWER_MAX_ITER`] iterations. Returns 0 for a
/// zero matrix.
pub fn operator_norm(a: &Matrix, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 || a.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut rng = RngStream::new(0, 0);
    let mut start = Vector::from_fn(n, |_, _| rng.gaussian());
    start.normalize_mut();
    let mut av = a * &start;
    let mut fallback = 0;
    while av.norm() == 0.0 && fallback < n {
        start = Vector::zeros(n);
        start[fallback] = 1.0;
        av = a * &start;
        fallback += 1;
    }
    let mut lambda = av.norm_squared();
    for _ in 0..POWER_MAX_ITER {
        let mut w = a.tr_mul(&av);
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        w /= wn;
        av = a * &w;
        let next = av.norm_squared();
        let done = (next - lambda).abs() <= tol * next;
        lambda = next;
        if done {
            break;
        }
    }
    lambda.sqrt()
}

/// Singular values of `a`, in nonincreasing order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_unstable_by(|x, y| y.total_cmp(x));
    sv
}

/// Smallest singular value above `tol * sigma_max`, or `None` for a zero matrix.
pub fn smallest_nonzero_singular_value(a: &Matrix, tol: f64) -> Option<f64> {
    let sv = singular_values(a);
    let top = *sv.first()?;
    sv.into_iter().rfind(|&s| s > tol * top)
}

/// Orthonormal basis of the null space of `a`, as the columns of an
/// `n x k` matrix.
///
/// Rank counts singular values strictly above `tol * sigma_max`. Wide
/// matrices are padded with zero rows so the SVD yields the full right
/// singular basis.
pub fn kernel_basis(a: &Matrix, tol: f64) -> Matrix {
    let (m, n) = a.shape();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let padded = if m < n {
        let mut p = Matrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol * top;
    let null_rows: Vec<usize> = (0..v_t.nrows())
        .filter(|&i| !(svd.singular_values[i] > cutoff))
        .collect();
    let mut basis = Matrix::zeros(n, null_rows.len());
    for (j, &i) in null_rows.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    basis
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
/// Eigenvalues below `floor` are clamped to `floor`.
pub fn symmetric_sqrt(s: &Matrix, floor: f64) -> Matrix {
    let eig = SymmetricEigen::new(s.clone());
    let roots = eig.eigenvalues.map(|l| l.max(floor).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}
