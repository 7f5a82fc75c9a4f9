//! Seeded fixtures shared by the criterion benches.

use nsplab_core::dictionary::{make_dictionary, Dictionary, DictionaryKind};
use nsplab_core::numerics::{Matrix, RngStream, Vector};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = RngStream::new(seed, 0);
    Matrix::from_fn(rows, cols, |_, _| rng.gaussian())
}

pub fn gaussian_vector(len: usize, seed: u64) -> Vector {
    let mut rng = RngStream::new(seed, 1);
    Vector::from_fn(len, |_, _| rng.gaussian())
}

pub fn unit_norm_dictionary(d: usize, n: usize, seed: u64) -> Dictionary {
    let mut rng = RngStream::new(seed, 2);
    make_dictionary(&DictionaryKind::GaussianUnitNorm, d, n, &mut rng).expect("valid shape")
}

/// `y = B x0` for an `s`-sparse `x0` on the leading coordinates.
pub fn sparse_system(m: usize, n: usize, s: usize, seed: u64) -> (Matrix, Vector) {
    let b = gaussian_matrix(m, n, seed);
    let mut x0 = Vector::zeros(n);
    for i in 0..s {
        x0[i] = 1.0 + i as f64;
    }
    let y = &b * x0;
    (b, y)
}
