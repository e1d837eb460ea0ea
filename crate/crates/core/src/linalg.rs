//! Small dense helpers.

use crate::{Matrix, Vector};

/// Largest singular value, computed as the square root of the largest
/// eigenvalue of `AᵀA`.
pub fn sigma_max(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = a.transpose() * a;
    let eig = nalgebra::SymmetricEigen::new(gram);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Operator (spectral) norm. Used for `‖g − ĝ‖` and `‖ĝ‖`.
pub fn spectral_norm(a: &Matrix) -> f64 {
    sigma_max(a)
}

/// `a[I_m; 0ᵀ]`, the `(m+1)×m` matrix of the worst-case embedding.
pub fn scaled_stacked_identity(a: f64, m: usize) -> Matrix {
    let mut q = Matrix::zeros(m + 1, m);
    for i in 0..m {
        q[(i, i)] = a;
    }
    q
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`, retrying with
/// growing diagonal shifts when the Cholesky factorization fails.
pub(crate) fn solve_spd(a: &Matrix, b: &Vector) -> Option<Vector> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let scale = a.diagonal().iter().map(|d| d.abs()).fold(1e-300, f64::max);
    let mut shift = scale * 1e-14;
    for _ in 0..12 {
        let mut shifted = a.clone();
        for i in 0..a.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(b));
        }
        shift *= 100.0;
    }
    None
}
