use std::fmt;

use thiserror::Error;

use crate::{Matrix, MatrixField, Vector, VectorField};

/// Tolerance for `f(0) = 0` and similar "vanishes at the origin" checks.
pub const ORIGIN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state and input dimensions must be positive (got n={n}, m={m})")]
    ZeroDimension { n: usize, m: usize },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("drift does not vanish at the origin: ‖f(0)‖ = {0:e}")]
    DriftAtOrigin(f64),
    #[error("{what} does not vanish at the origin (value {value:e})")]
    NonzeroAtOrigin { what: &'static str, value: f64 },
    #[error("{what} is not positive definite: value {value:e} at a sampled nonzero state")]
    NotPositiveDefinite { what: &'static str, value: f64 },
    #[error("class-K function is not strictly increasing near s = {0}")]
    NotIncreasing(f64),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// State and input dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    n: usize,
    m: usize,
}

impl SystemDims {
    pub fn new(n: usize, m: usize) -> Result<Self, ModelError> {
        if n == 0 || m == 0 {
            return Err(ModelError::ZeroDimension { n, m });
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

impl fmt::Display for SystemDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}, m={}", self.n, self.m)
    }
}

/// A control-affine system `x' = f(x) + g(x) u` with `f(0) = 0`.
#[derive(Clone)]
pub struct AffineDynamics {
    dims: SystemDims,
    f: VectorField,
    g: MatrixField,
}

impl fmt::Debug for AffineDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineDynamics").field("dims", &self.dims).finish()
    }
}

impl AffineDynamics {
    /// Wraps `f` and `g`, checking shapes and `f(0) = 0` at the origin.
    pub fn new(dims: SystemDims, f: VectorField, g: MatrixField) -> Result<Self, ModelError> {
        let origin = Vector::zeros(dims.n());
        let f0 = f(&origin);
        if f0.len() != dims.n() {
            return Err(ModelError::DimensionMismatch {
                what: "drift f",
                expected: dims.n().to_string(),
                got: f0.len().to_string(),
            });
        }
        let g0 = g(&origin);
        if g0.shape() != (dims.n(), dims.m()) {
            return Err(ModelError::DimensionMismatch {
                what: "input matrix g",
                expected: format!("{}x{}", dims.n(), dims.m()),
                got: format!("{}x{}", g0.nrows(), g0.ncols()),
            });
        }
        let norm = f0.norm();
        if !(norm <= ORIGIN_TOL) {
            return Err(ModelError::DriftAtOrigin(norm));
        }
        Ok(Self { dims, f, g })
    }

    /// Linear time-invariant system `x' = A x + B u`.
    pub fn linear(a: Matrix, b: Matrix) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n {
            return Err(ModelError::DimensionMismatch {
                what: "linear system matrices",
                expected: format!("A {n}x{n}, B {n}xm"),
                got: format!(
                    "A {}x{}, B {}x{}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols()
                ),
            });
        }
        let dims = SystemDims::new(n, b.ncols())?;
        let g = b.clone();
        Self::new(
            dims,
            std::sync::Arc::new(move |x: &Vector| &a * x),
            std::sync::Arc::new(move |_: &Vector| g.clone()),
        )
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn drift(&self, x: &Vector) -> Vector {
        (self.f)(x)
    }

    pub fn input_matrix(&self, x: &Vector) -> Matrix {
        (self.g)(x)
    }

    /// `f(x) + g(x) u`.
    pub fn velocity(&self, x: &Vector, u: &Vector) -> Vector {
        let mut v = self.drift(x);
        v.gemv(1.0, &self.input_matrix(x), u, 1.0);
        v
    }

    pub fn drift_field(&self) -> VectorField {
        self.f.clone()
    }

    pub fn input_field(&self) -> MatrixField {
        self.g.clone()
    }
}

pub(crate) fn check_len(what: &'static str, v: &Vector, expected: usize) -> Result<(), ModelError> {
    if v.len() != expected {
        return Err(ModelError::DimensionMismatch {
            what,
            expected: expected.to_string(),
            got: v.len().to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn zero_dimensions_rejected() {
        assert!(SystemDims::new(0, 1).is_err());
        assert!(SystemDims::new(2, 0).is_err());
        assert_eq!(SystemDims::new(2, 3).unwrap().m(), 3);
    }

    #[test]
    fn drift_must_vanish_at_origin() {
        let dims = SystemDims::new(1, 1).unwrap();
        let bad = AffineDynamics::new(
            dims,
            Arc::new(|x: &Vector| x.add_scalar(1.0)),
            Arc::new(|_: &Vector| Matrix::identity(1, 1)),
        );
        assert!(matches!(bad, Err(ModelError::DriftAtOrigin(_))));
    }

    #[test]
    fn input_matrix_shape_checked() {
        let dims = SystemDims::new(2, 1).unwrap();
        let bad = AffineDynamics::new(
            dims,
            Arc::new(|x: &Vector| x.clone()),
            Arc::new(|_: &Vector| Matrix::identity(2, 2)),
        );
        assert!(matches!(bad, Err(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn linear_velocity() {
        let sys = AffineDynamics::linear(Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
        let v = sys.velocity(&Vector::from_vec(vec![1.0, 2.0]), &Vector::from_vec(vec![-1.0, 0.5]));
        assert_eq!(v, Vector::from_vec(vec![0.0, 2.5]));
    }
}
