//! The planar benchmark: `x' = x + u` on `ℝ²` with the disk of radius 2
//! around `(0, 4)` as the unsafe set.

use std::sync::Arc;

use crate::certificate::{Barrier, CbfSpec, ClfSpec};
use crate::estimation::LipschitzConstants;
use crate::system::{AffineDynamics, SystemDims};
use crate::{Matrix, Vector};

/// Initial condition of the offline study.
pub const X0: [f64; 2] = [2.0, 6.0];
/// Lipschitz constants assumed for the nearest-neighbor error bounds.
pub const K_F: f64 = 3.0;
pub const K_G: f64 = 0.5;
/// Center and radius of the unsafe disk.
pub const OBSTACLE_CENTER: [f64; 2] = [0.0, 4.0];
pub const OBSTACLE_RADIUS: f64 = 2.0;
/// Default robustness margin `η_h` used with this barrier.
pub const DEFAULT_ETA_H: f64 = 0.5;

pub fn dims() -> SystemDims {
    SystemDims::new(2, 2).expect("planar dims")
}

/// `f(x) = x`, `g(x) = I₂`.
pub fn dynamics() -> AffineDynamics {
    AffineDynamics::linear(Matrix::identity(2, 2), Matrix::identity(2, 2))
        .expect("planar system is well formed")
}

/// `h(x, y) = x² + (y − 4)² − 4`.
pub fn barrier() -> Barrier {
    let [cx, cy] = OBSTACLE_CENTER;
    let r2 = OBSTACLE_RADIUS * OBSTACLE_RADIUS;
    Barrier::new(
        Arc::new(move |x: &Vector| (x[0] - cx).powi(2) + (x[1] - cy).powi(2) - r2),
        Arc::new(move |x: &Vector| Vector::from_vec(vec![2.0 * (x[0] - cx), 2.0 * (x[1] - cy)])),
    )
}

pub fn clf() -> ClfSpec {
    ClfSpec::quadratic(2)
}

/// `α(s) = s`, `η_h = 0.5`, `ζ ≡ 0`.
pub fn cbf() -> CbfSpec {
    CbfSpec::with_margin(DEFAULT_ETA_H).expect("nonnegative margin")
}

pub fn lipschitz() -> LipschitzConstants {
    LipschitzConstants::new(K_F, K_G).expect("positive constants")
}

pub fn x0() -> Vector {
    Vector::from_vec(X0.to_vec())
}

/// Whether `x` lies in the open unsafe disk.
pub fn in_obstacle(x: &Vector) -> bool {
    barrier().value(x) < 0.0
}
