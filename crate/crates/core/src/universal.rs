//! Closed-form controller for a single SOCC `‖Qu + r‖ ≤ bu + c`.
//!
//! With `b̃ = b(QᵀQ)⁻¹Qᵀ`, `c̃ = c − b̃r` and `b̄ = (‖b̃‖ − 1)‖b̃‖`,
//!
//! ```text
//! v_s = 0                                  if ‖b̃‖ ≤ 1
//! v_s = ((−c̃ + √(c̃² + b̄²)) / b̄) b̃ᵀ       otherwise
//! u_s = (QᵀQ)⁻¹Qᵀ(v_s − r)
//! ```
//!
//! satisfies the constraint whenever it is strictly feasible and
//! `v_s − r ∈ Im(Q)`.

use thiserror::Error;

use crate::constraints::Socc;
use crate::socp::{phase1, SoccProgram, SolverConfig, SolverError};
use crate::{Matrix, Vector};

pub const DEFAULT_IM_TOL: f64 = 1e-9;
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UniversalError {
    #[error("QᵀQ is singular or ill-conditioned (condition number {condition:e})")]
    SingularQ { condition: f64 },
    #[error("v_s − r is {residual:e} away from Im(Q)")]
    ImageConditionViolated { residual: f64 },
    #[error("the constraint is not strictly feasible (phase-I value {t_star})")]
    NotStrictlyFeasible { t_star: f64 },
    #[error("‖b̃‖ = 1 with c̃ = 0 is excluded")]
    DegenerateBoundary,
    #[error("the affine shortcut needs Q = 0")]
    NotAffine,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniversalIntermediates {
    pub tilde_b: Vector,
    pub tilde_c: f64,
    pub bar_b: f64,
    pub v_s: Vector,
    pub u_s: Vector,
    pub im_residual: f64,
}

struct Pseudo {
    /// `(QᵀQ)⁻¹`
    gram_inv: Matrix,
}

impl Pseudo {
    fn new(q: &Matrix) -> Result<Self, UniversalError> {
        let gram = q.tr_mul(q);
        let eig = nalgebra::SymmetricEigen::new(gram.clone());
        let hi = eig.eigenvalues.max();
        let lo = eig.eigenvalues.min();
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(hi > 0.0) || !(condition <= MAX_CONDITION) {
            return Err(UniversalError::SingularQ { condition });
        }
        let gram_inv = gram
            .cholesky()
            .ok_or(UniversalError::SingularQ { condition })?
            .inverse();
        Ok(Self { gram_inv })
    }

    /// `(QᵀQ)⁻¹Qᵀ y`
    fn apply(&self, q: &Matrix, y: &Vector) -> Vector {
        &self.gram_inv * q.tr_mul(y)
    }

    /// `‖(I − Q(QᵀQ)⁻¹Qᵀ) y‖`
    fn off_image(&self, q: &Matrix, y: &Vector) -> f64 {
        (y - q * self.apply(q, y)).norm()
    }
}

/// `κ = (−c̃ + √(c̃² + b̄²)) / b̄`, evaluated without cancellation.
fn scale_factor(tilde_c: f64, bar_b: f64) -> f64 {
    let root = tilde_c.hypot(bar_b);
    if tilde_c >= 0.0 {
        bar_b / (tilde_c + root)
    } else {
        (root - tilde_c) / bar_b
    }
}

fn intermediates(s: &Socc, pinv: &Pseudo) -> Result<UniversalIntermediates, UniversalError> {
    let q = s.q();
    // b̃ᵀ = Q(QᵀQ)⁻¹bᵀ
    let tilde_b = q * (&pinv.gram_inv * s.b());
    let tilde_c = s.c() - tilde_b.dot(s.r());
    let nb = tilde_b.norm();
    let bar_b = (nb - 1.0) * nb;
    if (nb - 1.0).abs() <= 1e-14 && tilde_c.abs() <= 1e-14 {
        return Err(UniversalError::DegenerateBoundary);
    }
    let v_s = if nb <= 1.0 {
        Vector::zeros(q.nrows())
    } else {
        &tilde_b * scale_factor(tilde_c, bar_b)
    };
    let shifted = &v_s - s.r();
    let u_s = pinv.apply(q, &shifted);
    let im_residual = pinv.off_image(q, &shifted);
    Ok(UniversalIntermediates {
        tilde_b,
        tilde_c,
        bar_b,
        v_s,
        u_s,
        im_residual,
    })
}

/// The universal controller `u_s` and its intermediate quantities.
pub fn universal_control(
    s: &Socc,
    im_tol: f64,
) -> Result<(Vector, UniversalIntermediates), UniversalError> {
    let pinv = Pseudo::new(s.q())?;
    let it = intermediates(s, &pinv)?;
    if it.im_residual > im_tol {
        return Err(UniversalError::ImageConditionViolated {
            residual: it.im_residual,
        });
    }
    Ok((it.u_s.clone(), it))
}

/// [`universal_control`] after certifying strict feasibility with phase I.
pub fn universal_control_checked(
    s: &Socc,
    im_tol: f64,
    cfg: &SolverConfig,
) -> Result<(Vector, UniversalIntermediates), UniversalError> {
    let prog = SoccProgram::new(vec![s.clone()])?;
    let p1 = phase1(&prog, cfg)?;
    if !p1.strictly_feasible(cfg) {
        return Err(UniversalError::NotStrictlyFeasible { t_star: p1.t_star });
    }
    universal_control(s, im_tol)
}

/// `‖(I − Q(QᵀQ)⁻¹Qᵀ)(v_s − r)‖`.
pub fn check_image_condition(s: &Socc) -> Result<f64, UniversalError> {
    let pinv = Pseudo::new(s.q())?;
    Ok(intermediates(s, &pinv)?.im_residual)
}

/// Controller for constraints with `Q = 0`, i.e. `‖r‖ ≤ bu + c`: the origin
/// when it is feasible, otherwise the projection onto the half-space.
pub fn affine_control(s: &Socc) -> Result<Vector, UniversalError> {
    if s.q().iter().any(|&v| v != 0.0) {
        return Err(UniversalError::NotAffine);
    }
    let need = s.r().norm() - s.c();
    if need <= 0.0 {
        return Ok(Vector::zeros(s.m()));
    }
    let nb2 = s.b().norm_squared();
    if nb2 == 0.0 {
        return Err(UniversalError::NotStrictlyFeasible { t_star: need });
    }
    Ok(s.b() * (need / nb2))
}

/// Closed form for the worst-case constraint `a‖u‖ ≤ bu + c` with `a > 0`:
/// `u_s = κ b / a²` when `‖b‖ > a`, else `0`.
pub fn worstcase_universal(a: f64, b: &Vector, c: f64) -> Vector {
    let nb = b.norm() / a;
    if nb <= 1.0 {
        return Vector::zeros(b.len());
    }
    let bar_b = (nb - 1.0) * nb;
    b * (scale_factor(c, bar_b) / (a * a))
}
