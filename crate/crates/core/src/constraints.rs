//! Second-order cone constraints `‖Q u + r‖ ≤ b u + c` built at a state from
//! worst-case error bounds or from GP-form mean/deviation terms.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::certificate::{Barrier, CbfSpec, ClfSpec};
use crate::linalg::{scaled_stacked_identity, spectral_norm};
use crate::system::{AffineDynamics, SystemDims};
use crate::{Matrix, MatrixField, ScalarField, Vector, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("negative cone scale a = {0}")]
    NegativeScale(f64),
    #[error("error bound {what} is negative ({value}) at a sampled state")]
    NegativeErrorBound { what: &'static str, value: f64 },
    #[error("invalid GP parameter {name} = {value}")]
    InvalidGpParameter { name: &'static str, value: f64 },
}

fn mismatch(what: &'static str, expected: impl ToString, got: impl ToString) -> ConstraintError {
    ConstraintError::DimensionMismatch {
        what,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// `‖Q u + r‖ ≤ b u + c` with `Q ∈ ℝ^{(m+1)×m}`, `r ∈ ℝ^{m+1}`, `b ∈ ℝ^{1×m}`
/// (stored as a column) and `c ∈ ℝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Socc {
    q: Matrix,
    r: Vector,
    b: Vector,
    c: f64,
}

impl Socc {
    pub fn new(q: Matrix, r: Vector, b: Vector, c: f64) -> Result<Self, ConstraintError> {
        let m = q.ncols();
        if m == 0 {
            return Err(mismatch("Q columns", "m >= 1", 0));
        }
        if q.nrows() != m + 1 {
            return Err(mismatch("Q rows", m + 1, q.nrows()));
        }
        if r.len() != m + 1 {
            return Err(mismatch("r", m + 1, r.len()));
        }
        if b.len() != m {
            return Err(mismatch("b", m, b.len()));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(ConstraintError::NonFinite("Q"));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ConstraintError::NonFinite("r"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ConstraintError::NonFinite("b"));
        }
        if !c.is_finite() {
            return Err(ConstraintError::NonFinite("c"));
        }
        Ok(Self { q, r, b, c })
    }

    /// Affine constraint `0 ≤ b u + c` (zero cone part).
    pub fn affine(b: Vector, c: f64) -> Result<Self, ConstraintError> {
        let m = b.len();
        Self::new(Matrix::zeros(m + 1, m), Vector::zeros(m + 1), b, c)
    }

    pub fn m(&self) -> usize {
        self.q.ncols()
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Vector {
        &self.r
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `‖Q u + r‖ − (b u + c)`; nonpositive iff the constraint holds at `u`.
    pub fn residual(&self, u: &Vector) -> f64 {
        self.residual_slice(u.as_slice())
    }

    /// Allocation-free residual for grid searches.
    pub fn residual_slice(&self, u: &[f64]) -> f64 {
        let m = self.m();
        debug_assert_eq!(u.len(), m);
        let mut sq = 0.0;
        for i in 0..=m {
            let mut z = self.r[i];
            for (j, uj) in u.iter().enumerate() {
                z += self.q[(i, j)] * uj;
            }
            sq += z * z;
        }
        let affine: f64 = self.b.iter().zip(u).map(|(b, u)| b * u).sum::<f64>() + self.c;
        sq.sqrt() - affine
    }
}

impl fmt::Display for Socc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "‖Q u + r‖ ≤ b u + c with Q={:?}, r={:?}, b={:?}, c={}",
            self.q.as_slice(),
            self.r.as_slice(),
            self.b.as_slice(),
            self.c
        )
    }
}

/// `socc_residual`: `‖Q u + r‖ − (b u + c)`.
pub fn socc_residual(s: &Socc, u: &Vector) -> f64 {
    s.residual(u)
}

/// Model quantities evaluated at one state: estimates and their error radii.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub fhat: Vector,
    pub ghat: Matrix,
    pub hhat: f64,
    pub gradh_hat: Vector,
    pub e_f: f64,
    pub e_g: f64,
    pub e_h: f64,
    pub e_gradh: f64,
}

impl ModelEval {
    fn validate(&self, dims: SystemDims) -> Result<(), ConstraintError> {
        if self.fhat.len() != dims.n() {
            return Err(mismatch("f estimate", dims.n(), self.fhat.len()));
        }
        if self.ghat.shape() != (dims.n(), dims.m()) {
            return Err(mismatch(
                "g estimate",
                format!("{}x{}", dims.n(), dims.m()),
                format!("{}x{}", self.ghat.nrows(), self.ghat.ncols()),
            ));
        }
        if self.gradh_hat.len() != dims.n() {
            return Err(mismatch("∇h estimate", dims.n(), self.gradh_hat.len()));
        }
        for (what, value) in [
            ("e_f", self.e_f),
            ("e_g", self.e_g),
            ("e_h", self.e_h),
            ("e_gradh", self.e_gradh),
        ] {
            if !(value >= 0.0) {
                return Err(ConstraintError::NegativeErrorBound { what, value });
            }
        }
        Ok(())
    }
}

/// Estimates `f̂, ĝ, ĥ, ∇ĥ` with pointwise error bounds
/// `‖f − f̂‖ ≤ e_f`, `‖g − ĝ‖ ≤ e_g` (spectral norm), `|h − ĥ| ≤ e_h`,
/// `‖∇h − ∇ĥ‖ ≤ e_∇h`.
pub trait WorstCaseModel: Send + Sync {
    fn dims(&self) -> SystemDims;

    /// Raw evaluation; prefer [`WorstCaseModel::evaluate`], which validates.
    fn eval_unchecked(&self, x: &Vector) -> ModelEval;

    fn evaluate(&self, x: &Vector) -> Result<ModelEval, ConstraintError> {
        if x.len() != self.dims().n() {
            return Err(mismatch("state", self.dims().n(), x.len()));
        }
        let e = self.eval_unchecked(x);
        e.validate(self.dims())?;
        Ok(e)
    }
}

/// A [`WorstCaseModel`] assembled from closures.
#[derive(Clone)]
pub struct FnWorstCaseModel {
    dims: SystemDims,
    pub fhat: VectorField,
    pub ghat: MatrixField,
    pub hhat: ScalarField,
    pub gradh_hat: VectorField,
    pub e_f: ScalarField,
    pub e_g: ScalarField,
    pub e_h: ScalarField,
    pub e_gradh: ScalarField,
}

impl fmt::Debug for FnWorstCaseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnWorstCaseModel").field("dims", &self.dims).finish()
    }
}

fn zero_field() -> ScalarField {
    Arc::new(|_: &Vector| 0.0)
}

fn constant_field(v: f64) -> ScalarField {
    Arc::new(move |_: &Vector| v)
}

impl FnWorstCaseModel {
    /// Exact estimates (all error bounds identically zero).
    pub fn exact(dynamics: &AffineDynamics, barrier: &Barrier) -> Self {
        Self {
            dims: dynamics.dims(),
            fhat: dynamics.drift_field(),
            ghat: dynamics.input_field(),
            hhat: barrier.h.clone(),
            gradh_hat: barrier.grad.clone(),
            e_f: zero_field(),
            e_g: zero_field(),
            e_h: zero_field(),
            e_gradh: zero_field(),
        }
    }

    /// Same estimates with constant error radii.
    pub fn with_constant_errors(mut self, e_f: f64, e_g: f64, e_h: f64, e_gradh: f64) -> Self {
        self.e_f = constant_field(e_f);
        self.e_g = constant_field(e_g);
        self.e_h = constant_field(e_h);
        self.e_gradh = constant_field(e_gradh);
        self
    }

    pub fn with_error_fields(
        mut self,
        e_f: ScalarField,
        e_g: ScalarField,
        e_h: ScalarField,
        e_gradh: ScalarField,
    ) -> Self {
        self.e_f = e_f;
        self.e_g = e_g;
        self.e_h = e_h;
        self.e_gradh = e_gradh;
        self
    }

    pub fn with_estimates(mut self, fhat: VectorField, ghat: MatrixField) -> Self {
        self.fhat = fhat;
        self.ghat = ghat;
        self
    }
}

impl WorstCaseModel for FnWorstCaseModel {
    fn dims(&self) -> SystemDims {
        self.dims
    }

    fn eval_unchecked(&self, x: &Vector) -> ModelEval {
        ModelEval {
            fhat: (self.fhat)(x),
            ghat: (self.ghat)(x),
            hhat: (self.hhat)(x),
            gradh_hat: (self.gradh_hat)(x),
            e_f: (self.e_f)(x),
            e_g: (self.e_g)(x),
            e_h: (self.e_h)(x),
            e_gradh: (self.e_gradh)(x),
        }
    }
}

/// Coefficients `(a, b, c)` of a worst-case constraint `a‖u‖ ≤ b u + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoccCoeffs {
    pub a: f64,
    pub b: Vector,
    pub c: f64,
}

impl SoccCoeffs {
    pub fn embed(&self) -> Result<Socc, ConstraintError> {
        embed_worstcase(self.a, &self.b, self.c, self.b.len())
    }
}

/// Worst-case coefficients of both constraints at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseCoeffs {
    pub clf: SoccCoeffs,
    pub cbf: SoccCoeffs,
}

/// `a_V = ‖∇V‖ e_g`, `b_V = −∇Vᵀ ĝ`, `c_V = −‖∇V‖ e_f − ∇Vᵀ f̂ − W`.
pub fn clf_coeffs_from(eval: &ModelEval, clf: &ClfSpec, x: &Vector) -> Result<SoccCoeffs, ConstraintError> {
    let grad = clf.gradient(x);
    if grad.len() != eval.fhat.len() {
        return Err(mismatch("gradient of V", eval.fhat.len(), grad.len()));
    }
    let gnorm = grad.norm();
    Ok(SoccCoeffs {
        a: gnorm * eval.e_g,
        b: -eval.ghat.tr_mul(&grad),
        c: -gnorm * eval.e_f - grad.dot(&eval.fhat) - clf.decay(x),
    })
}

/// `a_h = e_∇h e_g + e_∇h ‖ĝ‖ + ‖∇ĥ‖ e_g`, `b_h = ∇ĥᵀ ĝ`,
/// `c_h = −e_∇h e_f − e_∇h ‖f̂‖ − ‖∇ĥ‖ e_f + ∇ĥᵀ f̂ + α(ĥ − e_h)`.
pub fn cbf_coeffs_from(eval: &ModelEval, cbf: &CbfSpec) -> SoccCoeffs {
    let gh_norm = eval.gradh_hat.norm();
    let g_norm = spectral_norm(&eval.ghat);
    let f_norm = eval.fhat.norm();
    SoccCoeffs {
        a: eval.e_gradh * eval.e_g + eval.e_gradh * g_norm + gh_norm * eval.e_g,
        b: eval.ghat.tr_mul(&eval.gradh_hat),
        c: -eval.e_gradh * eval.e_f - eval.e_gradh * f_norm - gh_norm * eval.e_f
            + eval.gradh_hat.dot(&eval.fhat)
            + cbf.alpha().eval(eval.hhat - eval.e_h),
    }
}

pub fn worstcase_clf_coeffs(
    model: &dyn WorstCaseModel,
    clf: &ClfSpec,
    x: &Vector,
) -> Result<SoccCoeffs, ConstraintError> {
    clf_coeffs_from(&model.evaluate(x)?, clf, x)
}

pub fn worstcase_cbf_coeffs(
    model: &dyn WorstCaseModel,
    cbf: &CbfSpec,
    x: &Vector,
) -> Result<SoccCoeffs, ConstraintError> {
    Ok(cbf_coeffs_from(&model.evaluate(x)?, cbf))
}

/// Both worst-case coefficient triples from a single model evaluation.
pub fn worstcase_coeffs(
    model: &dyn WorstCaseModel,
    clf: &ClfSpec,
    cbf: &CbfSpec,
    x: &Vector,
) -> Result<WorstCaseCoeffs, ConstraintError> {
    let eval = model.evaluate(x)?;
    Ok(WorstCaseCoeffs {
        clf: clf_coeffs_from(&eval, clf, x)?,
        cbf: cbf_coeffs_from(&eval, cbf),
    })
}

/// The worst-case pair `[CLF, CBF]` as general SOCCs.
pub fn worstcase_soccs(
    model: &dyn WorstCaseModel,
    clf: &ClfSpec,
    cbf: &CbfSpec,
    x: &Vector,
) -> Result<[Socc; 2], ConstraintError> {
    let coeffs = worstcase_coeffs(model, clf, cbf, x)?;
    Ok([coeffs.clf.embed()?, coeffs.cbf.embed()?])
}

/// `a‖u‖ ≤ b u + c` as `‖Q u + r‖ ≤ b u + c` with `Q = a[I_m; 0ᵀ]`, `r = 0`.
pub fn embed_worstcase(a: f64, b: &Vector, c: f64, m: usize) -> Result<Socc, ConstraintError> {
    if a < 0.0 {
        return Err(ConstraintError::NegativeScale(a));
    }
    if b.len() != m {
        return Err(mismatch("b", m, b.len()));
    }
    Socc::new(scaled_stacked_identity(a, m), Vector::zeros(m + 1), b.clone(), c)
}

/// GP-form terms: `μ(x, u) = γ(x)ᵀ[1; u]`, `s(x, u) = ‖G(x)[1; u]‖` for the
/// CLF and CBF residuals, with confidence scaling `β(δ)`.
#[derive(Clone)]
pub struct GpTerms {
    m: usize,
    pub gamma_v: VectorField,
    pub g_v: MatrixField,
    pub gamma_h: VectorField,
    pub g_h: MatrixField,
    beta_delta: f64,
    delta: f64,
}

impl fmt::Debug for GpTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GpTerms")
            .field("m", &self.m)
            .field("beta_delta", &self.beta_delta)
            .field("delta", &self.delta)
            .finish()
    }
}

impl GpTerms {
    pub fn new(
        m: usize,
        gamma_v: VectorField,
        g_v: MatrixField,
        gamma_h: VectorField,
        g_h: MatrixField,
        beta_delta: f64,
        delta: f64,
    ) -> Result<Self, ConstraintError> {
        if !(beta_delta > 0.0) || !beta_delta.is_finite() {
            return Err(ConstraintError::InvalidGpParameter {
                name: "beta_delta",
                value: beta_delta,
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ConstraintError::InvalidGpParameter {
                name: "delta",
                value: delta,
            });
        }
        Ok(Self {
            m,
            gamma_v,
            g_v,
            gamma_h,
            g_h,
            beta_delta,
            delta,
        })
    }

    /// All-zero mean and deviation terms.
    pub fn zero(m: usize, beta_delta: f64, delta: f64) -> Result<Self, ConstraintError> {
        let zv: VectorField = Arc::new(move |_: &Vector| Vector::zeros(m + 1));
        let zm: MatrixField = Arc::new(move |_: &Vector| Matrix::zeros(m + 1, m + 1));
        Self::new(m, zv.clone(), zm.clone(), zv, zm, beta_delta, delta)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn beta_delta(&self) -> f64 {
        self.beta_delta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Confidence attached to joint statements about both constraints.
    pub fn confidence(&self) -> f64 {
        1.0 - 2.0 * self.delta
    }

    pub(crate) fn eval_v(&self, x: &Vector) -> Result<(Vector, Matrix), ConstraintError> {
        self.eval_pair((self.gamma_v)(x), (self.g_v)(x), "γ_V / G_V")
    }

    pub(crate) fn eval_h(&self, x: &Vector) -> Result<(Vector, Matrix), ConstraintError> {
        self.eval_pair((self.gamma_h)(x), (self.g_h)(x), "γ_h / G_h")
    }

    fn eval_pair(
        &self,
        gamma: Vector,
        g: Matrix,
        what: &'static str,
    ) -> Result<(Vector, Matrix), ConstraintError> {
        let k = self.m + 1;
        if gamma.len() != k || g.shape() != (k, k) {
            return Err(mismatch(
                what,
                format!("{k} and {k}x{k}"),
                format!("{} and {}x{}", gamma.len(), g.nrows(), g.ncols()),
            ));
        }
        Ok((gamma, g))
    }
}

/// Splits `G` into `β G_{2:(m+1)}` and `β G_1` and assembles the cone.
fn gp_socc(beta: f64, g: &Matrix, b: Vector, c: f64) -> Result<Socc, ConstraintError> {
    let m = g.ncols() - 1;
    let q = g.columns(1, m) * beta;
    let r = g.column(0) * beta;
    Socc::new(q, r, b, c)
}

/// GP-form CLF constraint: `Q = β G_{V,2:(m+1)}`, `r = β G_{V,1}`,
/// `b = −L_ĝV − γ_{V,2:(m+1)}ᵀ`, `c = −L_f̂V − W − γ_{V,1}`.
pub fn gp_clf_socc(
    terms: &GpTerms,
    clf: &ClfSpec,
    model: &dyn WorstCaseModel,
    x: &Vector,
) -> Result<Socc, ConstraintError> {
    let eval = model.evaluate(x)?;
    check_gp_dims(terms, &eval)?;
    let (gamma, g) = terms.eval_v(x)?;
    let grad = clf.gradient(x);
    let m = terms.m();
    let b = -eval.ghat.tr_mul(&grad) - gamma.rows(1, m);
    let c = -grad.dot(&eval.fhat) - clf.decay(x) - gamma[0];
    gp_socc(terms.beta_delta(), &g, b, c)
}

/// GP-form CBF constraint: `b = ∇ĥᵀ ĝ + γ_{h,2:(m+1)}ᵀ`,
/// `c = ∇ĥᵀ f̂ + γ_{h,1} + α(ĥ)`.
pub fn gp_cbf_socc(
    terms: &GpTerms,
    cbf: &CbfSpec,
    model: &dyn WorstCaseModel,
    x: &Vector,
) -> Result<Socc, ConstraintError> {
    let eval = model.evaluate(x)?;
    check_gp_dims(terms, &eval)?;
    let (gamma, g) = terms.eval_h(x)?;
    let m = terms.m();
    let b = eval.ghat.tr_mul(&eval.gradh_hat) + gamma.rows(1, m);
    let c = eval.gradh_hat.dot(&eval.fhat) + gamma[0] + cbf.alpha().eval(eval.hhat);
    gp_socc(terms.beta_delta(), &g, b, c)
}

fn check_gp_dims(terms: &GpTerms, eval: &ModelEval) -> Result<(), ConstraintError> {
    if terms.m() != eval.ghat.ncols() {
        return Err(mismatch("GP input dimension", eval.ghat.ncols(), terms.m()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planar;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    /// V = ½‖x‖² with W = ‖x‖² (the undivided decay).
    fn clf_full() -> ClfSpec {
        ClfSpec::new(
            2,
            Arc::new(|x: &Vector| 0.5 * x.norm_squared()),
            Arc::new(|x: &Vector| x.clone()),
            Arc::new(|x: &Vector| x.norm_squared()),
            Arc::new(|x: &Vector| 0.5 * x.norm_squared()),
        )
        .unwrap()
    }

    fn exact() -> FnWorstCaseModel {
        FnWorstCaseModel::exact(&planar::dynamics(), &planar::barrier())
    }

    fn identity_cbf() -> CbfSpec {
        CbfSpec::with_margin(0.0).unwrap()
    }

    #[test]
    fn clf_coeffs_exact_estimates() {
        let c = worstcase_clf_coeffs(&exact(), &clf_full(), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(c.a, 0.0);
        assert_eq!(c.b, v(&[-1.0, 0.0]));
        assert_eq!(c.c, -2.0);
    }

    #[test]
    fn clf_coeffs_with_errors() {
        let model = exact().with_constant_errors(0.3, 0.1, 0.0, 0.0);
        let c = worstcase_clf_coeffs(&model, &clf_full(), &v(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(c.a, 0.1);
        assert_eq!(c.b, v(&[-1.0, 0.0]));
        assert_relative_eq!(c.c, -2.3);
    }

    #[test]
    fn clf_coeffs_vanish_at_origin() {
        let model = exact().with_constant_errors(0.3, 0.1, 0.0, 0.0);
        let c = worstcase_clf_coeffs(&model, &clf_full(), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(c.a, 0.0);
        assert_eq!(c.b, v(&[0.0, 0.0]));
        assert_eq!(c.c, 0.0);
    }

    #[test]
    fn cbf_coeffs_exact_estimates() {
        let c = worstcase_cbf_coeffs(&exact(), &identity_cbf(), &v(&[2.0, 6.0])).unwrap();
        assert_eq!(c.a, 0.0);
        assert_eq!(c.b, v(&[4.0, 4.0]));
        assert_relative_eq!(c.c, 36.0);
    }

    #[test]
    fn cbf_coeffs_gradient_error() {
        let model = exact().with_constant_errors(0.0, 0.0, 0.0, 0.1);
        let c = worstcase_cbf_coeffs(&model, &identity_cbf(), &v(&[2.0, 6.0])).unwrap();
        assert_relative_eq!(c.a, 0.1, epsilon = 1e-14);
        assert_relative_eq!(c.c, 36.0 - 0.1 * 40f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn negative_error_bound_rejected() {
        let model = exact().with_constant_errors(-0.1, 0.0, 0.0, 0.0);
        let err = worstcase_clf_coeffs(&model, &clf_full(), &v(&[1.0, 0.0]));
        assert!(matches!(err, Err(ConstraintError::NegativeErrorBound { what: "e_f", .. })));
    }

    #[test]
    fn state_dimension_checked() {
        let err = worstcase_clf_coeffs(&exact(), &clf_full(), &v(&[1.0, 0.0, 0.0]));
        assert!(matches!(err, Err(ConstraintError::DimensionMismatch { .. })));
    }

    #[test]
    fn embed_zero_scale_is_affine() {
        let s = embed_worstcase(0.0, &v(&[1.0, 0.0]), 1.0, 2).unwrap();
        assert_eq!(s.q(), &Matrix::zeros(3, 2));
        assert_eq!(s.residual(&v(&[0.0, 0.0])), -1.0);
    }

    #[test]
    fn embed_scales_norm() {
        let s = embed_worstcase(2.0, &v(&[0.0, 0.0]), 0.0, 2).unwrap();
        let u = v(&[3.0, 4.0]);
        assert_relative_eq!((s.q() * &u + s.r()).norm(), 10.0);
        assert!(matches!(
            embed_worstcase(-1.0, &v(&[0.0]), 0.0, 1),
            Err(ConstraintError::NegativeScale(_))
        ));
    }

    #[test]
    fn embed_composes_with_clf_coeffs() {
        let model = exact().with_constant_errors(0.0, 0.1, 0.0, 0.0);
        let c = worstcase_clf_coeffs(&model, &clf_full(), &v(&[1.0, 0.0])).unwrap();
        let s = c.embed().unwrap();
        assert_relative_eq!(s.q(), &scaled_stacked_identity(0.1, 2), epsilon = 1e-15);
    }

    #[test]
    fn residual_examples() {
        let s = embed_worstcase(0.0, &v(&[1.0, 0.0]), 1.0, 2).unwrap();
        assert_eq!(socc_residual(&s, &v(&[0.0, 0.0])), -1.0);
        let s = embed_worstcase(1.0, &v(&[2.0, 0.0]), -1.0, 2).unwrap();
        assert_eq!(socc_residual(&s, &v(&[1.0, 0.0])), 0.0);
        let s = embed_worstcase(1.0, &v(&[0.0, 0.0]), 0.0, 2).unwrap();
        assert_eq!(socc_residual(&s, &v(&[1.0, 0.0])), 1.0);
    }

    #[test]
    fn socc_shape_validation() {
        assert!(Socc::new(Matrix::zeros(2, 2), Vector::zeros(3), Vector::zeros(2), 0.0).is_err());
        assert!(Socc::new(Matrix::zeros(3, 2), Vector::zeros(2), Vector::zeros(2), 0.0).is_err());
        assert!(Socc::new(Matrix::zeros(3, 2), Vector::zeros(3), Vector::zeros(1), 0.0).is_err());
        assert!(Socc::new(Matrix::zeros(3, 2), Vector::zeros(3), Vector::zeros(2), f64::NAN).is_err());
    }

    #[test]
    fn gp_zero_terms_reduce_to_exact_clf() {
        let terms = GpTerms::zero(2, 1.5, 0.05).unwrap();
        let x = v(&[1.0, -0.5]);
        let s = gp_clf_socc(&terms, &clf_full(), &exact(), &x).unwrap();
        let coeffs = worstcase_clf_coeffs(&exact(), &clf_full(), &x).unwrap();
        assert_eq!(s.q(), &Matrix::zeros(3, 2));
        assert_eq!(s.r(), &Vector::zeros(3));
        assert_eq!(s.b(), &coeffs.b);
        assert_eq!(s.c(), coeffs.c);
    }

    #[test]
    fn gp_identity_deviation_blocks() {
        let m = 2;
        let terms = GpTerms::new(
            m,
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(|_: &Vector| Matrix::identity(3, 3)),
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(|_: &Vector| Matrix::identity(3, 3)),
            2.0,
            0.1,
        )
        .unwrap();
        let s = gp_clf_socc(&terms, &clf_full(), &exact(), &v(&[1.0, 0.0])).unwrap();
        let u = v(&[0.3, -1.1]);
        let lhs = (s.q() * &u + s.r()).norm();
        assert_relative_eq!(lhs, 2.0 * (1.0 + u.norm_squared()).sqrt(), epsilon = 1e-14);
        assert_eq!(s.r(), &v(&[2.0, 0.0, 0.0]));
    }

    #[test]
    fn gp_mean_offset_enters_c() {
        let terms = GpTerms::new(
            2,
            Arc::new(|_: &Vector| Vector::from_vec(vec![1.0, 0.0, 0.0])),
            Arc::new(|_: &Vector| Matrix::zeros(3, 3)),
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(|_: &Vector| Matrix::zeros(3, 3)),
            1.0,
            0.1,
        )
        .unwrap();
        let s = gp_clf_socc(&terms, &clf_full(), &exact(), &v(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(s.c(), -3.0);
    }

    #[test]
    fn gp_cbf_zero_terms() {
        let terms = GpTerms::zero(2, 1.0, 0.1).unwrap();
        let s = gp_cbf_socc(&terms, &identity_cbf(), &exact(), &v(&[2.0, 6.0])).unwrap();
        assert_eq!(s.b(), &v(&[4.0, 4.0]));
        assert_relative_eq!(s.c(), 36.0);
    }

    #[test]
    fn gp_cbf_diagonal_deviation() {
        let terms = GpTerms::new(
            2,
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(|_: &Vector| Matrix::zeros(3, 3)),
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(|_: &Vector| Matrix::from_diagonal_element(3, 3, 0.5)),
            1.0,
            0.1,
        )
        .unwrap();
        let s = gp_cbf_socc(&terms, &identity_cbf(), &exact(), &v(&[2.0, 6.0])).unwrap();
        assert_eq!(s.r(), &v(&[0.5, 0.0, 0.0]));
        assert_eq!(s.q(), &Matrix::from_row_slice(3, 2, &[0.0, 0.0, 0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn gp_parameters_validated() {
        assert!(GpTerms::zero(2, 0.0, 0.1).is_err());
        assert!(GpTerms::zero(2, 1.0, 1.0).is_err());
        assert!(GpTerms::zero(2, 1.0, 0.0).is_err());
        let bad = GpTerms::new(
            2,
            Arc::new(|_: &Vector| Vector::zeros(2)),
            Arc::new(|_: &Vector| Matrix::zeros(3, 3)),
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(|_: &Vector| Matrix::zeros(3, 3)),
            1.0,
            0.1,
        )
        .unwrap();
        assert!(gp_clf_socc(&bad, &clf_full(), &exact(), &v(&[1.0, 0.0])).is_err());
    }

    proptest! {
        #[test]
        fn embedding_residual_matches_worst_case_form(
            a in 0.0f64..5.0,
            b in proptest::collection::vec(-5.0f64..5.0, 3),
            c in -5.0f64..5.0,
            u in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let b = Vector::from_vec(b);
            let u = Vector::from_vec(u);
            let s = embed_worstcase(a, &b, c, 3).unwrap();
            let expected = a * u.norm() - b.dot(&u) - c;
            prop_assert!((s.residual(&u) - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }

        #[test]
        fn zero_error_constraints_match_exact_inequalities(
            x in proptest::collection::vec(-5.0f64..5.0, 2),
            u in proptest::collection::vec(-20.0f64..20.0, 2),
        ) {
            let x = Vector::from_vec(x);
            let u = Vector::from_vec(u);
            let [clf_s, cbf_s] = worstcase_soccs(&exact(), &clf_full(), &identity_cbf(), &x).unwrap();
            let xdot = planar::dynamics().velocity(&x, &u);
            let clf_ineq = x.dot(&xdot) + x.norm_squared();
            let h = planar::barrier();
            let cbf_ineq = h.gradient(&x).dot(&xdot) + h.value(&x);
            // residuals are exactly the negated inequality slacks
            prop_assert!((clf_s.residual(&u) - clf_ineq).abs() <= 1e-9 * (1.0 + clf_ineq.abs()));
            prop_assert!((cbf_s.residual(&u) + cbf_ineq).abs() <= 1e-9 * (1.0 + cbf_ineq.abs()));
        }

        #[test]
        fn residual_monotone_in_each_error_bound(
            x in proptest::collection::vec(-5.0f64..5.0, 2),
            u in proptest::collection::vec(-10.0f64..10.0, 2),
            base in proptest::collection::vec(0.0f64..1.0, 4),
            which in 0usize..4,
            bump in 0.0f64..1.0,
        ) {
            let x = Vector::from_vec(x);
            let u = Vector::from_vec(u);
            let mut bigger = base.clone();
            bigger[which] += bump;
            let lo = exact().with_constant_errors(base[0], base[1], base[2], base[3]);
            let hi = exact().with_constant_errors(bigger[0], bigger[1], bigger[2], bigger[3]);
            let cbf = identity_cbf();
            let [lv, lh] = worstcase_soccs(&lo, &clf_full(), &cbf, &x).unwrap();
            let [hv, hh] = worstcase_soccs(&hi, &clf_full(), &cbf, &x).unwrap();
            prop_assert!(hv.residual(&u) >= lv.residual(&u) - 1e-12);
            prop_assert!(hh.residual(&u) >= lh.residual(&u) - 1e-12);
        }
    }
}
