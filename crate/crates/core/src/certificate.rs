//! Certificate functions: the CLF `V` with decay rate `W` and slack `S`, and
//! the CBF data `α`, `η_h`, `ζ`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classk::ClassK;
use crate::region::Region;
use crate::system::{check_len, AffineDynamics, ModelError, ORIGIN_TOL};
use crate::{ScalarField, Vector, VectorField};

/// Samples closer than this to the origin are skipped by the sampled checks.
pub const ORIGIN_EXCLUSION: f64 = 1e-6;

/// Minimum number of samples used by [`check_gradient`].
pub const MIN_GRADIENT_SAMPLES: usize = 100;

/// A control Lyapunov function with its decay rate `W` and slack `S`.
#[derive(Clone)]
pub struct ClfSpec {
    n: usize,
    v: ScalarField,
    grad: VectorField,
    w: ScalarField,
    s: ScalarField,
}

impl fmt::Debug for ClfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClfSpec").field("n", &self.n).finish()
    }
}

impl ClfSpec {
    /// Checks that `V`, `W`, `S` vanish at the origin and that the gradient has
    /// length `n`.
    pub fn new(
        n: usize,
        v: ScalarField,
        grad: VectorField,
        w: ScalarField,
        s: ScalarField,
    ) -> Result<Self, ModelError> {
        let origin = Vector::zeros(n);
        for (what, f) in [("V", &v), ("W", &w), ("S", &s)] {
            let value = f(&origin);
            if !(value.abs() <= ORIGIN_TOL) {
                return Err(ModelError::NonzeroAtOrigin { what, value });
            }
        }
        check_len("gradient of V", &grad(&origin), n)?;
        Ok(Self { n, v, grad, w, s })
    }

    /// Splits a user decay rate `W₀` into `W = ½W₀` and slack `S = ½W₀`, so
    /// that `L_fV + L_gV u ≤ −W₀` reads `L_fV + L_gV u + W ≤ −S`.
    pub fn with_halved_decay(
        n: usize,
        v: ScalarField,
        grad: VectorField,
        w0: ScalarField,
    ) -> Result<Self, ModelError> {
        let w_half = w0.clone();
        let s_half = w0;
        Self::new(
            n,
            v,
            grad,
            Arc::new(move |x: &Vector| 0.5 * w_half(x)),
            Arc::new(move |x: &Vector| 0.5 * s_half(x)),
        )
    }

    /// `V = ½‖x‖²`, user decay `W₀ = ‖x‖²`, halved into `W = S = ½‖x‖²`.
    pub fn quadratic(n: usize) -> Self {
        Self::with_halved_decay(
            n,
            Arc::new(|x: &Vector| 0.5 * x.norm_squared()),
            Arc::new(|x: &Vector| x.clone()),
            Arc::new(|x: &Vector| x.norm_squared()),
        )
        .expect("quadratic certificate vanishes at the origin")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.v)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.grad)(x)
    }

    pub fn decay(&self, x: &Vector) -> f64 {
        (self.w)(x)
    }

    pub fn slack(&self, x: &Vector) -> f64 {
        (self.s)(x)
    }

    /// Replaces the gradient map (used to test [`check_gradient`]).
    pub fn with_gradient(mut self, grad: VectorField) -> Self {
        self.grad = grad;
        self
    }

    /// Checks positive definiteness of `V`, `W` and `S` on random samples of
    /// `region` with `‖x‖ ≥ 1e-6`.
    pub fn check_positive_definite(
        &self,
        region: &Region,
        n_samples: usize,
        seed: u64,
    ) -> Result<(), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in sample_away_from_origin(region, n_samples, &mut rng) {
            for (what, value) in [
                ("V", self.value(&x)),
                ("W", self.decay(&x)),
                ("S", self.slack(&x)),
            ] {
                if !(value > 0.0) {
                    return Err(ModelError::NotPositiveDefinite { what, value });
                }
            }
        }
        Ok(())
    }
}

/// CBF data: class-K `α`, robustness margin `η_h ≥ 0` and slack `ζ` (zero when
/// absent).
#[derive(Debug, Clone)]
pub struct CbfSpec {
    alpha: ClassK,
    eta_h: f64,
    zeta: Option<ClassK>,
}

impl CbfSpec {
    pub fn new(alpha: ClassK, eta_h: f64, zeta: Option<ClassK>) -> Result<Self, ModelError> {
        if !(eta_h >= 0.0) || !eta_h.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "eta_h",
                value: eta_h,
            });
        }
        Ok(Self { alpha, eta_h, zeta })
    }

    /// `α(s) = s`, `ζ ≡ 0`.
    pub fn with_margin(eta_h: f64) -> Result<Self, ModelError> {
        Self::new(ClassK::identity(), eta_h, None)
    }

    pub fn alpha(&self) -> &ClassK {
        &self.alpha
    }

    pub fn eta_h(&self) -> f64 {
        self.eta_h
    }

    pub fn zeta(&self, h: f64) -> f64 {
        self.zeta.as_ref().map_or(0.0, |z| z.eval(h))
    }

    pub fn has_zeta(&self) -> bool {
        self.zeta.is_some()
    }
}

/// A barrier function `h` and its gradient.
#[derive(Clone)]
pub struct Barrier {
    pub h: ScalarField,
    pub grad: VectorField,
}

impl fmt::Debug for Barrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Barrier")
    }
}

impl Barrier {
    pub fn new(h: ScalarField, grad: VectorField) -> Self {
        Self { h, grad }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.h)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.grad)(x)
    }
}

/// Outcome of the exact CLF-inequality decision at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfPointCheck {
    pub feasible: bool,
    /// `−W − L_fV` when `L_gV = 0`, `+∞` otherwise.
    pub margin: f64,
}

/// Decides whether some `u` satisfies `L_fV + L_gV u ≤ −W` at `x`.
pub fn clf_feasible_at(
    clf: &ClfSpec,
    dynamics: &AffineDynamics,
    x: &Vector,
) -> Result<ClfPointCheck, ModelError> {
    check_dims(clf, dynamics)?;
    let grad = clf.gradient(x);
    let lfv = grad.dot(&dynamics.drift(x));
    let lgv = dynamics.input_matrix(x).tr_mul(&grad);
    if lgv.norm() > 0.0 {
        return Ok(ClfPointCheck {
            feasible: true,
            margin: f64::INFINITY,
        });
    }
    let margin = -clf.decay(x) - lfv;
    Ok(ClfPointCheck {
        feasible: margin >= 0.0,
        margin,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClfSampleReport {
    pub samples: usize,
    pub feasible: usize,
    pub fraction: f64,
    pub worst_margin: f64,
}

/// Samples `region` (skipping the 1e-6 ball around the origin) and decides the
/// CLF inequality exactly at each sample.
pub fn verify_clf_sampled(
    clf: &ClfSpec,
    dynamics: &AffineDynamics,
    region: &Region,
    n_samples: usize,
    seed: u64,
) -> Result<ClfSampleReport, ModelError> {
    check_dims(clf, dynamics)?;
    if region.dim() != clf.n() {
        return Err(ModelError::DimensionMismatch {
            what: "region",
            expected: clf.n().to_string(),
            got: region.dim().to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feasible = 0;
    let mut worst = f64::INFINITY;
    let points = sample_away_from_origin(region, n_samples, &mut rng);
    for x in &points {
        let check = clf_feasible_at(clf, dynamics, x)?;
        feasible += check.feasible as usize;
        worst = worst.min(check.margin);
    }
    let samples = points.len();
    Ok(ClfSampleReport {
        samples,
        feasible,
        fraction: if samples == 0 {
            0.0
        } else {
            feasible as f64 / samples as f64
        },
        worst_margin: worst,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub samples: usize,
    pub max_relative_error: f64,
    /// Sample attaining the maximum.
    pub worst_state: Vector,
}

/// Compares the analytic gradient with central differences of `V` over
/// `max(n_samples, 100)` seeded samples of `region`.
pub fn check_gradient(
    clf: &ClfSpec,
    region: &Region,
    step: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GradientCheckReport, ModelError> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(ModelError::InvalidParameter {
            name: "step",
            value: step,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = n_samples.max(MIN_GRADIENT_SAMPLES);
    let mut worst = (0.0, Vector::zeros(region.dim()));
    for _ in 0..samples {
        let x = region.sample(&mut rng);
        let analytic = clf.gradient(&x);
        check_len("gradient of V", &analytic, x.len())?;
        let mut fd = Vector::zeros(x.len());
        for i in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[i] += step;
            minus[i] -= step;
            fd[i] = (clf.value(&plus) - clf.value(&minus)) / (2.0 * step);
        }
        let err = (&analytic - &fd).norm() / fd.norm().max(1e-6);
        if err > worst.0 {
            worst = (err, x);
        }
    }
    Ok(GradientCheckReport {
        samples,
        max_relative_error: worst.0,
        worst_state: worst.1,
    })
}

fn check_dims(clf: &ClfSpec, dynamics: &AffineDynamics) -> Result<(), ModelError> {
    if clf.n() != dynamics.dims().n() {
        return Err(ModelError::DimensionMismatch {
            what: "CLF state dimension",
            expected: dynamics.dims().n().to_string(),
            got: clf.n().to_string(),
        });
    }
    Ok(())
}

fn sample_away_from_origin(region: &Region, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let mut out = Vec::with_capacity(n);
    // bounded rejection so a region hugging the origin cannot spin forever
    let mut attempts = 0;
    while out.len() < n && attempts < 100 * n.max(1) {
        attempts += 1;
        let x = region.sample(rng);
        if x.norm() >= ORIGIN_EXCLUSION {
            out.push(x);
        }
    }
    out
}
