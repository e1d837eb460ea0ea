use std::fmt;
use std::sync::Arc;

use crate::system::{ModelError, ORIGIN_TOL};

/// Number of grid points used to check monotonicity of a user function.
const MONOTONE_SAMPLES: usize = 200;

/// A class-K function `α: ℝ → ℝ` (zero at zero, strictly increasing) with a
/// known Lipschitz constant.
#[derive(Clone)]
pub enum ClassK {
    Linear {
        slope: f64,
    },
    User {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lipschitz: f64,
        /// Interval on which `lipschitz` is declared valid.
        domain: (f64, f64),
    },
}

impl fmt::Debug for ClassK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassK::Linear { slope } => f.debug_struct("Linear").field("slope", slope).finish(),
            ClassK::User {
                lipschitz, domain, ..
            } => f
                .debug_struct("User")
                .field("lipschitz", lipschitz)
                .field("domain", domain)
                .finish(),
        }
    }
}

impl ClassK {
    pub fn linear(slope: f64) -> Result<Self, ModelError> {
        if !(slope > 0.0) || !slope.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "slope",
                value: slope,
            });
        }
        Ok(ClassK::Linear { slope })
    }

    pub fn identity() -> Self {
        ClassK::Linear { slope: 1.0 }
    }

    /// Wraps an arbitrary function, checking `α(0) = 0` and strict increase
    /// on a uniform grid over `domain`.
    pub fn user(
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lipschitz: f64,
        domain: (f64, f64),
    ) -> Result<Self, ModelError> {
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "lipschitz",
                value: lipschitz,
            });
        }
        let (lo, hi) = domain;
        if !(lo < hi) {
            return Err(ModelError::InvalidParameter {
                name: "domain",
                value: hi - lo,
            });
        }
        let at_zero = f(0.0);
        if !(at_zero.abs() <= ORIGIN_TOL) {
            return Err(ModelError::NonzeroAtOrigin {
                what: "class-K function",
                value: at_zero,
            });
        }
        let step = (hi - lo) / (MONOTONE_SAMPLES - 1) as f64;
        let mut prev = f(lo);
        for i in 1..MONOTONE_SAMPLES {
            let s = lo + step * i as f64;
            let v = f(s);
            if !(v > prev) {
                return Err(ModelError::NotIncreasing(s));
            }
            prev = v;
        }
        Ok(ClassK::User {
            f,
            lipschitz,
            domain,
        })
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ClassK::Linear { slope } => slope * s,
            ClassK::User { f, .. } => f(s),
        }
    }

    /// Lipschitz constant `K_α` (global for the linear kind, declared for user
    /// functions).
    pub fn lipschitz(&self) -> f64 {
        match self {
            ClassK::Linear { slope } => *slope,
            ClassK::User { lipschitz, .. } => *lipschitz,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_rejects_nonpositive_slope() {
        assert!(ClassK::linear(0.0).is_err());
        assert!(ClassK::linear(-1.0).is_err());
        assert!(ClassK::linear(f64::NAN).is_err());
    }

    #[test]
    fn user_checks_origin_and_monotonicity() {
        let shifted = ClassK::user(Arc::new(|s| s + 1.0), 1.0, (-1.0, 1.0));
        assert!(matches!(shifted, Err(ModelError::NonzeroAtOrigin { .. })));
        let square = ClassK::user(Arc::new(|s| s * s), 4.0, (-2.0, 2.0));
        assert!(matches!(square, Err(ModelError::NotIncreasing(_))));
        let cubic = ClassK::user(Arc::new(|s| s * s * s + s), 13.0, (-2.0, 2.0)).unwrap();
        assert_eq!(cubic.eval(1.0), 2.0);
        assert_eq!(cubic.lipschitz(), 13.0);
    }

    proptest! {
        #[test]
        fn constructed_functions_are_increasing(slope in 1e-3f64..1e3, a in -50f64..50.0, d in 1e-6f64..10.0) {
            let alpha = ClassK::linear(slope).unwrap();
            prop_assert!(alpha.eval(a) < alpha.eval(a + d));
            let tanh = ClassK::user(Arc::new(move |s: f64| (slope * s).atan()), slope, (-50.0, 50.0)).unwrap();
            prop_assert!(tanh.eval(a) <= tanh.eval(a + d));
            prop_assert_eq!(alpha.eval(0.0), 0.0);
        }
    }
}
