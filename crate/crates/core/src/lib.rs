//! Safe stabilization of control-affine systems under model uncertainty.
//!
//! The crate turns worst-case or Gaussian-process style error descriptions
//! of a system `x' = f(x) + g(x) u` into second-order cone constraints
//! (SOCCs) on the input, certifies when a CLF constraint and a CBF
//! constraint are jointly (strictly) feasible, and computes controllers that
//! satisfy them:
//!
//! * [`socp::solve_min_norm`] solves `min ½‖u‖²` subject to a stack of SOCCs,
//!   with a phase-I problem deciding strict feasibility first;
//! * [`universal::universal_control`] is a closed-form controller for a
//!   single SOCC;
//! * [`feasibility`] evaluates explicit error-size conditions under which the
//!   CLF/CBF pair is guaranteed to be strictly compatible;
//! * [`sim`] runs the closed loop on a planar benchmark with a
//!   nearest-neighbor data model and online data acquisition.
//!
//! All state-dependent maps are plain closures over [`Vector`] so that any
//! model can be plugged in. Everything is `Send + Sync` and evaluation is
//! pure, so grids and experiment batches can be run in parallel.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod classk;
pub mod constraints;
pub mod estimation;
pub mod feasibility;
pub mod linalg;
pub mod planar;
pub mod region;
pub mod sim;
pub mod socp;
pub mod synthetic;
pub mod system;
pub mod universal;

use std::sync::Arc;

/// Column vector used for states, inputs and constraint data.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for input matrices and cone data.
pub type Matrix = nalgebra::DMatrix<f64>;

/// A map `ℝⁿ → ℝ`.
pub type ScalarField = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
/// A map `ℝⁿ → ℝᵏ`.
pub type VectorField = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
/// A map `ℝⁿ → ℝ^{k×l}`.
pub type MatrixField = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

pub use certificate::{Barrier, CbfSpec, ClfSpec, GradientCheckReport};
pub use classk::ClassK;
pub use constraints::{GpTerms, ModelEval, Socc, WorstCaseCoeffs, WorstCaseModel};
pub use estimation::{Dataset, LipschitzConstants, Oracle};
pub use feasibility::{BoundB, CompatMargins};
pub use region::Region;
pub use socp::{SoccProgram, SolveResult, SolveStatus, SolverConfig};
pub use system::{AffineDynamics, SystemDims};
pub use universal::UniversalIntermediates;
