//! Seeded random instances with known ground truth, for tests and benches.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::certificate::{Barrier, CbfSpec, ClfSpec};
use crate::constraints::{FnWorstCaseModel, GpTerms, Socc};
use crate::feasibility::SlackProblem;
use crate::linalg::sigma_max;
use crate::region::Region;
use crate::socp::{SoccProgram, SolverConfig};
use crate::system::AffineDynamics;
use crate::{planar, Matrix, Vector};

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, sd: f64) -> Vector {
    let d = Normal::new(0.0, sd).expect("positive deviation");
    Vector::from_iterator(len, (0..len).map(|_| d.sample(rng)))
}

fn normal_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> Matrix {
    let d = Normal::new(0.0, sd).expect("positive deviation");
    Matrix::from_iterator(rows, cols, (0..rows * cols).map(|_| d.sample(rng)))
}

/// A point drawn uniformly from the ball of radius `radius` in `ℝᵐ`.
fn in_ball<R: Rng + ?Sized>(rng: &mut R, m: usize, radius: f64) -> Vector {
    let dir = normal_vec(rng, m, 1.0);
    let norm = dir.norm().max(1e-12);
    let scale = radius * rng.random::<f64>().powf(1.0 / m as f64);
    dir * (scale / norm)
}

/// A program whose constraints all hold at `target` with slack in
/// `[0.5, 1.5]`. About a quarter of the constraints are affine.
#[derive(Debug, Clone)]
pub struct RandomProgram {
    pub program: SoccProgram,
    pub target: Vector,
}

pub fn random_program<R: Rng + ?Sized>(rng: &mut R, m: usize, p: usize) -> RandomProgram {
    let target = in_ball(rng, m, 2.0);
    let constraints = (0..p)
        .map(|_| {
            let affine = rng.random::<f64>() < 0.25;
            let (q, r) = if affine {
                (Matrix::zeros(m + 1, m), Vector::zeros(m + 1))
            } else {
                (normal_mat(rng, m + 1, m, 0.5), normal_vec(rng, m + 1, 0.5))
            };
            let b = normal_vec(rng, m, 1.0);
            let margin = rng.random_range(0.5..1.5);
            let c = (&q * &target + &r).norm() - b.dot(&target) + margin;
            Socc::new(q, r, b, c).expect("finite data")
        })
        .collect();
    RandomProgram {
        program: SoccProgram::new(constraints).expect("consistent dimensions"),
        target,
    }
}

/// A single strictly feasible SOCC with full-column-rank `Q` and `r ∈ Im(Q)`,
/// so that the image condition of the universal formula holds.
pub fn random_image_socc<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Socc {
    loop {
        let q = normal_mat(rng, m + 1, m, 1.0);
        let svd = q.clone().svd(false, false);
        let (hi, lo) = (svd.singular_values.max(), svd.singular_values.min());
        if lo < 1e-2 * hi {
            continue;
        }
        let r = &q * normal_vec(rng, m, 1.0);
        let sd = if rng.random::<bool>() { 0.5 } else { 3.0 };
        let b = normal_vec(rng, m, sd);
        let u0 = in_ball(rng, m, 2.0);
        let margin = rng.random_range(0.05..1.5);
        let c = (&q * &u0 + &r).norm() - b.dot(&u0) + margin;
        return Socc::new(q, r, b, c).expect("finite data");
    }
}

/// GP-form data at one state whose mean is exact (`γ` is the true model
/// mismatch) and whose `G` matrices satisfy the GP compatibility condition
/// by a random fraction.
#[derive(Clone)]
pub struct GpInstance {
    pub x: Vector,
    pub terms: GpTerms,
    pub model: FnWorstCaseModel,
    pub clf: ClfSpec,
    pub cbf: CbfSpec,
    pub barrier: Barrier,
    /// `B(x) = ‖u_slack(x)‖`.
    pub bound: f64,
}

impl std::fmt::Debug for GpInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GpInstance")
            .field("x", &self.x)
            .field("bound", &self.bound)
            .finish()
    }
}

fn constant_vector(v: Vector) -> crate::VectorField {
    Arc::new(move |_: &Vector| v.clone())
}

fn constant_matrix(m: Matrix) -> crate::MatrixField {
    Arc::new(move |_: &Vector| m.clone())
}

/// Draws a state of the planar benchmark (outside the obstacle and away
/// from the origin), perturbs the dynamics estimates, and builds the terms.
/// Returns `None` when the true slack program is not strictly feasible at
/// the drawn state.
pub fn planar_gp_instance<R: Rng + ?Sized>(rng: &mut R, region: &Region) -> Option<GpInstance> {
    let truth: AffineDynamics = planar::dynamics();
    let barrier = planar::barrier();
    let clf = planar::clf();
    let cbf = planar::cbf();
    let x = loop {
        let x = region.sample(rng);
        if !planar::in_obstacle(&x) && x.norm() > 0.1 {
            break x;
        }
    };
    let slack = SlackProblem {
        truth: truth.clone(),
        clf: clf.clone(),
        cbf: cbf.clone(),
        barrier: barrier.clone(),
        cfg: SolverConfig::default(),
    };
    let bound = slack.min_norm(&x).ok()?;

    let m = truth.dims().m();
    let df = normal_vec(rng, 2, 0.5);
    let dg = normal_mat(rng, 2, m, 0.2);
    let fhat = truth.drift(&x) + &df;
    let ghat = truth.input_matrix(&x) + &dg;
    let model = FnWorstCaseModel::exact(&truth, &barrier)
        .with_estimates(constant_vector(fhat.clone()), constant_matrix(ghat.clone()));

    let f = truth.drift(&x);
    let g = truth.input_matrix(&x);
    let grad_v = clf.gradient(&x);
    let grad_h = barrier.gradient(&x);
    // true minus estimated residuals, as affine functions of [1; u]
    let mut gamma_v = Vector::zeros(m + 1);
    gamma_v[0] = grad_v.dot(&(&f - &fhat));
    gamma_v.rows_mut(1, m).copy_from(&(&g - &ghat).tr_mul(&grad_v));
    let mut gamma_h = Vector::zeros(m + 1);
    gamma_h[0] = grad_h.dot(&(&f - &fhat));
    gamma_h.rows_mut(1, m).copy_from(&(&g - &ghat).tr_mul(&grad_h));

    let beta = rng.random_range(0.5..3.0);
    let delta = rng.random_range(0.01..0.4);
    let scale = 2.0 * beta * (1.0 + bound * bound).sqrt();
    let h = barrier.value(&x);
    let shaped = |rng: &mut R, rhs: f64| {
        let raw = normal_mat(rng, m + 1, m + 1, 1.0);
        let s = sigma_max(&raw);
        let frac = rng.random_range(0.05..0.95);
        raw * (frac * rhs / scale / s)
    };
    let g_v = shaped(rng, clf.slack(&x));
    let g_h = shaped(rng, cbf.eta_h() + cbf.zeta(h));
    let terms = GpTerms::new(
        m,
        constant_vector(gamma_v),
        constant_matrix(g_v),
        constant_vector(gamma_h),
        constant_matrix(g_h),
        beta,
        delta,
    )
    .expect("valid GP parameters");
    Some(GpInstance {
        x,
        terms,
        model,
        clf,
        cbf,
        barrier,
        bound,
    })
}
