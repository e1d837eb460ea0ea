//! Log-barrier path following for small dense cone programs.
//!
//! Each constraint is `‖A y + a₀‖ ≤ gᵀ y + h`. Cones with at least one row use
//! the barrier `−ln(t² − ‖z‖²)` (parameter 2), which is the log of the squared
//! constraint and stays smooth on the cone axis `z = 0`. Cones without rows
//! are affine (`0 ≤ gᵀ y + h`) and use `−ln t` (parameter 1).

use crate::linalg::solve_spd;
use crate::{Matrix, Vector};

#[derive(Debug, Clone)]
pub(crate) struct Cone {
    pub a: Matrix,
    pub a0: Vector,
    pub g: Vector,
    pub h: f64,
}

impl Cone {
    fn is_affine(&self) -> bool {
        self.a.nrows() == 0
    }

    fn parameter(&self) -> f64 {
        if self.is_affine() {
            1.0
        } else {
            2.0
        }
    }

    fn parts(&self, y: &Vector) -> (f64, Vector) {
        let t = self.g.dot(y) + self.h;
        let z = if self.is_affine() {
            Vector::zeros(0)
        } else {
            &self.a * y + &self.a0
        };
        (t, z)
    }

    /// `(t − ‖z‖, t + ‖z‖)`; the point is interior iff both are positive.
    fn gaps(&self, y: &Vector) -> (f64, f64, f64, Vector) {
        let (t, z) = self.parts(y);
        let zn = z.norm();
        (t - zn, t + zn, t, z)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Objective {
    /// `½‖y‖²`
    HalfSquaredNorm,
    /// `cᵀ y`
    Linear(Vector),
}

impl Objective {
    fn value(&self, y: &Vector) -> f64 {
        match self {
            Objective::HalfSquaredNorm => 0.5 * y.norm_squared(),
            Objective::Linear(c) => c.dot(y),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierParams {
    /// Multiplicative increase of the barrier weight `τ` between centerings.
    pub growth: f64,
    /// Stop once `ν/τ ≤ gap_abs + gap_rel·|objective|`.
    pub gap_abs: f64,
    pub gap_rel: f64,
    /// Target for `‖∇F‖/τ` at the last centering.
    pub stationarity: f64,
    pub max_newton: usize,
    pub armijo: f64,
    pub backtrack: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ConeMultiplier {
    pub nu: f64,
    pub w: Vector,
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierOutcome {
    pub y: Vector,
    pub gap: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    pub multipliers: Vec<ConeMultiplier>,
}

pub(crate) fn is_interior(cones: &[Cone], y: &Vector) -> bool {
    cones.iter().all(|c| {
        let (lo, hi, t, _) = c.gaps(y);
        if c.is_affine() {
            t > 0.0
        } else {
            t > 0.0 && lo > 0.0 && hi > 0.0
        }
    })
}

struct Problem<'a> {
    objective: &'a Objective,
    cones: &'a [Cone],
    dim: usize,
}

impl Problem<'_> {
    fn barrier_parameter(&self) -> f64 {
        self.cones.iter().map(Cone::parameter).sum()
    }

    /// `τ f(y) + Σ ψᵢ(y)`, or `None` outside the domain.
    fn merit(&self, tau: f64, y: &Vector) -> Option<f64> {
        let mut total = tau * self.objective.value(y);
        for c in self.cones {
            let (lo, hi, t, _) = c.gaps(y);
            if c.is_affine() {
                if !(t > 0.0) {
                    return None;
                }
                total -= t.ln();
            } else {
                if !(t > 0.0 && lo > 0.0 && hi > 0.0) {
                    return None;
                }
                total -= lo.ln() + hi.ln();
            }
        }
        total.is_finite().then_some(total)
    }

    fn derivatives(&self, tau: f64, y: &Vector) -> (Vector, Matrix) {
        let mut grad = Vector::zeros(self.dim);
        let mut hess = Matrix::zeros(self.dim, self.dim);
        match self.objective {
            Objective::HalfSquaredNorm => {
                grad.axpy(tau, y, 0.0);
                for i in 0..self.dim {
                    hess[(i, i)] = tau;
                }
            }
            Objective::Linear(c) => grad.axpy(tau, c, 0.0),
        }
        for c in self.cones {
            let (lo, hi, t, z) = c.gaps(y);
            if c.is_affine() {
                grad.axpy(-1.0 / t, &c.g, 1.0);
                hess.ger(1.0 / (t * t), &c.g, &c.g, 1.0);
            } else {
                let d = lo * hi;
                // ∇D = 2t g − 2Aᵀz, ∇²D = 2ggᵀ − 2AᵀA
                let mut dd = c.a.tr_mul(&z);
                dd.axpy(2.0 * t, &c.g, -2.0);
                grad.axpy(-1.0 / d, &dd, 1.0);
                hess.ger(1.0 / (d * d), &dd, &dd, 1.0);
                hess.ger(-2.0 / d, &c.g, &c.g, 1.0);
                hess.gemm_tr(2.0 / d, &c.a, &c.a, 1.0);
            }
        }
        (grad, hess)
    }

    fn multipliers(&self, tau: f64, y: &Vector) -> Vec<ConeMultiplier> {
        self.cones
            .iter()
            .map(|c| {
                let (lo, hi, t, z) = c.gaps(y);
                if c.is_affine() {
                    ConeMultiplier {
                        nu: 1.0 / (tau * t),
                        w: Vector::zeros(0),
                    }
                } else {
                    let d = lo * hi;
                    ConeMultiplier {
                        nu: 2.0 * t / (tau * d),
                        w: z * (-2.0 / (tau * d)),
                    }
                }
            })
            .collect()
    }
}

enum Centering {
    Done,
    Stopped,
    Stalled,
    OutOfIterations,
}

/// Minimizes `τ f + Σψ` from `y` by damped Newton; `y` is updated in place.
#[allow(clippy::too_many_arguments)]
fn center(
    prob: &Problem<'_>,
    tau: f64,
    y: &mut Vector,
    newton_tol: f64,
    stationarity: Option<f64>,
    params: &BarrierParams,
    budget: &mut usize,
    stop_early: Option<&dyn Fn(&Vector) -> bool>,
) -> Centering {
    let Some(mut value) = prob.merit(tau, y) else {
        return Centering::Stalled;
    };
    loop {
        let (grad, hess) = prob.derivatives(tau, y);
        let Some(step) = solve_spd(&hess, &(-&grad)) else {
            return Centering::Stalled;
        };
        let decrement = -grad.dot(&step);
        let stationary = stationarity.is_none_or(|tol| grad.norm() / tau <= tol);
        if decrement <= 2.0 * newton_tol && stationary {
            return Centering::Done;
        }
        if *budget == 0 {
            return Centering::OutOfIterations;
        }
        *budget -= 1;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = &*y + &step * alpha;
            if let Some(v) = prob.merit(tau, &trial) {
                if v <= value - params.armijo * alpha * decrement {
                    accepted = Some((trial, v));
                    break;
                }
            }
            alpha *= params.backtrack;
        }
        match accepted {
            Some((trial, v)) => {
                let improvement = value - v;
                let moved = (&trial - &*y).norm() > 1e-15 * (1.0 + y.norm());
                *y = trial;
                value = v;
                if !moved {
                    return if stationary { Centering::Done } else { Centering::Stalled };
                }
                if stop_early.is_some_and(|stop| stop(y)) {
                    return Centering::Stopped;
                }
                // at the floating-point floor the merit no longer moves
                if improvement <= 1e-15 * value.abs().max(1.0) && decrement <= 1e-6 {
                    return if stationary { Centering::Done } else { Centering::Stalled };
                }
            }
            None => return Centering::Stalled,
        }
    }
}

/// Runs the barrier method from the strictly interior point `y0`.
pub(crate) fn minimize(
    objective: &Objective,
    cones: &[Cone],
    y0: Vector,
    tau0: f64,
    params: &BarrierParams,
    stop_early: Option<&dyn Fn(&Vector) -> bool>,
) -> BarrierOutcome {
    let prob = Problem {
        objective,
        cones,
        dim: y0.len(),
    };
    debug_assert!(is_interior(cones, &y0));
    let nu = prob.barrier_parameter();
    let mut y = y0;
    let mut tau = tau0;
    let mut budget = params.max_newton;
    let mut converged = stop_early.is_some_and(|stop| stop(&y));
    while !converged {
        let gap = nu / tau;
        let target = params.gap_abs + params.gap_rel * objective.value(&y).abs();
        let last = gap <= target;
        let stationarity = last.then_some(params.stationarity);
        let newton_tol = if last { 1e-14 } else { 1e-6 };
        match center(&prob, tau, &mut y, newton_tol, stationarity, params, &mut budget, stop_early) {
            Centering::Done => {}
            Centering::Stopped => {
                converged = true;
                break;
            }
            Centering::Stalled => {
                // the iterate is still interior and usually well centered;
                // accept it if the gap target is met
                if last {
                    converged = true;
                    break;
                }
            }
            Centering::OutOfIterations => break,
        }
        if stop_early.is_some_and(|stop| stop(&y)) {
            converged = true;
            break;
        }
        let target = params.gap_abs + params.gap_rel * objective.value(&y).abs();
        if nu / tau <= target {
            converged = true;
            break;
        }
        tau *= params.growth;
    }
    BarrierOutcome {
        multipliers: prob.multipliers(tau, &y),
        gap: nu / tau,
        y,
        newton_iterations: params.max_newton - budget,
        converged,
    }
}
