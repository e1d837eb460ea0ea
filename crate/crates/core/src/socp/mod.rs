//! Minimum-norm control under a stack of SOCCs.
//!
//! [`solve_min_norm`] first runs [`phase1`], which minimizes the largest
//! constraint residual. A negative optimum certifies strict feasibility; the
//! witness then seeds a barrier method on `½‖u‖²`. The result is polished by
//! a few Newton steps on the active constraints, which recovers multipliers
//! to near machine precision.

mod barrier;
mod oracle;

use thiserror::Error;

use crate::constraints::Socc;
use crate::{Matrix, Vector};
use barrier::{BarrierParams, Cone, Objective};

pub use oracle::brute_force_min_norm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("a program needs at least one constraint")]
    EmptyProgram,
    #[error("constraint {index} has input dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid solver setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error("{phase} did not converge within {iterations} Newton iterations")]
    MaxIterations {
        phase: &'static str,
        iterations: usize,
    },
    #[error("no grid point satisfies all constraints")]
    EmptyFeasibleGrid,
    #[error("grid search supports m <= 3, got m = {m}")]
    GridTooLarge { m: usize },
    #[error("invalid grid parameter {name} = {value}")]
    InvalidGrid { name: &'static str, value: f64 },
}

/// An ordered list of SOCCs sharing the input dimension `m`.
#[derive(Debug, Clone)]
pub struct SoccProgram {
    constraints: Vec<Socc>,
    m: usize,
}

impl SoccProgram {
    pub fn new(constraints: Vec<Socc>) -> Result<Self, SolverError> {
        let m = constraints.first().ok_or(SolverError::EmptyProgram)?.m();
        for (index, s) in constraints.iter().enumerate() {
            if s.m() != m {
                return Err(SolverError::DimensionMismatch {
                    index,
                    expected: m,
                    got: s.m(),
                });
            }
        }
        Ok(Self { constraints, m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Socc] {
        &self.constraints
    }

    pub fn residuals(&self, u: &Vector) -> Vec<f64> {
        self.constraints.iter().map(|s| s.residual(u)).collect()
    }

    pub fn max_residual(&self, u: &Vector) -> f64 {
        self.constraints
            .iter()
            .map(|s| s.residual(u))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn max_residual_slice(&self, u: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for s in &self.constraints {
            worst = worst.max(s.residual_slice(u));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol_feas: f64,
    pub tol_kkt: f64,
    pub tol_strict: f64,
    /// Newton iteration budget for each of phase I and the main solve.
    pub max_iterations: usize,
    pub barrier_growth: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Lower cap on the phase-I value.
    pub phase1_cap: f64,
    /// Norm bound on `u` in phase I, which keeps unbounded directions finite.
    pub phase1_radius: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_kkt: 1e-8,
            tol_strict: 1e-9,
            max_iterations: 200,
            barrier_growth: 10.0,
            armijo: 0.25,
            backtrack: 0.5,
            phase1_cap: 1e6,
            phase1_radius: 1e8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("tol_feas", self.tol_feas),
            ("tol_kkt", self.tol_kkt),
            ("tol_strict", self.tol_strict),
            ("phase1_cap", self.phase1_cap),
            ("phase1_radius", self.phase1_radius),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SolverError::InvalidConfig { name, value });
            }
        }
        if !(self.barrier_growth > 1.0) {
            return Err(SolverError::InvalidConfig {
                name: "barrier_growth",
                value: self.barrier_growth,
            });
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(SolverError::InvalidConfig {
                name: "armijo",
                value: self.armijo,
            });
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SolverError::InvalidConfig {
                name: "backtrack",
                value: self.backtrack,
            });
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig {
                name: "max_iterations",
                value: 0.0,
            });
        }
        Ok(())
    }

    fn barrier_params(&self, gap_abs: f64, gap_rel: f64) -> BarrierParams {
        BarrierParams {
            growth: self.barrier_growth,
            gap_abs,
            gap_rel,
            stationarity: 1e-6,
            max_newton: self.max_iterations,
            armijo: self.armijo,
            backtrack: self.backtrack,
        }
    }
}

/// Phase-I witness level at which strict feasibility is taken as settled.
pub const PHASE1_CLEAR_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Result {
    /// `min_u max_i residual_i(u)`, capped below at `−phase1_cap`. Once a
    /// witness reaches `−PHASE1_CLEAR_MARGIN` the solve stops, so below that
    /// level the value is only an upper bound.
    pub t_star: f64,
    pub witness: Vector,
    /// Duality gap bound of the barrier solve.
    pub gap: f64,
    pub iterations: usize,
}

impl Phase1Result {
    pub fn strictly_feasible(&self, cfg: &SolverConfig) -> bool {
        self.t_star < -cfg.tol_strict
    }

    pub fn marginal(&self, cfg: &SolverConfig) -> bool {
        self.t_star.abs() <= cfg.tol_strict
    }
}

/// Minimizes `t` subject to `residual_i(u) ≤ t` for all constraints.
pub fn phase1(prog: &SoccProgram, cfg: &SolverConfig) -> Result<Phase1Result, SolverError> {
    cfg.validate()?;
    let m = prog.m();
    let dim = m + 1;
    let mut cones = Vec::with_capacity(prog.p() + 2);
    for s in prog.constraints() {
        let mut a = Matrix::zeros(m + 1, dim);
        a.view_mut((0, 0), (m + 1, m)).copy_from(s.q());
        let mut g = Vector::zeros(dim);
        g.rows_mut(0, m).copy_from(s.b());
        g[m] = 1.0;
        cones.push(Cone {
            a,
            a0: s.r().clone(),
            g,
            h: s.c(),
        });
    }
    let mut e_s = Vector::zeros(dim);
    e_s[m] = 1.0;
    cones.push(Cone {
        a: Matrix::zeros(0, dim),
        a0: Vector::zeros(0),
        g: e_s.clone(),
        h: cfg.phase1_cap,
    });
    let mut ball = Matrix::zeros(m, dim);
    ball.view_mut((0, 0), (m, m)).fill_with_identity();
    cones.push(Cone {
        a: ball,
        a0: Vector::zeros(m),
        g: Vector::zeros(dim),
        h: cfg.phase1_radius,
    });

    let u0 = Vector::zeros(m);
    let r0 = prog.max_residual(&u0);
    let mut y0 = Vector::zeros(dim);
    y0[m] = (r0 + 1.0).max(1.0 - cfg.phase1_cap);

    let witness_value = |y: &Vector| prog.max_residual(&y.rows(0, m).into_owned());
    let cap = cfg.phase1_cap;
    let params = cfg.barrier_params(0.1 * cfg.tol_kkt, 0.1 * cfg.tol_kkt);
    let out = barrier::minimize(
        &Objective::Linear(e_s),
        &cones,
        y0,
        1.0,
        &params,
        Some(&|y: &Vector| witness_value(y) <= -PHASE1_CLEAR_MARGIN),
    );
    if !out.converged {
        return Err(SolverError::MaxIterations {
            phase: "phase I",
            iterations: out.newton_iterations,
        });
    }
    let witness = out.y.rows(0, m).into_owned();
    let t_star = prog.max_residual(&witness).max(-cap);
    Ok(Phase1Result {
        t_star,
        witness,
        gap: out.gap,
        iterations: out.newton_iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    MaxIterations,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max_iterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub u_star: Option<Vector>,
    /// One nonnegative multiplier per constraint (when feasible).
    pub multipliers: Option<Vec<f64>>,
    pub kkt_residual: f64,
    /// Phase-I value `t*`; always set.
    pub phase1_value: f64,
    /// `|t*| ≤ tol_strict`: the program sits on the feasibility boundary.
    pub marginal: bool,
    pub phase1_witness: Vector,
    pub iterations: usize,
}

impl SolveResult {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// Components of the KKT residual of `min ½‖u‖²` s.t. `residual_i(u) ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub complementarity: f64,
    pub dual_infeasibility: f64,
    pub primal_infeasibility: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.complementarity)
            .max(self.dual_infeasibility)
            .max(self.primal_infeasibility)
    }
}

/// Gradient of `‖Qu+r‖ − bu − c`. At points with `Qu+r = 0` the subgradient
/// element `−b` is used, so the stationarity term is then an upper bound.
pub fn residual_gradient(s: &Socc, u: &Vector) -> Vector {
    let z = s.q() * u + s.r();
    let zn = z.norm();
    let mut grad = -s.b().clone();
    if zn > 0.0 {
        grad += s.q().tr_mul(&z) / zn;
    }
    grad
}

/// KKT residual in terms of per-constraint multipliers `λ`:
/// `‖u + Σ λᵢ ∇residualᵢ‖`, `max λᵢ|residualᵢ|`, `max(−λᵢ)`, `max residualᵢ`.
pub fn kkt_residual(prog: &SoccProgram, u: &Vector, multipliers: &[f64]) -> KktReport {
    let mut station = u.clone();
    let mut complementarity: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut primal: f64 = 0.0;
    for (s, &lambda) in prog.constraints().iter().zip(multipliers) {
        let res = s.residual(u);
        station.axpy(lambda, &residual_gradient(s, u), 1.0);
        complementarity = complementarity.max((lambda * res).abs());
        dual = dual.max(-lambda);
        primal = primal.max(res);
    }
    KktReport {
        stationarity: station.norm(),
        complementarity,
        dual_infeasibility: dual,
        primal_infeasibility: primal,
    }
}

/// Size of the terms in the stationarity equation, `1 + ‖u‖ + Σ λᵢ‖∇residualᵢ‖`.
/// Reported KKT residuals are absolute; the acceptance test is relative to this.
pub fn kkt_scale(prog: &SoccProgram, u: &Vector, multipliers: &[f64]) -> f64 {
    let terms: f64 = prog
        .constraints()
        .iter()
        .zip(multipliers)
        .map(|(s, &l)| l.abs() * residual_gradient(s, u).norm())
        .sum();
    1.0 + u.norm() + terms
}

/// Cone-form KKT residual using the barrier's `(ν, w)` pairs.
fn conic_kkt(prog: &SoccProgram, u: &Vector, duals: &[barrier::ConeMultiplier]) -> f64 {
    let mut station = u.clone();
    let mut complementarity = 0.0;
    let mut dual: f64 = 0.0;
    for (s, d) in prog.constraints().iter().zip(duals) {
        station.axpy(-d.nu, s.b(), 1.0);
        station -= s.q().tr_mul(&d.w);
        let t = s.b().dot(u) + s.c();
        let z = s.q() * u + s.r();
        complementarity += d.nu * t + d.w.dot(&z);
        dual = dual.max(d.w.norm() - d.nu);
    }
    let primal = prog.max_residual(u).max(0.0);
    station
        .norm()
        .max(complementarity.abs())
        .max(dual)
        .max(primal)
}

/// Solves `min ½‖u‖²` subject to every SOCC of `prog`.
pub fn solve_min_norm(prog: &SoccProgram, cfg: &SolverConfig) -> Result<SolveResult, SolverError> {
    cfg.validate()?;
    let m = prog.m();
    let p1 = match phase1(prog, cfg) {
        Ok(p1) => p1,
        Err(SolverError::MaxIterations { iterations, .. }) => {
            return Ok(SolveResult {
                status: SolveStatus::MaxIterations,
                u_star: None,
                multipliers: None,
                kkt_residual: f64::INFINITY,
                phase1_value: f64::NAN,
                marginal: false,
                phase1_witness: Vector::zeros(m),
                iterations,
            })
        }
        Err(e) => return Err(e),
    };
    let mut result = SolveResult {
        status: SolveStatus::Infeasible,
        u_star: None,
        multipliers: None,
        kkt_residual: p1.gap,
        phase1_value: p1.t_star,
        marginal: p1.marginal(cfg),
        phase1_witness: p1.witness.clone(),
        iterations: p1.iterations,
    };
    if !p1.strictly_feasible(cfg) {
        return Ok(result);
    }

    let zero = Vector::zeros(m);
    if prog.max_residual(&zero) <= 0.0 {
        result.status = SolveStatus::Feasible;
        result.u_star = Some(zero);
        result.multipliers = Some(vec![0.0; prog.p()]);
        result.kkt_residual = 0.0;
        return Ok(result);
    }

    let u0 = interior_start(prog, &p1);
    let cones: Vec<Cone> = prog
        .constraints()
        .iter()
        .map(|s| Cone {
            a: s.q().clone(),
            a0: s.r().clone(),
            g: s.b().clone(),
            h: s.c(),
        })
        .collect();
    let nu = 2.0 * prog.p() as f64;
    let tau0 = (nu / (0.5 * u0.norm_squared()).max(1e-12)).max(1.0);
    let params = cfg.barrier_params(0.1 * cfg.tol_kkt, 0.0);
    let out = barrier::minimize(&Objective::HalfSquaredNorm, &cones, u0, tau0, &params, None);
    result.iterations += out.newton_iterations;

    let barrier_lambda: Vec<f64> = out.multipliers.iter().map(|d| d.nu).collect();
    let barrier_kkt = conic_kkt(prog, &out.y, &out.multipliers);
    let (u, lambda, kkt) = match polish(prog, &out.y, cfg) {
        Some((u, lambda, k)) => {
            if k <= barrier_kkt {
                (u, lambda, k)
            } else {
                (out.y, barrier_lambda, barrier_kkt)
            }
        }
        None => (out.y, barrier_lambda, barrier_kkt),
    };
    result.status = if out.converged
        && prog.max_residual(&u) <= cfg.tol_feas
        && kkt <= cfg.tol_kkt * kkt_scale(prog, &u, &lambda)
    {
        SolveStatus::Feasible
    } else {
        SolveStatus::MaxIterations
    };
    result.u_star = Some(u);
    result.multipliers = Some(lambda);
    result.kkt_residual = kkt;
    Ok(result)
}

/// Pulls the phase-I witness toward the origin while keeping a safe margin
/// inside the feasible set.
fn interior_start(prog: &SoccProgram, p1: &Phase1Result) -> Vector {
    let target = (0.5 * p1.t_star).max(-1.0);
    let w = &p1.witness;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if prog.max_residual(&(w * mid)) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    w * hi
}

/// Newton iterations on `min ½‖u‖²` s.t. `residual_i(u) = 0` over subsets
/// of the constraints that are nearly active at the barrier solution; the
/// valid candidate with the smallest KKT residual wins.
fn polish(prog: &SoccProgram, u_barrier: &Vector, cfg: &SolverConfig) -> Option<(Vector, Vec<f64>, f64)> {
    let scale = 1.0 + u_barrier.norm();
    let near: Vec<usize> = prog
        .constraints()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.residual(u_barrier) >= -1e-6 * scale)
        .map(|(i, _)| i)
        .take(8)
        .collect();
    let mut best: Option<(Vector, Vec<f64>, f64)> = None;
    for mask in 1u32..(1 << near.len()) {
        let active: Vec<usize> = near
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &i)| i)
            .collect();
        if active.len() > prog.m() {
            continue;
        }
        let Some((u, lambda)) = polish_on(prog, &active, u_barrier, scale, cfg) else {
            continue;
        };
        let kkt = kkt_residual(prog, &u, &lambda).max();
        if best.as_ref().is_none_or(|b| kkt < b.2) {
            best = Some((u, lambda, kkt));
        }
    }
    best
}

/// Newton's method on `u + Jᵀμ = 0`, `residual_A(u) = 0`.
fn polish_on(
    prog: &SoccProgram,
    active: &[usize],
    u_barrier: &Vector,
    scale: f64,
    cfg: &SolverConfig,
) -> Option<(Vector, Vec<f64>)> {
    let m = prog.m();
    let k = active.len();
    let mut u = u_barrier.clone();
    let mut mu: Option<Vector> = None;
    for _ in 0..30 {
        let mut jac = Matrix::zeros(k, m);
        let mut res = Vector::zeros(k);
        let mut curvature = Vec::with_capacity(k);
        for (row, &i) in active.iter().enumerate() {
            let s = &prog.constraints()[i];
            let z = s.q() * &u + s.r();
            let zn = z.norm();
            if s.q().norm() > 0.0 && zn < 1e-10 * scale {
                return None;
            }
            jac.row_mut(row).copy_from(&residual_gradient(s, &u).transpose());
            res[row] = s.residual(&u);
            // ∇²‖Qu + r‖ = Qᵀ(I − ẑẑᵀ)Q / ‖z‖
            let hess = if zn > 0.0 {
                let qz = s.q().tr_mul(&z) / zn;
                (s.q().tr_mul(s.q()) - &qz * qz.transpose()) / zn
            } else {
                Matrix::zeros(m, m)
            };
            curvature.push(hess);
        }
        let lambda = match mu.take() {
            Some(l) => l,
            None => (&jac * jac.transpose()).cholesky()?.solve(&(-(&jac * &u))),
        };
        let mut kkt = Matrix::zeros(m + k, m + k);
        let mut hess = Matrix::identity(m, m);
        for (l, h) in lambda.iter().zip(&curvature) {
            hess += h * *l;
        }
        kkt.view_mut((0, 0), (m, m)).copy_from(&hess);
        kkt.view_mut((0, m), (m, k)).copy_from(&jac.transpose());
        kkt.view_mut((m, 0), (k, m)).copy_from(&jac);
        let mut rhs = Vector::zeros(m + k);
        rhs.rows_mut(0, m).copy_from(&(-(&u + jac.tr_mul(&lambda))));
        rhs.rows_mut(m, k).copy_from(&(-&res));
        let step = kkt.lu().solve(&rhs)?;
        u += step.rows(0, m);
        let next = lambda + step.rows(m, k);
        let size = step.rows(0, m).norm();
        mu = Some(next);
        if !u.iter().all(|v| v.is_finite()) {
            return None;
        }
        if size <= 1e-15 * scale {
            break;
        }
    }
    let mu = mu?;
    if mu.iter().any(|&l| l < -cfg.tol_kkt) {
        return None;
    }
    if (&u - u_barrier).norm() > 1e-4 * scale || prog.max_residual(&u) > cfg.tol_feas {
        return None;
    }
    let mut lambda = vec![0.0; prog.p()];
    for (k, &i) in active.iter().enumerate() {
        lambda[i] = mu[k].max(0.0);
    }
    Some((u, lambda))
}

/// Values `(g₁, g₂)` of the squared reformulation
/// `g₁ = uᵀ(QᵀQ − bbᵀ)u + ‖r‖² + 2(Qᵀr − cb)ᵀu − c²`, `g₂ = −bu − c`.
/// Both are nonpositive exactly when the SOCC holds at `u`.
pub fn squared_constraints(s: &Socc, u: &Vector) -> (f64, f64) {
    let q = s.q();
    let qtq = q.tr_mul(q);
    let b = s.b();
    let c = s.c();
    let quad = u.dot(&(&qtq * u)) - b.dot(u).powi(2);
    let lin = 2.0 * (q.tr_mul(s.r()) - b * c).dot(u);
    let g1 = quad + s.r().norm_squared() + lin - c * c;
    let g2 = -b.dot(u) - c;
    (g1, g2)
}
