//! Explicit sufficient conditions for strict compatibility of the CLF and
//! CBF constraints, evaluated pointwise and over grids.
//!
//! Worst-case form, with `B(x)` bounding the norm of some control satisfying
//! the true slack inequalities:
//!
//! ```text
//! ‖∇V‖(e_f + e_g B) < ½S
//! (e_∇h + ‖∇ĥ‖)(e_f + e_g B) + K_α e_h + e_∇h(‖f̂‖ + ‖ĝ‖B) < ½(η_h + ζ(h))
//! ```
//!
//! GP form: `σ_max(G_V) < S / (2β√(1+B²))` and
//! `σ_max(G_h) < (η_h + ζ(h)) / (2β√(1+B²))`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::certificate::{Barrier, CbfSpec, ClfSpec};
use crate::constraints::{worstcase_soccs, ConstraintError, GpTerms, Socc, WorstCaseModel};
use crate::linalg::{sigma_max, spectral_norm};
use crate::region::Grid;
use crate::socp::{phase1, solve_min_norm, SoccProgram, SolverConfig, SolverError};
use crate::system::AffineDynamics;
use crate::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("the conditions are stated away from the origin")]
    AtOrigin,
    #[error("the slack inequalities are not strictly compatible at {point:?} (phase-I value {t_star})")]
    SlackInfeasible { point: Vec<f64>, t_star: f64 },
    #[error("bound factor must be at least 1, got {0}")]
    InvalidFactor(f64),
    #[error("constant bound must be nonnegative, got {0}")]
    InvalidBound(f64),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatMargins {
    pub clf_margin: f64,
    pub cbf_margin: f64,
    pub holds_clf: bool,
    pub holds_cbf: bool,
    /// 1 for the worst-case conditions, `1 − 2δ` for the GP ones.
    pub confidence: f64,
}

impl CompatMargins {
    pub fn new(clf_margin: f64, cbf_margin: f64, confidence: f64) -> Self {
        Self {
            clf_margin,
            cbf_margin,
            holds_clf: clf_margin > 0.0,
            holds_cbf: cbf_margin > 0.0,
            confidence,
        }
    }

    pub fn holds(&self) -> bool {
        self.holds_clf && self.holds_cbf
    }
}

/// Upper bound `B(x)` on the norm of a control satisfying both slack
/// inequalities.
#[derive(Clone)]
pub enum BoundB {
    Constant(f64),
    /// Grid values of `‖u_slack‖`; `B(x)` is the factor times the largest
    /// value at the corners of the cell containing `x`.
    Analysis(AnalysisBound),
    /// Solves the slack program at every query.
    Pointwise(Arc<SlackProblem>),
}

impl std::fmt::Debug for BoundB {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundB::Constant(v) => write!(f, "Constant({v})"),
            BoundB::Analysis(a) => write!(f, "Analysis(factor {})", a.factor),
            BoundB::Pointwise(_) => f.write_str("Pointwise"),
        }
    }
}

impl BoundB {
    pub fn constant(value: f64) -> Result<Self, FeasibilityError> {
        if !(value >= 0.0) {
            return Err(FeasibilityError::InvalidBound(value));
        }
        Ok(BoundB::Constant(value))
    }

    /// `B(x)`; `+∞` where no finite bound is known.
    pub fn evaluate(&self, x: &Vector) -> f64 {
        match self {
            BoundB::Constant(v) => *v,
            BoundB::Analysis(a) => a.evaluate(x),
            BoundB::Pointwise(p) => p.min_norm(x).unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisBound {
    grid: Grid,
    /// `‖u_slack‖` per grid node; NaN at excluded nodes.
    norms: Vec<f64>,
    factor: f64,
}

impl AnalysisBound {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn node_norms(&self) -> &[f64] {
        &self.norms
    }

    fn evaluate(&self, x: &Vector) -> f64 {
        let worst = self
            .grid
            .cell_corners(x)
            .into_iter()
            .map(|i| self.norms[i])
            .filter(|v| !v.is_nan())
            .fold(f64::NAN, f64::max);
        if worst.is_nan() {
            f64::INFINITY
        } else {
            self.factor * worst
        }
    }
}

/// The true-dynamics slack program
/// `min ½‖u‖²` s.t. `L_fV + L_gV u + W ≤ −S`, `∇hᵀ(f + g u) + α(h) ≥ η_h + ζ(h)`.
#[derive(Clone)]
pub struct SlackProblem {
    pub truth: AffineDynamics,
    pub clf: ClfSpec,
    pub cbf: CbfSpec,
    pub barrier: Barrier,
    pub cfg: SolverConfig,
}

impl SlackProblem {
    pub fn program(&self, x: &Vector) -> Result<SoccProgram, FeasibilityError> {
        let f = self.truth.drift(x);
        let g = self.truth.input_matrix(x);
        let grad_v = self.clf.gradient(x);
        let clf = Socc::affine(
            -g.tr_mul(&grad_v),
            -grad_v.dot(&f) - self.clf.decay(x) - self.clf.slack(x),
        )?;
        let h = self.barrier.value(x);
        let grad_h = self.barrier.gradient(x);
        let cbf = Socc::affine(
            g.tr_mul(&grad_h),
            grad_h.dot(&f) + self.cbf.alpha().eval(h) - self.cbf.eta_h() - self.cbf.zeta(h),
        )?;
        Ok(SoccProgram::new(vec![clf, cbf])?)
    }

    /// `‖u_slack(x)‖`.
    pub fn min_norm(&self, x: &Vector) -> Result<f64, FeasibilityError> {
        let res = solve_min_norm(&self.program(x)?, &self.cfg)?;
        match res.u_star {
            Some(u) if res.is_feasible() => Ok(u.norm()),
            _ => Err(FeasibilityError::SlackInfeasible {
                point: x.iter().cloned().collect(),
                t_star: res.phase1_value,
            }),
        }
    }
}

/// Solves the slack program at every grid node accepted by `keep` and
/// stores `‖u_slack‖`; `B` is then `factor` times the largest value at the
/// corners of the cell containing the query.
pub fn compute_bound_b_analysis(
    slack: &SlackProblem,
    grid: &Grid,
    factor: f64,
    keep: impl Fn(&Vector) -> bool + Sync,
) -> Result<BoundB, FeasibilityError> {
    if !(factor >= 1.0) {
        return Err(FeasibilityError::InvalidFactor(factor));
    }
    let norms = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            if keep(&x) {
                slack.min_norm(&x)
            } else {
                Ok(f64::NAN)
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(BoundB::Analysis(AnalysisBound {
        grid: grid.clone(),
        norms,
        factor,
    }))
}

fn reject_origin(x: &Vector) -> Result<(), FeasibilityError> {
    if x.iter().all(|&v| v == 0.0) {
        Err(FeasibilityError::AtOrigin)
    } else {
        Ok(())
    }
}

/// Worst-case conditions at `x`. `h_lb` defaults to `ĥ − e_h`.
pub fn check_worstcase_compat(
    model: &dyn WorstCaseModel,
    clf: &ClfSpec,
    cbf: &CbfSpec,
    h_lb: Option<&dyn Fn(&Vector) -> f64>,
    bound: &BoundB,
    x: &Vector,
) -> Result<CompatMargins, FeasibilityError> {
    reject_origin(x)?;
    let e = model.evaluate(x)?;
    let b = bound.evaluate(x);
    let grad_v = clf.gradient(x).norm();
    let input_err = if e.e_g == 0.0 { e.e_f } else { e.e_f + e.e_g * b };
    let clf_margin = 0.5 * clf.slack(x) - grad_v * input_err;
    let h_low = h_lb.map_or(e.hhat - e.e_h, |f| f(x));
    let g_norm = spectral_norm(&e.ghat);
    let drift_part = if g_norm == 0.0 {
        e.fhat.norm()
    } else {
        e.fhat.norm() + g_norm * b
    };
    let loss = (e.e_gradh + e.gradh_hat.norm()) * input_err
        + cbf.alpha().lipschitz() * e.e_h
        + if e.e_gradh == 0.0 { 0.0 } else { e.e_gradh * drift_part };
    let cbf_margin = 0.5 * (cbf.eta_h() + cbf.zeta(h_low)) - loss;
    Ok(CompatMargins::new(clf_margin, cbf_margin, 1.0))
}

/// GP conditions at `x`. `h_lb` is evaluated for `ζ`.
pub fn check_gp_compat(
    terms: &GpTerms,
    clf: &ClfSpec,
    cbf: &CbfSpec,
    h_lb: &dyn Fn(&Vector) -> f64,
    bound: &BoundB,
    x: &Vector,
) -> Result<CompatMargins, FeasibilityError> {
    reject_origin(x)?;
    let (_, g_v) = terms.eval_v(x)?;
    let (_, g_h) = terms.eval_h(x)?;
    let b = bound.evaluate(x);
    let scale = 2.0 * terms.beta_delta() * (1.0 + b * b).sqrt();
    let clf_rhs = clf.slack(x) / scale;
    let cbf_rhs = (cbf.eta_h() + cbf.zeta(h_lb(x))) / scale;
    Ok(CompatMargins::new(
        clf_rhs - sigma_max(&g_v),
        cbf_rhs - sigma_max(&g_h),
        terms.confidence(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapCell {
    pub x: Vector,
    pub margins: CompatMargins,
    pub phase1_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityMap {
    pub cells: Vec<MapCell>,
}

impl FeasibilityMap {
    /// Cells where the conditions hold but phase I does not certify strict
    /// feasibility.
    pub fn soundness_violations(&self, tol_strict: f64) -> Vec<&MapCell> {
        self.cells
            .iter()
            .filter(|c| c.margins.holds() && !(c.phase1_t < -tol_strict))
            .collect()
    }

    /// Cells where the conditions fail although phase I is strictly negative.
    pub fn conservative_cells(&self, tol_strict: f64) -> usize {
        self.cells
            .iter()
            .filter(|c| !c.margins.holds() && c.phase1_t < -tol_strict)
            .count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeasibilityError> {
        let csv_err = |e: csv::Error| FeasibilityError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        let n = self.cells.first().map_or(0, |c| c.x.len());
        let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        header.extend(
            ["clf_margin", "cbf_margin", "holds_clf", "holds_cbf", "phase1_t"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header).map_err(csv_err)?;
        for c in &self.cells {
            let mut row: Vec<String> = c.x.iter().map(|v| v.to_string()).collect();
            row.push(c.margins.clf_margin.to_string());
            row.push(c.margins.cbf_margin.to_string());
            row.push(c.margins.holds_clf.to_string());
            row.push(c.margins.holds_cbf.to_string());
            row.push(c.phase1_t.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| FeasibilityError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Evaluates `checker` and the phase-I value of `program` at every grid node
/// accepted by `keep`, in parallel; cells keep grid order.
pub fn feasibility_map<C, P>(
    grid: &Grid,
    keep: impl Fn(&Vector) -> bool + Sync,
    checker: C,
    program: P,
    cfg: &SolverConfig,
) -> Result<FeasibilityMap, FeasibilityError>
where
    C: Fn(&Vector) -> Result<CompatMargins, FeasibilityError> + Sync,
    P: Fn(&Vector) -> Result<SoccProgram, FeasibilityError> + Sync,
{
    let cells = (0..grid.len())
        .into_par_iter()
        .filter_map(|i| {
            let x = grid.point(i);
            keep(&x).then_some(x)
        })
        .map(|x| {
            let margins = checker(&x)?;
            let p1 = phase1(&program(&x)?, cfg)?;
            Ok(MapCell {
                x,
                margins,
                phase1_t: p1.t_star,
            })
        })
        .collect::<Result<Vec<_>, FeasibilityError>>()?;
    Ok(FeasibilityMap { cells })
}

/// [`feasibility_map`] for the worst-case conditions and SOCC pair.
pub fn worstcase_feasibility_map(
    model: &dyn WorstCaseModel,
    clf: &ClfSpec,
    cbf: &CbfSpec,
    bound: &BoundB,
    grid: &Grid,
    keep: impl Fn(&Vector) -> bool + Sync,
    cfg: &SolverConfig,
) -> Result<FeasibilityMap, FeasibilityError> {
    feasibility_map(
        grid,
        keep,
        |x| check_worstcase_compat(model, clf, cbf, None, bound, x),
        |x| Ok(SoccProgram::new(worstcase_soccs(model, clf, cbf, x)?.to_vec())?),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::FnWorstCaseModel;
    use crate::planar;
    use crate::region::Region;
    use crate::Matrix;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn exact() -> FnWorstCaseModel {
        FnWorstCaseModel::exact(&planar::dynamics(), &planar::barrier())
    }

    fn slack() -> SlackProblem {
        SlackProblem {
            truth: planar::dynamics(),
            clf: planar::clf(),
            cbf: planar::cbf(),
            barrier: planar::barrier(),
            cfg: SolverConfig::default(),
        }
    }

    #[test]
    fn zero_errors_hold_with_half_slack() {
        let x = v(&[1.0, 0.0]);
        let m = check_worstcase_compat(&exact(), &planar::clf(), &planar::cbf(), None, &BoundB::Constant(3.0), &x)
            .unwrap();
        assert!(m.holds());
        assert_relative_eq!(m.clf_margin, 0.25);
        assert_relative_eq!(m.cbf_margin, 0.25);
        assert_eq!(m.confidence, 1.0);
    }

    #[test]
    fn clf_margin_examples() {
        let x = v(&[1.0, 0.0]);
        let b = BoundB::constant(3.0).unwrap();
        let ok = exact().with_constant_errors(0.05, 0.0, 0.0, 0.0);
        let m = check_worstcase_compat(&ok, &planar::clf(), &planar::cbf(), None, &b, &x).unwrap();
        assert_relative_eq!(m.clf_margin, 0.20, epsilon = 1e-15);
        assert!(m.holds_clf);
        let bad = exact().with_constant_errors(0.3, 0.0, 0.0, 0.0);
        let m = check_worstcase_compat(&bad, &planar::clf(), &planar::cbf(), None, &b, &x).unwrap();
        assert_relative_eq!(m.clf_margin, -0.05, epsilon = 1e-15);
        assert!(!m.holds_clf);
    }

    #[test]
    fn origin_is_rejected() {
        let r = check_worstcase_compat(
            &exact(),
            &planar::clf(),
            &planar::cbf(),
            None,
            &BoundB::Constant(1.0),
            &Vector::zeros(2),
        );
        assert_eq!(r.unwrap_err(), FeasibilityError::AtOrigin);
    }

    fn diag_terms(g_v: f64, g_h: f64, beta: f64) -> GpTerms {
        GpTerms::new(
            2,
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(move |_: &Vector| Matrix::from_diagonal_element(3, 3, g_v)),
            Arc::new(|_: &Vector| Vector::zeros(3)),
            Arc::new(move |_: &Vector| Matrix::from_diagonal_element(3, 3, g_h)),
            beta,
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn gp_margin_examples() {
        let x = v(&[1.0, 0.0]);
        let h_lb = |x: &Vector| planar::barrier().value(x);
        let m = check_gp_compat(&diag_terms(0.2, 0.0, 1.0), &planar::clf(), &planar::cbf(), &h_lb, &BoundB::Constant(0.0), &x)
            .unwrap();
        assert_relative_eq!(m.clf_margin, 0.05, epsilon = 1e-12);
        assert_relative_eq!(m.confidence, 0.9);
        let m = check_gp_compat(&diag_terms(0.2, 0.0, 1.0), &planar::clf(), &planar::cbf(), &h_lb, &BoundB::Constant(2.0), &x)
            .unwrap();
        assert_relative_eq!(m.clf_margin, 0.5 / (2.0 * 5f64.sqrt()) - 0.2, epsilon = 1e-12);
        assert!(!m.holds_clf);
        let m = check_gp_compat(&diag_terms(0.0, 0.0, 1.0), &planar::clf(), &planar::cbf(), &h_lb, &BoundB::Constant(0.0), &x)
            .unwrap();
        assert!(m.holds());
        assert_relative_eq!(m.cbf_margin, 0.25);
    }

    #[test]
    fn slack_solution_at_initial_condition() {
        let s = slack();
        let x = planar::x0();
        let prog = s.program(&x).unwrap();
        let res = solve_min_norm(&prog, &s.cfg).unwrap();
        assert!(res.is_feasible());
        let u = res.u_star.unwrap();
        // the min-norm CLF-only solution u = −2x violates the barrier slack,
        // so the barrier constraint is active
        let clf_only = -2.0 * &x;
        assert!(prog.constraints()[1].residual(&clf_only) > 0.0);
        assert!(prog.constraints()[1].residual(&u).abs() <= 1e-8);
        let oracle = crate::socp::brute_force_min_norm(&prog, 20.0, 1e-3).unwrap();
        assert!((u.norm() - oracle.norm()).abs() <= 1e-2);
        assert_relative_eq!(s.min_norm(&x).unwrap(), u.norm(), epsilon = 1e-12);
    }

    #[test]
    fn analysis_bound_dominates_grid_values_and_is_monotone_in_factor() {
        let s = slack();
        let grid = Grid::new(Region::new(vec![1.0, 5.0], vec![3.0, 7.0]), vec![5, 5]);
        let b1 = compute_bound_b_analysis(&s, &grid, 1.0, |_| true).unwrap();
        let b15 = compute_bound_b_analysis(&s, &grid, 1.5, |_| true).unwrap();
        for x in grid.points() {
            let exact = s.min_norm(&x).unwrap();
            assert!(b1.evaluate(&x) >= exact - 1e-12);
            assert!(b15.evaluate(&x) >= b1.evaluate(&x));
        }
        assert!(matches!(
            compute_bound_b_analysis(&s, &grid, 0.5, |_| true),
            Err(FeasibilityError::InvalidFactor(_))
        ));
    }

    #[test]
    fn bound_is_zero_where_origin_satisfies_slack() {
        // far below the obstacle with a drift that already decays
        let stable = AffineDynamics::linear(-2.0 * Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
        let s = SlackProblem {
            truth: stable,
            ..slack()
        };
        assert_eq!(s.min_norm(&v(&[0.5, -0.5])).unwrap(), 0.0);
    }

    #[test]
    fn slack_infeasible_point_reports_location() {
        // directly above the obstacle the two slack inequalities conflict
        let s = slack();
        let grid = Grid::new(Region::new(vec![0.0, 8.0], vec![0.0, 8.0]), vec![1, 1]);
        match compute_bound_b_analysis(&s, &grid, 1.0, |_| true) {
            Err(FeasibilityError::SlackInfeasible { point, .. }) => assert_eq!(point, vec![0.0, 8.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_error_map_holds_everywhere() {
        let grid = Grid::new(Region::new(vec![-5.0, -1.0], vec![5.0, 9.0]), vec![12, 12]);
        let map = worstcase_feasibility_map(
            &exact(),
            &planar::clf(),
            &planar::cbf(),
            &BoundB::Constant(1.0),
            &grid,
            |x| !planar::in_obstacle(x) && x.norm() > 1e-2,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(!map.cells.is_empty());
        assert!(map.cells.iter().all(|c| c.margins.holds()));
        assert!(map.soundness_violations(1e-9).is_empty());
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,x1,clf_margin,cbf_margin,holds_clf,holds_cbf,phase1_t\n"));
        assert_eq!(text.lines().count(), map.cells.len() + 1);
    }

    #[test]
    fn margins_decrease_with_errors_and_bound() {
        let x = v(&[1.5, 0.5]);
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let e = 0.02 * k as f64;
            let model = exact().with_constant_errors(e, e, e, e);
            let m = check_worstcase_compat(&model, &planar::clf(), &planar::cbf(), None, &BoundB::Constant(2.0), &x)
                .unwrap();
            assert!(m.cbf_margin <= prev);
            prev = m.cbf_margin;
        }
        let model = exact().with_constant_errors(0.1, 0.1, 0.0, 0.0);
        let lo = check_worstcase_compat(&model, &planar::clf(), &planar::cbf(), None, &BoundB::Constant(1.0), &x).unwrap();
        let hi = check_worstcase_compat(&model, &planar::clf(), &planar::cbf(), None, &BoundB::Constant(4.0), &x).unwrap();
        assert!(hi.clf_margin < lo.clf_margin);
        assert!(hi.cbf_margin < lo.cbf_margin);
    }
}
