//! Closed-loop simulation with a sampled min-norm controller.
//!
//! At every control instant the worst-case CLF and CBF constraints are
//! built from the current model and the min-norm program is solved. The
//! control is held constant over the period while the true dynamics are
//! integrated with RK4. When the program is infeasible the run either halts
//! or, with online acquisition, measures the true dynamics at and around
//! the current state and solves again.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::certificate::{Barrier, CbfSpec, ClfSpec};
use crate::constraints::{worstcase_soccs, ConstraintError, FnWorstCaseModel, WorstCaseModel};
use crate::estimation::{
    acquire_on_infeasibility, build_worstcase_model, AcquisitionPattern, Dataset, EstimationError,
    LipschitzConstants, Oracle,
};
use crate::feasibility::{check_worstcase_compat, BoundB, CompatMargins, FeasibilityError, SlackProblem};
use crate::region::Region;
use crate::socp::{solve_min_norm, SoccProgram, SolveResult, SolveStatus, SolverConfig, SolverError};
use crate::system::AffineDynamics;
use crate::{planar, Vector};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("initial state is unsafe (h = {0})")]
    UnsafeStart(f64),
    #[error("invalid simulation setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error("state dimension {got} does not match the system ({expected})")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error("csv: {0}")]
    Csv(String),
}

/// The CLF, the CBF data and the barrier function itself.
#[derive(Clone)]
pub struct Certificates {
    pub clf: ClfSpec,
    pub cbf: CbfSpec,
    pub barrier: Barrier,
}

impl Certificates {
    pub fn planar() -> Self {
        Self {
            clf: planar::clf(),
            cbf: planar::cbf(),
            barrier: planar::barrier(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelSource {
    /// Estimates equal to the truth, all error bounds zero.
    Exact,
    NearestNeighbor {
        dataset: Dataset,
        lipschitz: LipschitzConstants,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopPolicy {
    HaltOnInfeasible,
    AcquireOnInfeasible {
        pattern: AcquisitionPattern,
        workspace: Region,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub x0: Vector,
    pub t_end: f64,
    pub control_period: f64,
    pub substeps: usize,
    pub stop_policy: StopPolicy,
    pub convergence_radius: f64,
    pub blowup_norm: f64,
    /// The input is held for at most `control_period`, and shorter when the
    /// model's bound on `‖x'‖` times the hold would exceed this distance.
    pub max_hold_displacement: f64,
    pub solver: SolverConfig,
    /// Evaluate the compatibility margins (with `B` from the true slack
    /// program) at every step.
    pub margins: bool,
}

impl SimConfig {
    pub fn new(x0: Vector) -> Self {
        Self {
            x0,
            t_end: 10.0,
            control_period: 0.01,
            substeps: 10,
            stop_policy: StopPolicy::HaltOnInfeasible,
            convergence_radius: 0.05,
            blowup_norm: 1e6,
            max_hold_displacement: 0.05,
            solver: SolverConfig::default(),
            margins: true,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let checks = [
            ("t_end", self.t_end, self.t_end > 0.0),
            ("control_period", self.control_period, self.control_period > 0.0),
            ("substeps", self.substeps as f64, self.substeps >= 1),
            (
                "convergence_radius",
                self.convergence_radius,
                self.convergence_radius >= 0.0,
            ),
            ("blowup_norm", self.blowup_norm, self.blowup_norm > 0.0),
            (
                "max_hold_displacement",
                self.max_hold_displacement,
                self.max_hold_displacement > 0.0,
            ),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(SimError::InvalidConfig { name, value });
            }
        }
        self.solver.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Feasible,
    /// Infeasible first, feasible after measuring at the current state.
    Acquired,
    Infeasible,
    MaxIterations,
    Converged,
    TimeLimit,
    BlowUp,
}

impl std::fmt::Display for StepStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StepStatus::Feasible => "feasible",
            StepStatus::Acquired => "acquired",
            StepStatus::Infeasible => "infeasible",
            StepStatus::MaxIterations => "max_iterations",
            StepStatus::Converged => "converged",
            StepStatus::TimeLimit => "time_limit",
            StepStatus::BlowUp => "blow_up",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vector,
    /// Applied control; `None` on terminal rows.
    pub u: Option<Vector>,
    pub h: f64,
    pub v: f64,
    /// Phase-I value of the first solve at this instant (NaN on terminal rows).
    pub phase1_t: f64,
    pub margins: Option<CompatMargins>,
    pub status: StepStatus,
    pub dataset_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionEvent {
    pub t: f64,
    pub x: Vector,
    /// Phase-I value of the infeasible solve that triggered the event.
    pub phase1_t: f64,
    pub added: usize,
    pub dataset_size: usize,
    pub resolve_status: SolveStatus,
    pub resolve_phase1_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    TimeLimit,
    Infeasible,
    SolverFailure,
    BlowUp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub acquisitions: Vec<AcquisitionEvent>,
    pub termination: Termination,
    /// The dataset at the end of the run (empty for the exact model).
    pub dataset: Option<Dataset>,
}

impl Trajectory {
    pub fn final_state(&self) -> &Vector {
        &self.records.last().expect("at least one record").x
    }

    pub fn min_h(&self) -> f64 {
        self.records.iter().map(|r| r.h).fold(f64::INFINITY, f64::min)
    }

    pub fn closest_approach(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.x.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Rows where the first solve succeeded (including after acquisition).
    pub fn feasible_steps(&self) -> impl Iterator<Item = (usize, &StepRecord)> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(r.status, StepStatus::Feasible | StepStatus::Acquired))
    }

    /// First control instant where the sufficient conditions fail.
    pub fn first_condition_failure(&self) -> Option<&StepRecord> {
        self.records
            .iter()
            .find(|r| r.margins.is_some_and(|m| !m.holds()))
    }

    /// Steps where the conditions hold but the solve was not feasible.
    pub fn condition_soundness_violations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| {
                r.margins.is_some_and(|m| m.holds())
                    && matches!(r.status, StepStatus::Infeasible | StepStatus::Acquired)
            })
            .count()
    }

    /// Columns `t, x…, u…, h, V, phase1_t, clf_margin, cbf_margin, status,
    /// dataset_size`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let n = self.records.first().map_or(0, |r| r.x.len());
        let m = self
            .records
            .iter()
            .find_map(|r| r.u.as_ref().map(|u| u.len()))
            .unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        header.extend(
            ["h", "V", "phase1_t", "clf_margin", "cbf_margin", "status", "dataset_size"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header).map_err(csv_error)?;
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            row.extend(r.x.iter().map(|v| v.to_string()));
            match &r.u {
                Some(u) => row.extend(u.iter().map(|v| v.to_string())),
                None => row.extend((0..m).map(|_| String::new())),
            }
            row.push(r.h.to_string());
            row.push(r.v.to_string());
            row.push(r.phase1_t.to_string());
            match r.margins {
                Some(mg) => {
                    row.push(mg.clf_margin.to_string());
                    row.push(mg.cbf_margin.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
            row.push(r.status.to_string());
            row.push(r.dataset_size.to_string());
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| SimError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Columns `t, x…, phase1_t, added, dataset_size, resolve_status,
    /// resolve_phase1_t`.
    pub fn write_acquisitions_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let n = self.records.first().map_or(0, |r| r.x.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend(
            ["phase1_t", "added", "dataset_size", "resolve_status", "resolve_phase1_t"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header).map_err(csv_error)?;
        for a in &self.acquisitions {
            let mut row = vec![a.t.to_string()];
            row.extend(a.x.iter().map(|v| v.to_string()));
            row.push(a.phase1_t.to_string());
            row.push(a.added.to_string());
            row.push(a.dataset_size.to_string());
            row.push(a.resolve_status.to_string());
            row.push(a.resolve_phase1_t.to_string());
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| SimError::Csv(e.to_string()))?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> SimError {
    SimError::Csv(e.to_string())
}

/// One classical RK4 step of `x' = f(x) + g(x) u` with `u` held.
pub fn rk4_step(truth: &AffineDynamics, x: &Vector, u: &Vector, dt: f64) -> Vector {
    let k1 = truth.velocity(x, u);
    let k2 = truth.velocity(&(x + &k1 * (0.5 * dt)), u);
    let k3 = truth.velocity(&(x + &k2 * (0.5 * dt)), u);
    let k4 = truth.velocity(&(x + &k3 * dt), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

struct Controller<'a> {
    certs: &'a Certificates,
    cfg: &'a SimConfig,
    slack: SlackProblem,
}

impl Controller<'_> {
    fn program(&self, model: &dyn WorstCaseModel, x: &Vector) -> Result<SoccProgram, SimError> {
        let pair = worstcase_soccs(model, &self.certs.clf, &self.certs.cbf, x)?;
        Ok(SoccProgram::new(pair.to_vec())?)
    }

    fn solve(&self, model: &dyn WorstCaseModel, x: &Vector) -> Result<SolveResult, SimError> {
        Ok(solve_min_norm(&self.program(model, x)?, &self.cfg.solver)?)
    }

    fn margins(&self, model: &dyn WorstCaseModel, x: &Vector) -> Result<Option<CompatMargins>, SimError> {
        if !self.cfg.margins || x.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        let bound = BoundB::Constant(self.slack.min_norm(x).unwrap_or(f64::INFINITY));
        Ok(Some(check_worstcase_compat(
            model,
            &self.certs.clf,
            &self.certs.cbf,
            None,
            &bound,
            x,
        )?))
    }

    fn record(&self, t: f64, x: &Vector, status: StepStatus, dataset_size: usize) -> StepRecord {
        StepRecord {
            t,
            x: x.clone(),
            u: None,
            h: self.certs.barrier.value(x),
            v: self.certs.clf.value(x),
            phase1_t: f64::NAN,
            margins: None,
            status,
            dataset_size,
        }
    }
}

fn with_model<T>(
    truth: &AffineDynamics,
    certs: &Certificates,
    source: &ModelSource,
    dataset: &Dataset,
    f: impl FnOnce(&dyn WorstCaseModel) -> Result<T, SimError>,
) -> Result<T, SimError> {
    match source {
        ModelSource::Exact => f(&FnWorstCaseModel::exact(truth, &certs.barrier)),
        ModelSource::NearestNeighbor { lipschitz, .. } => {
            f(&build_worstcase_model(dataset, *lipschitz, &certs.barrier)?)
        }
    }
}

/// Runs the closed loop from `cfg.x0` until convergence, `t_end`,
/// unrecoverable infeasibility or blow-up.
pub fn simulate(
    cfg: &SimConfig,
    truth: &AffineDynamics,
    source: &ModelSource,
    certs: &Certificates,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let n = truth.dims().n();
    if cfg.x0.len() != n {
        return Err(SimError::DimensionMismatch {
            expected: n,
            got: cfg.x0.len(),
        });
    }
    let h0 = certs.barrier.value(&cfg.x0);
    if !(h0 >= 0.0) {
        return Err(SimError::UnsafeStart(h0));
    }
    let ctl = Controller {
        certs,
        cfg,
        slack: SlackProblem {
            truth: truth.clone(),
            clf: certs.clf.clone(),
            cbf: certs.cbf.clone(),
            barrier: certs.barrier.clone(),
            cfg: cfg.solver,
        },
    };
    let oracle = Oracle::new(truth.clone());
    let mut dataset = match source {
        ModelSource::Exact => Dataset::new(truth.dims()),
        ModelSource::NearestNeighbor { dataset, .. } => dataset.clone(),
    };

    let mut x = cfg.x0.clone();
    let mut records = Vec::new();
    let mut acquisitions = Vec::new();
    let mut t = 0.0;
    let termination = loop {
        if !x.iter().all(|v| v.is_finite()) || x.norm() > cfg.blowup_norm {
            records.push(ctl.record(t, &x, StepStatus::BlowUp, dataset.len()));
            break Termination::BlowUp;
        }
        if x.norm() <= cfg.convergence_radius {
            records.push(ctl.record(t, &x, StepStatus::Converged, dataset.len()));
            break Termination::Converged;
        }
        if t >= cfg.t_end - 1e-9 * cfg.control_period {
            records.push(ctl.record(t, &x, StepStatus::TimeLimit, dataset.len()));
            break Termination::TimeLimit;
        }

        let (first, margins) = with_model(truth, certs, source, &dataset, |model| {
            Ok((ctl.solve(model, &x)?, ctl.margins(model, &x)?))
        })?;
        let mut rec = ctl.record(t, &x, StepStatus::Feasible, dataset.len());
        rec.phase1_t = first.phase1_value;
        rec.margins = margins;

        let applied = match first.status {
            SolveStatus::Feasible => first.u_star.clone(),
            status => {
                rec.status = if status == SolveStatus::Infeasible {
                    StepStatus::Infeasible
                } else {
                    StepStatus::MaxIterations
                };
                match (&cfg.stop_policy, source) {
                    (
                        StopPolicy::AcquireOnInfeasible { pattern, workspace },
                        ModelSource::NearestNeighbor { .. },
                    ) => {
                        let added = acquire_on_infeasibility(&oracle, &mut dataset, &x, pattern, workspace)?;
                        let again = with_model(truth, certs, source, &dataset, |model| ctl.solve(model, &x))?;
                        acquisitions.push(AcquisitionEvent {
                            t,
                            x: x.clone(),
                            phase1_t: first.phase1_value,
                            added,
                            dataset_size: dataset.len(),
                            resolve_status: again.status,
                            resolve_phase1_t: again.phase1_value,
                        });
                        if again.is_feasible() {
                            rec.status = StepStatus::Acquired;
                            rec.dataset_size = dataset.len();
                            again.u_star
                        } else {
                            None
                        }
                    }
                    _ => None,
                }
            }
        };
        let Some(u) = applied else {
            let term = if rec.status == StepStatus::MaxIterations {
                Termination::SolverFailure
            } else {
                Termination::Infeasible
            };
            records.push(rec);
            break term;
        };
        let speed = with_model(truth, certs, source, &dataset, |model| {
            let e = model.evaluate(&x)?;
            Ok((&e.fhat + &e.ghat * &u).norm() + e.e_f + e.e_g * u.norm())
        })?;
        let hold = cfg
            .control_period
            .min(cfg.max_hold_displacement / speed)
            .max(1e-6 * cfg.control_period);
        rec.u = Some(u.clone());
        records.push(rec);
        let dt = hold / cfg.substeps as f64;
        for _ in 0..cfg.substeps {
            x = rk4_step(truth, &x, &u, dt);
        }
        t += hold;
    };
    Ok(Trajectory {
        records,
        acquisitions,
        termination,
        dataset: match source {
            ModelSource::Exact => None,
            ModelSource::NearestNeighbor { .. } => Some(dataset),
        },
    })
}

/// Sampling stages for nested datasets: `(region, number of points)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStage {
    pub region: Region,
    pub count: usize,
}

/// Draws points stage by stage (rejecting unsafe states), so that any prefix
/// is itself a dataset of the earlier stages.
pub fn nested_points(seed: u64, stages: &[DatasetStage], barrier: &Barrier) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for stage in stages {
        let mut taken = 0;
        while taken < stage.count {
            let x = stage.region.sample(&mut rng);
            if barrier.value(&x) >= 0.0 {
                pts.push(x);
                taken += 1;
            }
        }
    }
    pts
}

/// Stages for `ns` (ascending): points up to `ns[0]` around the initial
/// state, up to `ns[1]` over the region the trajectory passes, the rest over
/// a box that also covers the origin.
pub fn planar_offline_stages(ns: &[usize]) -> Vec<DatasetStage> {
    let regions = [
        Region::around(&planar::x0(), 0.5),
        Region::new(vec![0.0, 1.5], vec![4.0, 6.5]),
        Region::new(vec![-1.5, -1.5], vec![4.0, 6.5]),
    ];
    let mut prev = 0;
    ns.iter()
        .enumerate()
        .map(|(i, &n)| {
            let stage = DatasetStage {
                region: regions[i.min(regions.len() - 1)].clone(),
                count: n.saturating_sub(prev),
            };
            prev = prev.max(n);
            stage
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub n: usize,
    pub trajectory: Trajectory,
    pub closest_approach: f64,
}

/// Runs the halting protocol from `base.x0` with nested nearest-neighbor
/// datasets of the given sizes.
pub fn experiment_offline_n(ns: &[usize], seed: u64, base: &SimConfig) -> Result<Vec<OfflineRun>, SimError> {
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let truth = planar::dynamics();
    let certs = Certificates::planar();
    let stages = planar_offline_stages(&sorted);
    let pts = nested_points(seed, &stages, &certs.barrier);
    let full = Dataset::from_oracle(&Oracle::new(truth.clone()), &pts)?;
    let cfg = SimConfig {
        stop_policy: StopPolicy::HaltOnInfeasible,
        ..base.clone()
    };
    sorted
        .par_iter()
        .map(|&n| {
            let source = ModelSource::NearestNeighbor {
                dataset: full.truncated(n),
                lipschitz: planar::lipschitz(),
            };
            let trajectory = simulate(&cfg, &truth, &source, &certs)?;
            Ok(OfflineRun {
                n,
                closest_approach: trajectory.closest_approach(),
                trajectory,
            })
        })
        .collect()
}

/// Initial conditions used by default for the online study.
pub fn planar_online_initial_conditions() -> Vec<Vector> {
    vec![
        Vector::from_vec(vec![2.0, 6.0]),
        Vector::from_vec(vec![-2.5, 5.5]),
        Vector::from_vec(vec![3.0, 0.5]),
    ]
}

/// Size of the initial dataset around each initial condition.
pub const ONLINE_INITIAL_POINTS: usize = 25;

#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub initial_condition: Vector,
    pub trajectory: Trajectory,
}

/// Online acquisition from each initial condition, starting with 25
/// measurements uniform in the box of half-width 0.5 around it.
pub fn experiment_online(ics: &[Vector], seed: u64, base: &SimConfig) -> Result<Vec<OnlineRun>, SimError> {
    let truth = planar::dynamics();
    let certs = Certificates::planar();
    let oracle = Oracle::new(truth.clone());
    let policy = match &base.stop_policy {
        p @ StopPolicy::AcquireOnInfeasible { .. } => p.clone(),
        StopPolicy::HaltOnInfeasible => StopPolicy::AcquireOnInfeasible {
            pattern: AcquisitionPattern::default(),
            workspace: Region::new(vec![-10.0, -10.0], vec![10.0, 10.0]),
        },
    };
    ics.par_iter()
        .enumerate()
        .map(|(i, ic)| {
            let stage = DatasetStage {
                region: Region::around(ic, 0.5),
                count: ONLINE_INITIAL_POINTS,
            };
            let pts = nested_points(seed.wrapping_add(i as u64), &[stage], &certs.barrier);
            let source = ModelSource::NearestNeighbor {
                dataset: Dataset::from_oracle(&oracle, &pts)?,
                lipschitz: planar::lipschitz(),
            };
            let cfg = SimConfig {
                x0: ic.clone(),
                stop_policy: policy.clone(),
                ..base.clone()
            };
            Ok(OnlineRun {
                initial_condition: ic.clone(),
                trajectory: simulate(&cfg, &truth, &source, &certs)?,
            })
        })
        .collect()
}

/// Number of acquisition events within `inner` of the origin and within
/// the annulus `[r1, r2]`.
pub fn acquisition_counts(events: &[AcquisitionEvent], inner: f64, r1: f64, r2: f64) -> (usize, usize) {
    let near = events.iter().filter(|e| e.x.norm() <= inner).count();
    let ring = events
        .iter()
        .filter(|e| (r1..=r2).contains(&e.x.norm()))
        .count();
    (near, ring)
}

/// Difference quotients `‖u*(xᵢ₊₁) − u*(xᵢ)‖ / ‖xᵢ₊₁ − xᵢ‖` along the
/// polyline through `path`, with `refine` samples per segment.
pub fn control_difference_quotients(
    path: &[Vector],
    refine: usize,
    control: impl Fn(&Vector) -> Option<Vector>,
) -> Vec<f64> {
    let mut samples = Vec::new();
    for w in path.windows(2) {
        for j in 0..refine {
            let s = j as f64 / refine as f64;
            samples.push(&w[0] * (1.0 - s) + &w[1] * s);
        }
    }
    if let Some(last) = path.last() {
        samples.push(last.clone());
    }
    let controls: Vec<Option<Vector>> = samples.iter().map(&control).collect();
    let mut quotients = Vec::new();
    for i in 0..samples.len().saturating_sub(1) {
        let dx = (&samples[i + 1] - &samples[i]).norm();
        if dx <= 0.0 {
            continue;
        }
        if let (Some(a), Some(b)) = (&controls[i], &controls[i + 1]) {
            quotients.push((b - a).norm() / dx);
        }
    }
    quotients
}

/// Largest ratio between a quotient and the median of the `window`
/// quotients centered on it.
pub fn max_jump_ratio(quotients: &[f64], window: usize) -> f64 {
    let half = window / 2;
    let mut worst: f64 = 0.0;
    for i in 0..quotients.len() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(quotients.len());
        let mut local: Vec<f64> = quotients[lo..hi].to_vec();
        local.sort_by(|a, b| a.total_cmp(b));
        let median = local[local.len() / 2];
        if median > 0.0 {
            worst = worst.max(quotients[i] / median);
        } else if quotients[i] > 0.0 {
            worst = f64::INFINITY;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_matches_exponential() {
        let truth = planar::dynamics();
        let x = Vector::from_vec(vec![1.0, -2.0]);
        let u = Vector::zeros(2);
        let mut y = x.clone();
        for _ in 0..100 {
            y = rk4_step(&truth, &y, &u, 0.01);
        }
        let exact = &x * 1f64.exp();
        assert!((y - exact).norm() <= 1e-9);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(planar::x0());
        assert!(cfg.validate().is_ok());
        cfg.substeps = 0;
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig { name: "substeps", .. })));
    }

    #[test]
    fn unsafe_start_rejected() {
        let cfg = SimConfig::new(Vector::from_vec(vec![0.0, 4.0]));
        let r = simulate(&cfg, &planar::dynamics(), &ModelSource::Exact, &Certificates::planar());
        assert!(matches!(r, Err(SimError::UnsafeStart(_))));
    }

    #[test]
    fn halting_run_stops_at_first_infeasible_step() {
        let truth = planar::dynamics();
        let pts = nested_points(
            4,
            &[DatasetStage {
                region: Region::around(&planar::x0(), 0.5),
                count: 25,
            }],
            &planar::barrier(),
        );
        let ds = Dataset::from_oracle(&Oracle::new(truth.clone()), &pts).unwrap();
        let source = ModelSource::NearestNeighbor {
            dataset: ds,
            lipschitz: planar::lipschitz(),
        };
        let traj = simulate(&SimConfig::new(planar::x0()), &truth, &source, &Certificates::planar()).unwrap();
        assert_eq!(traj.termination, Termination::Infeasible);
        let last = traj.records.last().unwrap();
        assert_eq!(last.status, StepStatus::Infeasible);
        assert!(last.phase1_t >= -1e-9);
        assert!(traj.records[..traj.records.len() - 1]
            .iter()
            .all(|r| r.status == StepStatus::Feasible));
        assert!(traj.acquisitions.is_empty());
    }

    #[test]
    fn nested_prefixes() {
        let stages = planar_offline_stages(&[25, 100, 400]);
        assert_eq!(stages.iter().map(|s| s.count).collect::<Vec<_>>(), vec![25, 75, 300]);
        let a = nested_points(9, &stages, &planar::barrier());
        let b = nested_points(9, &stages[..1], &planar::barrier());
        assert_eq!(a.len(), 400);
        assert_eq!(&a[..25], &b[..]);
    }

    #[test]
    fn jump_ratio_detects_spikes() {
        let mut q = vec![1.0; 50];
        assert!((max_jump_ratio(&q, 21) - 1.0).abs() < 1e-12);
        q[25] = 30.0;
        assert!(max_jump_ratio(&q, 21) >= 30.0);
    }

    #[test]
    fn csv_columns() {
        let mut cfg = SimConfig::new(planar::x0());
        cfg.t_end = 0.05;
        let traj = simulate(&cfg, &planar::dynamics(), &ModelSource::Exact, &Certificates::planar()).unwrap();
        assert_eq!(traj.termination, Termination::TimeLimit);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x0,x1,u0,u1,h,V,phase1_t,clf_margin,cbf_margin,status,dataset_size\n"));
        assert_eq!(text.lines().count(), traj.records.len() + 1);
        let mut buf = Vec::new();
        traj.write_acquisitions_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x0,x1,phase1_t,added"));
    }
}
