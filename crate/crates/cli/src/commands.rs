use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use safesocp::constraints::{worstcase_soccs, FnWorstCaseModel};
use safesocp::estimation::build_worstcase_model;
use safesocp::feasibility::{
    check_worstcase_compat, compute_bound_b_analysis, worstcase_feasibility_map, FeasibilityMap,
    SlackProblem,
};
use safesocp::region::Grid;
use safesocp::sim::{
    acquisition_counts, experiment_offline_n, experiment_online, planar_online_initial_conditions,
    simulate, Certificates, ModelSource, SimConfig, StepStatus, Termination, Trajectory,
};
use safesocp::socp::brute_force_min_norm;
use safesocp::universal::{universal_control, universal_control_checked, UniversalError, DEFAULT_IM_TOL};
use safesocp::{
    planar, AffineDynamics, BoundB, Dataset, SoccProgram, SolveStatus, SolverConfig, Vector,
    WorstCaseModel,
};

use crate::config::{self, BoundChoice, ConfigError, RunConfig};
use crate::svg::{color, Canvas};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Infeasible(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 3,
            CliError::Infeasible(_) => 2,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub strict: bool,
    pub oracle: bool,
}

impl Context {
    fn output(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    /// Writes through a temporary file in the same directory, then renames.
    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.output(name)?;
        write_atomic(&path, bytes)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn fmt_vec(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
    format!("[{}]", parts.join(", "))
}

fn planar_state(n: usize, given: Option<&Vec<f64>>, what: &str) -> Result<Vector, CliError> {
    match given {
        Some(x) if x.len() == n => Ok(config::vector(x)),
        Some(x) => Err(CliError::Config(format!(
            "{what} has length {}, the state has {n}",
            x.len()
        ))),
        None if n == 2 => Ok(planar::x0()),
        None => Err(CliError::Config(format!("{what} is required for a {n}-state system"))),
    }
}

/// Runs `f` with the configured worst-case model.
fn with_model<T>(
    ctx: &Context,
    truth: &AffineDynamics,
    certs: &Certificates,
    f: impl FnOnce(&dyn WorstCaseModel, Option<&Dataset>) -> Result<T, CliError>,
) -> Result<T, CliError> {
    match ctx.cfg.dataset(truth, &certs.barrier, ctx.seed)? {
        None => f(&FnWorstCaseModel::exact(truth, &certs.barrier), None),
        Some((ds, lip)) => {
            let model = build_worstcase_model(&ds, lip, &certs.barrier).map_err(config_err)?;
            f(&model, Some(&ds))
        }
    }
}

pub fn solve(ctx: &Context) -> Result<(), CliError> {
    let truth = ctx.cfg.dynamics()?;
    let n = truth.dims().n();
    let solver = ctx.cfg.solver()?;
    let section = ctx.cfg.solve.as_ref();
    let mut out = String::new();

    let (prog, margins) = match section.filter(|s| !s.soccs.is_empty()) {
        Some(s) => {
            let soccs = s.soccs.iter().map(config::socc).collect::<Result<Vec<_>, _>>()?;
            (SoccProgram::new(soccs).map_err(config_err)?, None)
        }
        None => {
            let x = planar_state(n, section.and_then(|s| s.state.as_ref()), "solve.state")?;
            let certs = ctx.cfg.certificates(n)?;
            let slack = SlackProblem {
                truth: truth.clone(),
                clf: certs.clf.clone(),
                cbf: certs.cbf.clone(),
                barrier: certs.barrier.clone(),
                cfg: solver,
            };
            let bound = slack.min_norm(&x).ok().map(BoundB::Constant);
            with_model(ctx, &truth, &certs, |model, _| {
                let pair = worstcase_soccs(model, &certs.clf, &certs.cbf, &x).map_err(numerical)?;
                let margins = match &bound {
                    Some(b) => Some(
                        check_worstcase_compat(model, &certs.clf, &certs.cbf, None, b, &x)
                            .map_err(numerical)?,
                    ),
                    None => None,
                };
                let _ = writeln!(out, "state: {}", fmt_vec(&x));
                Ok((SoccProgram::new(pair.to_vec()).map_err(numerical)?, margins))
            })?
        }
    };

    let res = safesocp::socp::solve_min_norm(&prog, &solver).map_err(numerical)?;
    let _ = writeln!(out, "status: {}", res.status);
    if let Some(u) = &res.u_star {
        let _ = writeln!(out, "u*: {}", fmt_vec(u));
        let _ = writeln!(out, "norm: {:.9}", u.norm());
        let _ = writeln!(out, "residuals: {}", fmt_vec(&Vector::from_vec(prog.residuals(u))));
    }
    let _ = writeln!(out, "phase1_t: {:e}", res.phase1_value);
    let _ = writeln!(out, "kkt: {:e}", res.kkt_residual);
    let _ = writeln!(out, "iterations: {}", res.iterations);
    match &margins {
        Some(m) => {
            let _ = writeln!(
                out,
                "clf_margin: {:e}\ncbf_margin: {:e}\nconditions_hold: {}",
                m.clf_margin,
                m.cbf_margin,
                m.holds()
            );
        }
        None if section.is_none_or(|s| s.soccs.is_empty()) => {
            let _ = writeln!(out, "conditions: unavailable (slack program infeasible)");
        }
        None => {}
    }
    if ctx.oracle {
        let resolution = section.map_or(1e-4, |s| s.oracle_resolution);
        let half = section
            .and_then(|s| s.oracle_box)
            .unwrap_or_else(|| res.u_star.as_ref().map_or(10.0, |u| 2.0 * u.norm() + 1.0));
        match brute_force_min_norm(&prog, half, resolution) {
            Ok(best) => {
                let _ = writeln!(out, "oracle: {}", fmt_vec(&best));
                if let Some(u) = &res.u_star {
                    let _ = writeln!(out, "oracle_gap: {:e}", (u.norm() - best.norm()).abs());
                }
            }
            Err(e) => {
                let _ = writeln!(out, "oracle: {e}");
            }
        }
    }
    print!("{out}");

    match res.status {
        SolveStatus::Feasible => Ok(()),
        SolveStatus::Infeasible if ctx.strict => Err(CliError::Infeasible(format!(
            "phase-I value {:e}",
            res.phase1_value
        ))),
        SolveStatus::Infeasible => Ok(()),
        SolveStatus::MaxIterations => Err(CliError::Numerical("iteration budget exhausted".into())),
    }
}

pub fn feasmap(ctx: &Context) -> Result<(), CliError> {
    let truth = ctx.cfg.dynamics()?;
    let n = truth.dims().n();
    let solver = ctx.cfg.solver()?;
    let certs = ctx.cfg.certificates(n)?;
    let section = ctx.cfg.feasmap.clone().unwrap_or_default();
    let region = config::region(&section.lower, &section.upper, n, "feasmap")?;
    if section.counts.len() != n || section.counts.contains(&0) {
        return Err(CliError::Config(format!("feasmap.counts must hold {n} positive entries")));
    }
    let grid = Grid::new(region, section.counts.clone());
    let origin_ball = section.origin_ball;
    let barrier = certs.barrier.clone();
    let keep = move |x: &Vector| barrier.value(x) >= 0.0 && x.norm() > origin_ball;

    let bound = match &section.bound {
        BoundChoice::Value(v) => BoundB::constant(*v).map_err(config_err)?,
        BoundChoice::Mode(m) if m == "analysis" => {
            let slack = SlackProblem {
                truth: truth.clone(),
                clf: certs.clf.clone(),
                cbf: certs.cbf.clone(),
                barrier: certs.barrier.clone(),
                cfg: solver,
            };
            compute_bound_b_analysis(&slack, &grid, section.factor, &keep).map_err(numerical)?
        }
        BoundChoice::Mode(m) => {
            return Err(CliError::Config(format!(
                "feasmap.bound must be a number or \"analysis\", got {m:?}"
            )))
        }
    };

    let (map, points) = with_model(ctx, &truth, &certs, |model, ds| {
        let map = worstcase_feasibility_map(model, &certs.clf, &certs.cbf, &bound, &grid, &keep, &solver)
            .map_err(numerical)?;
        Ok((map, ds.map(|d| d.points().to_vec()).unwrap_or_default()))
    })?;

    let mut csv = Vec::new();
    map.write_csv(&mut csv).map_err(numerical)?;
    ctx.write("feasmap.csv", &csv)?;
    if n == 2 {
        let svg = feasmap_svg(ctx, &map, &grid, &points, solver.tol_strict);
        ctx.write("feasmap.svg", svg.as_bytes())?;
    }

    let holding = map.cells.iter().filter(|c| c.margins.holds()).count();
    let violations = map.soundness_violations(solver.tol_strict).len();
    println!("cells: {}", map.cells.len());
    println!("conditions_hold: {holding}");
    println!("conservative: {}", map.conservative_cells(solver.tol_strict));
    println!("soundness_violations: {violations}");
    println!("wrote {}", ctx.out.join("feasmap.csv").display());
    Ok(())
}

fn feasmap_svg(ctx: &Context, map: &FeasibilityMap, grid: &Grid, points: &[Vector], tol_strict: f64) -> String {
    let lo = grid.region().lower();
    let hi = grid.region().upper();
    let spacing: Vec<f64> = (0..2)
        .map(|k| {
            let c = grid.counts()[k];
            if c > 1 {
                (hi[k] - lo[k]) / (c - 1) as f64
            } else {
                hi[k] - lo[k]
            }
        })
        .collect();
    let mut canvas = Canvas::new([lo[0], lo[1]], [hi[0], hi[1]], 640.0);
    let mut failing = Vec::new();
    for cell in &map.cells {
        let (x, y) = (cell.x[0], cell.x[1]);
        let feasible = cell.phase1_t < -tol_strict;
        let fill = match (cell.margins.holds(), feasible) {
            (true, true) => "#b7e4b0",
            (true, false) => "#d62728",
            (false, true) => "#eeeeee",
            (false, false) => "#f4b6b6",
        };
        canvas.rect(
            [x - spacing[0] / 2.0, y - spacing[1] / 2.0],
            [x + spacing[0] / 2.0, y + spacing[1] / 2.0],
            fill,
        );
        if !cell.margins.holds() {
            failing.push([x, y]);
        }
    }
    let stride = (failing.len() / 400).max(1);
    for p in failing.iter().step_by(stride) {
        canvas.triangle(*p, 2.5, "#555555");
    }
    let c = &ctx.cfg.certificates;
    canvas.circle(
        [c.obstacle_center[0], c.obstacle_center[1]],
        c.obstacle_radius,
        "none",
        "black",
    );
    for p in points {
        canvas.dot([p[0], p[1]], 1.2, "#1f77b4");
    }
    canvas.label_px(
        34.0,
        20.0,
        "green: conditions hold, grey: conditions fail, pink: infeasible, red: unsound",
    );
    canvas.finish()
}

fn model_source(ctx: &Context, truth: &AffineDynamics, certs: &Certificates) -> Result<ModelSource, CliError> {
    Ok(match ctx.cfg.dataset(truth, &certs.barrier, ctx.seed)? {
        None => ModelSource::Exact,
        Some((dataset, lipschitz)) => ModelSource::NearestNeighbor { dataset, lipschitz },
    })
}

fn base_sim(ctx: &Context, n: usize) -> Result<SimConfig, CliError> {
    let section = ctx.cfg.simulate.clone().unwrap_or_default();
    let x0 = planar_state(n, section.x0.as_ref(), "simulate.x0")?;
    let mut cfg = SimConfig {
        solver: ctx.cfg.solver()?,
        ..SimConfig::new(x0)
    };
    section.apply(&mut cfg, n)?;
    Ok(cfg)
}

fn trajectory_points(tr: &Trajectory) -> Vec<[f64; 2]> {
    tr.records.iter().map(|r| [r.x[0], r.x[1]]).collect()
}

/// World box covering the obstacle and every path, padded.
fn scene_bounds(ctx: &Context, paths: &[Vec<[f64; 2]>]) -> ([f64; 2], [f64; 2]) {
    let c = &ctx.cfg.certificates;
    let (cx, cy, r) = (c.obstacle_center[0], c.obstacle_center[1], c.obstacle_radius);
    let mut lo = [cx - r, cy - r];
    let mut hi = [cx + r, cy + r];
    for p in paths.iter().flatten() {
        for k in 0..2 {
            if p[k].is_finite() {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    lo = [lo[0].min(0.0) - 0.5, lo[1].min(0.0) - 0.5];
    hi = [hi[0].max(0.0) + 0.5, hi[1].max(0.0) + 0.5];
    (lo, hi)
}

fn draw_obstacle(ctx: &Context, canvas: &mut Canvas) {
    let c = &ctx.cfg.certificates;
    canvas.circle(
        [c.obstacle_center[0], c.obstacle_center[1]],
        c.obstacle_radius,
        "#f4b6b6",
        "black",
    );
    canvas.text([c.obstacle_center[0] - 0.5, c.obstacle_center[1]], "unsafe");
    canvas.dot([0.0, 0.0], 3.0, "black");
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), safesocp::sim::SimError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

pub fn simulate_cmd(ctx: &Context) -> Result<(), CliError> {
    let truth = ctx.cfg.dynamics()?;
    let n = truth.dims().n();
    let certs = ctx.cfg.certificates(n)?;
    let cfg = base_sim(ctx, n)?;
    let source = model_source(ctx, &truth, &certs)?;
    let tr = simulate(&cfg, &truth, &source, &certs).map_err(numerical)?;

    ctx.write("trajectory.csv", &csv_bytes(|b| tr.write_csv(b))?)?;
    ctx.write("acquisitions.csv", &csv_bytes(|b| tr.write_acquisitions_csv(b))?)?;
    if let Some(ds) = &tr.dataset {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        ctx.write("dataset.csv", &buf)?;
    }
    if n == 2 {
        let path = trajectory_points(&tr);
        let (lo, hi) = scene_bounds(ctx, std::slice::from_ref(&path));
        let mut canvas = Canvas::new(lo, hi, 640.0);
        draw_obstacle(ctx, &mut canvas);
        if let Some(ds) = &tr.dataset {
            for p in ds.points() {
                canvas.dot([p[0], p[1]], 1.2, "#1f77b4");
            }
        }
        canvas.polyline(&path, color(1), 1.5);
        canvas.dot(path[0], 3.5, color(1));
        for e in &tr.acquisitions {
            canvas.star([e.x[0], e.x[1]], 6.0, "black");
        }
        canvas.label_px(34.0, 20.0, &format!("termination: {:?}", tr.termination));
        ctx.write("trajectory.svg", canvas.finish().as_bytes())?;
    }

    println!("termination: {:?}", tr.termination);
    println!("steps: {}", tr.records.len());
    println!("final_state: {}", fmt_vec(tr.final_state()));
    println!("min_h: {:.9}", tr.min_h());
    println!("closest_approach: {:.9}", tr.closest_approach());
    println!("acquisitions: {}", tr.acquisitions.len());
    if cfg.margins {
        match tr.first_condition_failure() {
            Some(r) => println!("first_condition_failure: t = {:.4}", r.t),
            None => println!("first_condition_failure: none"),
        }
        println!("soundness_violations: {}", tr.condition_soundness_violations());
    }

    match tr.termination {
        Termination::Infeasible if ctx.strict => Err(CliError::Infeasible(format!(
            "halted at t = {:.4}",
            tr.records.last().map_or(0.0, |r| r.t)
        ))),
        Termination::SolverFailure => Err(CliError::Numerical("solver failure during the run".into())),
        Termination::BlowUp => Err(CliError::Numerical("state diverged".into())),
        _ => Ok(()),
    }
}

pub fn experiment(ctx: &Context) -> Result<(), CliError> {
    if !ctx.cfg.is_planar() {
        return Err(CliError::Config("experiments run on the planar system only".into()));
    }
    let section = ctx
        .cfg
        .experiment
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [experiment] table".into()))?;
    let base = base_sim(ctx, 2)?;
    match section.kind.as_str() {
        "offline" => offline(ctx, section.ns.clone(), section.seeds, &base),
        "online" => {
            let ics = match &section.initial_conditions {
                Some(list) => list
                    .iter()
                    .map(|x| planar_state(2, Some(x), "experiment.initial_conditions"))
                    .collect::<Result<Vec<_>, _>>()?,
                None => planar_online_initial_conditions(),
            };
            online(ctx, &ics, &base)
        }
        other => Err(CliError::Config(format!(
            "experiment.kind must be \"offline\" or \"online\", got {other:?}"
        ))),
    }
}

fn offline(ctx: &Context, ns: Vec<usize>, seeds: usize, base: &SimConfig) -> Result<(), CliError> {
    if ns.is_empty() || ns.contains(&0) || seeds == 0 {
        return Err(CliError::Config("experiment.ns and experiment.seeds must be positive".into()));
    }
    let mut summary = String::from("seed,n,termination,steps,closest_approach,min_h\n");
    for s in 0..seeds as u64 {
        let seed = ctx.seed + s;
        let runs = experiment_offline_n(&ns, seed, base).map_err(numerical)?;
        let prefix = if seeds > 1 { format!("seed{seed}_") } else { String::new() };
        let paths: Vec<Vec<[f64; 2]>> = runs.iter().map(|r| trajectory_points(&r.trajectory)).collect();
        let (lo, hi) = scene_bounds(ctx, &paths);
        let mut canvas = Canvas::new(lo, hi, 640.0);
        draw_obstacle(ctx, &mut canvas);
        for (i, (run, path)) in runs.iter().zip(&paths).enumerate() {
            ctx.write(
                &format!("{prefix}offline_N{}.csv", run.n),
                &csv_bytes(|b| run.trajectory.write_csv(b))?,
            )?;
            canvas.polyline(path, color(i), 1.5);
            if let Some(last) = path.last() {
                canvas.triangle(*last, 4.0, color(i));
            }
            canvas.label_px(34.0, 20.0 + 14.0 * i as f64, &format!("N = {}", run.n));
            canvas.rect_px_legend(color(i), 20.0, 11.0 + 14.0 * i as f64);
            let _ = writeln!(
                summary,
                "{seed},{},{:?},{},{},{}",
                run.n,
                run.trajectory.termination,
                run.trajectory.records.len(),
                run.closest_approach,
                run.trajectory.min_h()
            );
            println!(
                "seed {seed} N {:>6}: {:?} after {} steps, closest approach {:.4}",
                run.n,
                run.trajectory.termination,
                run.trajectory.records.len(),
                run.closest_approach
            );
        }
        canvas.dot(paths[0][0], 3.5, "black");
        ctx.write(&format!("{prefix}offline.svg"), canvas.finish().as_bytes())?;
    }
    ctx.write("offline_summary.csv", summary.as_bytes())
}

/// Inner disc and annulus used to summarize where acquisitions happen.
const NEAR_RADIUS: f64 = 0.5;
const ANNULUS: (f64, f64) = (1.0, 1.118_033_988_749_895);

fn online(ctx: &Context, ics: &[Vector], base: &SimConfig) -> Result<(), CliError> {
    let runs = experiment_online(ics, ctx.seed, base).map_err(numerical)?;
    let paths: Vec<Vec<[f64; 2]>> = runs.iter().map(|r| trajectory_points(&r.trajectory)).collect();
    let (lo, hi) = scene_bounds(ctx, &paths);
    let mut canvas = Canvas::new(lo, hi, 640.0);
    draw_obstacle(ctx, &mut canvas);
    let mut summary = String::from("run,x0,x1,termination,steps,events,near,annulus,failed_resolves\n");
    let mut failed_any = false;
    for (i, (run, path)) in runs.iter().zip(&paths).enumerate() {
        let tr = &run.trajectory;
        ctx.write(&format!("online_{i}.csv"), &csv_bytes(|b| tr.write_csv(b))?)?;
        ctx.write(
            &format!("online_{i}_acquisitions.csv"),
            &csv_bytes(|b| tr.write_acquisitions_csv(b))?,
        )?;
        canvas.polyline(path, color(i), 1.5);
        canvas.dot(path[0], 3.5, "black");
        for e in &tr.acquisitions {
            canvas.star([e.x[0], e.x[1]], 6.0, "black");
        }
        let (near, ring) = acquisition_counts(&tr.acquisitions, NEAR_RADIUS, ANNULUS.0, ANNULUS.1);
        let failed = tr
            .acquisitions
            .iter()
            .filter(|e| e.resolve_status != SolveStatus::Feasible)
            .count()
            + tr.records.iter().filter(|r| r.status == StepStatus::Infeasible).count();
        failed_any |= failed > 0;
        let ic = &run.initial_condition;
        let _ = writeln!(
            summary,
            "{i},{},{},{:?},{},{},{near},{ring},{failed}",
            ic[0],
            ic[1],
            tr.termination,
            tr.records.len(),
            tr.acquisitions.len()
        );
        println!(
            "run {i} from {}: {:?}, {} acquisitions ({near} near the origin, {ring} in the annulus), {failed} failed re-solves",
            fmt_vec(ic),
            tr.termination,
            tr.acquisitions.len()
        );
    }
    ctx.write("online.svg", canvas.finish().as_bytes())?;
    ctx.write("online_summary.csv", summary.as_bytes())?;
    if failed_any && ctx.strict {
        return Err(CliError::Infeasible("a re-solve after acquisition stayed infeasible".into()));
    }
    Ok(())
}

pub fn universal(ctx: &Context) -> Result<(), CliError> {
    let section = ctx
        .cfg
        .universal
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [universal] table".into()))?;
    let s = config::socc(&config::SoccConfig {
        q: section.q.clone(),
        r: section.r.clone(),
        b: section.b.clone(),
        c: section.c,
    })?;
    let im_tol = section.im_tol.unwrap_or(DEFAULT_IM_TOL);
    let solver: SolverConfig = ctx.cfg.solver()?;
    let result = if section.check {
        universal_control_checked(&s, im_tol, &solver)
    } else {
        universal_control(&s, im_tol)
    };
    match result {
        Ok((u, im)) => {
            println!("u_s: {}", fmt_vec(&u));
            println!("tilde_b: {}", fmt_vec(&im.tilde_b));
            println!("tilde_c: {:.9}", im.tilde_c);
            println!("bar_b: {:.9}", im.bar_b);
            println!("v_s: {}", fmt_vec(&im.v_s));
            println!("im_residual: {:e}", im.im_residual);
            println!("residual: {:e}", s.residual(&u));
            Ok(())
        }
        Err(UniversalError::NotStrictlyFeasible { t_star }) => {
            println!("status: not strictly feasible (phase1_t {t_star:e})");
            if ctx.strict {
                Err(CliError::Infeasible(format!("phase-I value {t_star:e}")))
            } else {
                Ok(())
            }
        }
        Err(e @ UniversalError::ImageConditionViolated { .. }) | Err(e @ UniversalError::DegenerateBoundary) => {
            Err(CliError::Config(e.to_string()))
        }
        Err(e) => Err(numerical(e)),
    }
}
