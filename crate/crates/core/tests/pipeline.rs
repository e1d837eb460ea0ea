use safesocp::constraints::{worstcase_soccs, FnWorstCaseModel};
use safesocp::estimation::{build_worstcase_model, Dataset, Oracle};
use safesocp::feasibility::{feasibility_map, worstcase_feasibility_map, BoundB};
use safesocp::region::{Grid, Region};
use safesocp::sim::{
    experiment_offline_n, experiment_online, simulate, Certificates, ModelSource, SimConfig,
    StepStatus, Termination,
};
use safesocp::socp::{brute_force_min_norm, solve_min_norm};
use safesocp::{planar, SoccProgram, SolverConfig, Vector};

fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

fn keep(x: &Vector) -> bool {
    !planar::in_obstacle(x) && x.norm() > 1e-2
}

#[test]
fn exact_controller_matches_grid_oracle_along_a_line() {
    let truth = planar::dynamics();
    let certs = Certificates::planar();
    let model = FnWorstCaseModel::exact(&truth, &certs.barrier);
    let cfg = SolverConfig::default();
    for k in 0..8 {
        let s = k as f64 / 7.0;
        let x = v(&[2.0 - 1.5 * s, 6.0 - 5.0 * s]);
        let pair = worstcase_soccs(&model, &certs.clf, &certs.cbf, &x).unwrap();
        let prog = SoccProgram::new(pair.to_vec()).unwrap();
        let res = solve_min_norm(&prog, &cfg).unwrap();
        assert!(res.is_feasible());
        let u = res.u_star.unwrap();
        let radius = 2.0 * u.norm() + 1.0;
        let oracle = brute_force_min_norm(&prog, radius, 1e-4).unwrap();
        assert!((u.norm() - oracle.norm()).abs() <= 1e-3, "x = {x}");
    }
}

#[test]
fn zero_error_map_holds_everywhere() {
    let truth = planar::dynamics();
    let certs = Certificates::planar();
    let model = FnWorstCaseModel::exact(&truth, &certs.barrier);
    let grid = Grid::new(Region::new(vec![-5.0, -1.0], vec![5.0, 9.0]), vec![20, 20]);
    let cfg = SolverConfig::default();
    let map = worstcase_feasibility_map(
        &model,
        &certs.clf,
        &certs.cbf,
        &BoundB::Constant(f64::INFINITY),
        &grid,
        keep,
        &cfg,
    )
    .unwrap();
    assert!(!map.cells.is_empty());
    assert!(map.cells.iter().all(|c| c.margins.holds() && c.phase1_t < 0.0));
}

#[test]
fn sparse_data_map_is_one_sided() {
    let truth = planar::dynamics();
    let certs = Certificates::planar();
    let region = Region::new(vec![-5.0, -1.0], vec![5.0, 9.0]);
    let pts = safesocp::sim::nested_points(
        1,
        &[safesocp::sim::DatasetStage { region: region.clone(), count: 200 }],
        &certs.barrier,
    );
    let ds = Dataset::from_oracle(&Oracle::new(truth), &pts).unwrap();
    let model = build_worstcase_model(&ds, planar::lipschitz(), &certs.barrier).unwrap();
    let cfg = SolverConfig::default();
    let grid = Grid::new(region, vec![30, 30]);
    let map = worstcase_feasibility_map(
        &model,
        &certs.clf,
        &certs.cbf,
        &BoundB::Constant(10.0),
        &grid,
        keep,
        &cfg,
    )
    .unwrap();
    assert!(map.soundness_violations(cfg.tol_strict).is_empty());
    assert!(map.conservative_cells(cfg.tol_strict) > 0);

    let mut out = Vec::new();
    map.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x0,x1,clf_margin,cbf_margin,holds_clf,holds_cbf,phase1_t"
    );
    assert_eq!(lines.count(), map.cells.len());
}

#[test]
fn custom_checker_and_program_are_used() {
    let grid = Grid::new(Region::new(vec![1.0, 1.0], vec![2.0, 2.0]), vec![3, 3]);
    let map = feasibility_map(
        &grid,
        |_| true,
        |_| Ok(safesocp::CompatMargins::new(1.0, -1.0, 1.0)),
        |x| {
            Ok(SoccProgram::new(vec![safesocp::Socc::affine(v(&[1.0, 0.0]), -x[0]).unwrap()]).unwrap())
        },
        &SolverConfig::default(),
    )
    .unwrap();
    assert_eq!(map.cells.len(), 9);
    assert!(map.cells.iter().all(|c| c.margins.holds_clf && !c.margins.holds_cbf));
    assert!(map.cells.iter().all(|c| c.phase1_t < 0.0));
}

#[test]
fn dataset_csv_round_trip_through_a_file() {
    let oracle = Oracle::new(planar::dynamics());
    let pts = vec![v(&[1.0, 2.0]), v(&[-0.5, 0.25]), v(&[3.0, -1.0])];
    let ds = Dataset::from_oracle(&oracle, &pts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    ds.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = Dataset::read_csv(std::fs::File::open(&path).unwrap(), planar::dims()).unwrap();
    assert_eq!(back.len(), 3);
    for i in 0..3 {
        assert_eq!(back.points()[i], ds.points()[i]);
        assert_eq!(back.f_value(i), ds.f_value(i));
        assert_eq!(back.g_value(i), ds.g_value(i));
    }
}

#[test]
fn halting_run_ends_with_an_infeasibility_certificate() {
    let base = SimConfig {
        margins: false,
        ..SimConfig::new(planar::x0())
    };
    let runs = experiment_offline_n(&[25], 0, &base).unwrap();
    let tr = &runs[0].trajectory;
    assert_eq!(tr.termination, Termination::Infeasible);
    let last = tr.records.last().unwrap();
    assert_eq!(last.status, StepStatus::Infeasible);
    assert!(last.phase1_t >= -SolverConfig::default().tol_strict);
    assert!(last.u.is_none());
    assert!(tr.records[..tr.records.len() - 1]
        .iter()
        .all(|r| r.status == StepStatus::Feasible));
}

#[test]
fn online_runs_are_reproducible() {
    let base = SimConfig {
        margins: false,
        ..SimConfig::new(planar::x0())
    };
    let ics = vec![v(&[2.0, 6.0])];
    let render = || {
        let runs = experiment_online(&ics, 11, &base).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        runs[0].trajectory.write_csv(&mut a).unwrap();
        runs[0].trajectory.write_acquisitions_csv(&mut b).unwrap();
        (a, b)
    };
    let first = render();
    assert_eq!(first, render());
    let traj = String::from_utf8(first.0).unwrap();
    assert_eq!(
        traj.lines().next().unwrap(),
        "t,x0,x1,u0,u1,h,V,phase1_t,clf_margin,cbf_margin,status,dataset_size"
    );
    let acq = String::from_utf8(first.1).unwrap();
    assert_eq!(
        acq.lines().next().unwrap(),
        "t,x0,x1,phase1_t,added,dataset_size,resolve_status,resolve_phase1_t"
    );
}

#[test]
fn exact_run_logs_margins_that_hold() {
    let cfg = SimConfig {
        t_end: 1.0,
        ..SimConfig::new(planar::x0())
    };
    let tr = simulate(&cfg, &planar::dynamics(), &ModelSource::Exact, &Certificates::planar()).unwrap();
    assert_eq!(tr.termination, Termination::TimeLimit);
    assert!(tr.first_condition_failure().is_none());
    assert_eq!(tr.condition_soundness_violations(), 0);
    assert!(tr.records.iter().filter(|r| r.u.is_some()).all(|r| r.margins.is_some()));
}
