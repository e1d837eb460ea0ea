//! TOML run configuration. Every table rejects unknown keys.
//!
//! ```toml
//! seed = 0
//! out = "out"
//!
//! [system]
//! kind = "planar"               # or "linear" with a = [[..]], b = [[..]]
//!
//! [certificates]
//! eta_h = 0.5
//! alpha_slope = 1.0
//! obstacle_center = [0.0, 4.0]
//! obstacle_radius = 2.0
//!
//! [model]
//! kind = "nearest-neighbor"     # or "exact"
//! k_f = 3.0
//! k_g = 0.5
//! samples = 400
//! lower = [-5.0, -1.0]
//! upper = [5.0, 9.0]
//! ```
//!
//! Command tables: `[solve]`, `[feasmap]`, `[simulate]`, `[experiment]`,
//! `[universal]`; see the README for their keys.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use safesocp::estimation::{AcquisitionPattern, Dataset, LipschitzConstants, Oracle};
use safesocp::region::Region;
use safesocp::sim::{Certificates, StopPolicy};
use safesocp::{
    planar, AffineDynamics, Barrier, CbfSpec, ClassK, ClfSpec, Matrix, Socc, SolverConfig, Vector,
};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub certificates: CertificateConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub model: ModelConfig,
    pub solve: Option<SolveSection>,
    pub feasmap: Option<FeasmapSection>,
    pub simulate: Option<SimulateSection>,
    pub experiment: Option<ExperimentSection>,
    pub universal: Option<UniversalSection>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    #[serde(rename = "planar-eq15", alias = "planar")]
    Planar {},
    /// `x' = A x + B u`, matrices given row by row.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::Planar {}
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default = "default_eta_h")]
    pub eta_h: f64,
    #[serde(default = "one")]
    pub alpha_slope: f64,
    #[serde(default = "default_center")]
    pub obstacle_center: Vec<f64>,
    #[serde(default = "default_radius")]
    pub obstacle_radius: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            eta_h: default_eta_h(),
            alpha_slope: 1.0,
            obstacle_center: default_center(),
            obstacle_radius: default_radius(),
        }
    }
}

fn default_eta_h() -> f64 {
    planar::DEFAULT_ETA_H
}

fn one() -> f64 {
    1.0
}

fn default_center() -> Vec<f64> {
    planar::OBSTACLE_CENTER.to_vec()
}

fn default_radius() -> f64 {
    planar::OBSTACLE_RADIUS
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol_feas: Option<f64>,
    pub tol_kkt: Option<f64>,
    pub tol_strict: Option<f64>,
    pub max_iterations: Option<usize>,
    pub barrier_growth: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Exact {},
    NearestNeighbor {
        #[serde(default = "default_kf")]
        k_f: f64,
        #[serde(default = "default_kg")]
        k_g: f64,
        /// Measurements drawn uniformly from `[lower, upper]` (unsafe draws
        /// are rejected). Ignored when `dataset` is given.
        #[serde(default = "default_samples")]
        samples: usize,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
        /// CSV with columns `x…, f…, g…` (row-major).
        dataset: Option<PathBuf>,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Exact {}
    }
}

fn default_kf() -> f64 {
    planar::K_F
}

fn default_kg() -> f64 {
    planar::K_G
}

fn default_samples() -> usize {
    400
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoccConfig {
    /// Rows of `Q`.
    pub q: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub state: Option<Vec<f64>>,
    /// Solve these constraints instead of the CLF/CBF pair.
    #[serde(default)]
    pub soccs: Vec<SoccConfig>,
    /// Half-width of the `--oracle` search box (default: `2‖u*‖ + 1`).
    pub oracle_box: Option<f64>,
    #[serde(default = "default_oracle_resolution")]
    pub oracle_resolution: f64,
}

fn default_oracle_resolution() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BoundChoice {
    Value(f64),
    Mode(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasmapSection {
    #[serde(default = "default_lower")]
    pub lower: Vec<f64>,
    #[serde(default = "default_upper")]
    pub upper: Vec<f64>,
    #[serde(default = "default_counts")]
    pub counts: Vec<usize>,
    /// A number, or `"analysis"` for the slack-program bound on the grid.
    #[serde(default = "default_bound")]
    pub bound: BoundChoice,
    #[serde(default = "one")]
    pub factor: f64,
    #[serde(default = "default_origin_ball")]
    pub origin_ball: f64,
}

impl Default for FeasmapSection {
    fn default() -> Self {
        Self {
            lower: default_lower(),
            upper: default_upper(),
            counts: default_counts(),
            bound: default_bound(),
            factor: 1.0,
            origin_ball: default_origin_ball(),
        }
    }
}

fn default_lower() -> Vec<f64> {
    vec![-5.0, -1.0]
}

fn default_upper() -> Vec<f64> {
    vec![5.0, 9.0]
}

fn default_counts() -> Vec<usize> {
    vec![100, 100]
}

fn default_bound() -> BoundChoice {
    BoundChoice::Mode("analysis".into())
}

fn default_origin_ball() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub x0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub control_period: Option<f64>,
    pub substeps: Option<usize>,
    pub convergence_radius: Option<f64>,
    pub max_hold_displacement: Option<f64>,
    /// `"halt"` or `"acquire"`.
    pub policy: Option<String>,
    pub pattern_radius: Option<f64>,
    pub workspace_lower: Option<Vec<f64>>,
    pub workspace_upper: Option<Vec<f64>>,
    pub margins: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// `"offline"` or `"online"`.
    pub kind: String,
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    /// Number of seeds for the offline study, starting at `seed`.
    #[serde(default = "one_usize")]
    pub seeds: usize,
    pub initial_conditions: Option<Vec<Vec<f64>>>,
}

fn default_ns() -> Vec<usize> {
    vec![25, 100, 400]
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniversalSection {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub im_tol: Option<f64>,
    /// Certify strict feasibility with phase I first.
    #[serde(default)]
    pub check: bool,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| bad(e.to_string()))
}

pub fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix, ConfigError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(bad(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn vector(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

pub fn socc(s: &SoccConfig) -> Result<Socc, ConfigError> {
    Socc::new(matrix(&s.q, "q")?, vector(&s.r), vector(&s.b), s.c).map_err(|e| bad(e.to_string()))
}

impl RunConfig {
    pub fn is_planar(&self) -> bool {
        matches!(self.system, SystemConfig::Planar {})
    }

    pub fn dynamics(&self) -> Result<AffineDynamics, ConfigError> {
        match &self.system {
            SystemConfig::Planar {} => Ok(planar::dynamics()),
            SystemConfig::Linear { a, b } => {
                AffineDynamics::linear(matrix(a, "system.a")?, matrix(b, "system.b")?)
                    .map_err(|e| bad(e.to_string()))
            }
        }
    }

    /// `V = ½‖x‖²`, the ball barrier `h = ‖x − c‖² − r²` and the CBF data.
    pub fn certificates(&self, n: usize) -> Result<Certificates, ConfigError> {
        let c = &self.certificates;
        if c.obstacle_center.len() != n {
            return Err(bad(format!(
                "certificates.obstacle_center has length {}, the state has {n}",
                c.obstacle_center.len()
            )));
        }
        if !(c.obstacle_radius >= 0.0) {
            return Err(bad("certificates.obstacle_radius must be nonnegative"));
        }
        let alpha = ClassK::linear(c.alpha_slope).map_err(|e| bad(e.to_string()))?;
        let cbf = CbfSpec::new(alpha, c.eta_h, None).map_err(|e| bad(e.to_string()))?;
        let center = vector(&c.obstacle_center);
        let r2 = c.obstacle_radius * c.obstacle_radius;
        let center2 = center.clone();
        let barrier = Barrier::new(
            Arc::new(move |x: &Vector| (x - &center).norm_squared() - r2),
            Arc::new(move |x: &Vector| (x - &center2) * 2.0),
        );
        Ok(Certificates {
            clf: ClfSpec::quadratic(n),
            cbf,
            barrier,
        })
    }

    pub fn solver(&self) -> Result<SolverConfig, ConfigError> {
        let s = &self.solver;
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            tol_feas: s.tol_feas.unwrap_or(d.tol_feas),
            tol_kkt: s.tol_kkt.unwrap_or(d.tol_kkt),
            tol_strict: s.tol_strict.unwrap_or(d.tol_strict),
            max_iterations: s.max_iterations.unwrap_or(d.max_iterations),
            barrier_growth: s.barrier_growth.unwrap_or(d.barrier_growth),
            ..d
        };
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    /// `None` for the exact model.
    pub fn dataset(
        &self,
        truth: &AffineDynamics,
        barrier: &Barrier,
        seed: u64,
    ) -> Result<Option<(Dataset, LipschitzConstants)>, ConfigError> {
        let ModelConfig::NearestNeighbor {
            k_f,
            k_g,
            samples,
            lower,
            upper,
            dataset,
        } = &self.model
        else {
            return Ok(None);
        };
        let lip = LipschitzConstants::new(*k_f, *k_g).map_err(|e| bad(e.to_string()))?;
        let ds = if let Some(path) = dataset {
            let file = std::fs::File::open(path)
                .map_err(|e| bad(format!("cannot open {}: {e}", path.display())))?;
            Dataset::read_csv(file, truth.dims()).map_err(|e| bad(e.to_string()))?
        } else {
            let n = truth.dims().n();
            let lower = lower.clone().unwrap_or_else(default_lower);
            let upper = upper.clone().unwrap_or_else(default_upper);
            let region = region(&lower, &upper, n, "model")?;
            let stage = safesocp::sim::DatasetStage {
                region,
                count: *samples,
            };
            let pts = safesocp::sim::nested_points(seed, &[stage], barrier);
            Dataset::from_oracle(&Oracle::new(truth.clone()), &pts).map_err(|e| bad(e.to_string()))?
        };
        Ok(Some((ds, lip)))
    }
}

pub fn region(lower: &[f64], upper: &[f64], n: usize, what: &str) -> Result<Region, ConfigError> {
    if lower.len() != n || upper.len() != n {
        return Err(bad(format!("{what}: bounds must have length {n}")));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(bad(format!("{what}: every lower bound must be below its upper bound")));
    }
    Ok(Region::new(lower.to_vec(), upper.to_vec()))
}

impl SimulateSection {
    pub fn apply(&self, base: &mut safesocp::sim::SimConfig, n: usize) -> Result<(), ConfigError> {
        if let Some(x0) = &self.x0 {
            base.x0 = vector(x0);
        }
        if let Some(v) = self.t_end {
            base.t_end = v;
        }
        if let Some(v) = self.control_period {
            base.control_period = v;
        }
        if let Some(v) = self.substeps {
            base.substeps = v;
        }
        if let Some(v) = self.convergence_radius {
            base.convergence_radius = v;
        }
        if let Some(v) = self.max_hold_displacement {
            base.max_hold_displacement = v;
        }
        if let Some(v) = self.margins {
            base.margins = v;
        }
        match self.policy.as_deref() {
            None | Some("halt") => base.stop_policy = StopPolicy::HaltOnInfeasible,
            Some("acquire") => {
                let pattern = match self.pattern_radius {
                    Some(r) => AcquisitionPattern::new(r).map_err(|e| bad(e.to_string()))?,
                    None => AcquisitionPattern::default(),
                };
                let lower = self.workspace_lower.clone().unwrap_or_else(|| vec![-10.0; n]);
                let upper = self.workspace_upper.clone().unwrap_or_else(|| vec![10.0; n]);
                base.stop_policy = StopPolicy::AcquireOnInfeasible {
                    pattern,
                    workspace: region(&lower, &upper, n, "simulate.workspace")?,
                };
            }
            Some(other) => return Err(bad(format!("simulate.policy must be \"halt\" or \"acquire\", got {other:?}"))),
        }
        base.validate().map_err(|e| bad(e.to_string()))
    }
}
