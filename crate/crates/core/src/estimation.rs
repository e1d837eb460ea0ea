//! Nearest-neighbor estimates of `f` and `g` from oracle measurements.
//!
//! With Lipschitz constants `K_f`, `K_g` the value stored at the closest
//! datapoint `p` is within `K_f‖x − p‖` (resp. `K_g‖x − p‖`) of the truth,
//! which gives a sound [`WorstCaseModel`].

use std::io::{Read, Write};

use thiserror::Error;

use crate::certificate::Barrier;
use crate::constraints::{ModelEval, WorstCaseModel};
use crate::region::Region;
use crate::system::{AffineDynamics, SystemDims};
use crate::{Matrix, Vector};

/// Points closer than this are treated as the same measurement location.
pub const DEDUP_TOL: f64 = 1e-12;
/// Default radius of the acquisition pattern.
pub const DEFAULT_PATTERN_RADIUS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("the dataset is empty")]
    EmptyDataset,
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("Lipschitz constant {name} must be positive, got {value}")]
    InvalidLipschitz { name: &'static str, value: f64 },
    #[error("point {point:?} lies outside the workspace")]
    OutsideWorkspace { point: Vec<f64> },
    #[error("invalid acquisition radius {0}")]
    InvalidRadius(f64),
    #[error("dataset csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for EstimationError {
    fn from(e: csv::Error) -> Self {
        EstimationError::Csv(e.to_string())
    }
}

/// Noiseless access to the true dynamics.
#[derive(Clone)]
pub struct Oracle {
    truth: AffineDynamics,
}

impl std::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle").field("dims", &self.truth.dims()).finish()
    }
}

impl Oracle {
    pub fn new(truth: AffineDynamics) -> Self {
        Self { truth }
    }

    pub fn dims(&self) -> SystemDims {
        self.truth.dims()
    }

    pub fn truth(&self) -> &AffineDynamics {
        &self.truth
    }

    pub fn query(&self, x: &Vector) -> (Vector, Matrix) {
        (self.truth.drift(x), self.truth.input_matrix(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    k_f: f64,
    k_g: f64,
}

impl LipschitzConstants {
    pub fn new(k_f: f64, k_g: f64) -> Result<Self, EstimationError> {
        for (name, value) in [("K_f", k_f), ("K_g", k_g)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(EstimationError::InvalidLipschitz { name, value });
            }
        }
        Ok(Self { k_f, k_g })
    }

    pub fn k_f(&self) -> f64 {
        self.k_f
    }

    pub fn k_g(&self) -> f64 {
        self.k_g
    }
}

/// Measurements `{xᵢ, f(xᵢ), g(xᵢ)}` in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: SystemDims,
    points: Vec<Vector>,
    f_values: Vec<Vector>,
    g_values: Vec<Matrix>,
}

impl Dataset {
    pub fn new(dims: SystemDims) -> Self {
        Self {
            dims,
            points: Vec::new(),
            f_values: Vec::new(),
            g_values: Vec::new(),
        }
    }

    /// Queries the oracle at every point, in order.
    pub fn from_oracle<'a>(
        oracle: &Oracle,
        points: impl IntoIterator<Item = &'a Vector>,
    ) -> Result<Self, EstimationError> {
        let mut ds = Self::new(oracle.dims());
        for p in points {
            ds.measure(oracle, p)?;
        }
        Ok(ds)
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn f_value(&self, i: usize) -> &Vector {
        &self.f_values[i]
    }

    pub fn g_value(&self, i: usize) -> &Matrix {
        &self.g_values[i]
    }

    /// Adds a measurement. Returns `false` (and leaves the dataset
    /// unchanged) when a point within [`DEDUP_TOL`] is already stored.
    pub fn insert(&mut self, x: Vector, f: Vector, g: Matrix) -> Result<bool, EstimationError> {
        let (n, m) = (self.dims.n(), self.dims.m());
        if x.len() != n {
            return Err(EstimationError::DimensionMismatch {
                what: "point",
                expected: n,
                got: x.len(),
            });
        }
        if f.len() != n {
            return Err(EstimationError::DimensionMismatch {
                what: "f value",
                expected: n,
                got: f.len(),
            });
        }
        if g.shape() != (n, m) {
            return Err(EstimationError::DimensionMismatch {
                what: "g value",
                expected: n * m,
                got: g.len(),
            });
        }
        if let Some((_, d)) = self.nearest(&x) {
            if d <= DEDUP_TOL {
                return Ok(false);
            }
        }
        self.points.push(x);
        self.f_values.push(f);
        self.g_values.push(g);
        Ok(true)
    }

    pub fn measure(&mut self, oracle: &Oracle, x: &Vector) -> Result<bool, EstimationError> {
        let (f, g) = oracle.query(x);
        self.insert(x.clone(), f, g)
    }

    /// Exact nearest neighbor by linear scan; ties go to the earliest point.
    pub fn nearest(&self, x: &Vector) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d2: f64 = p.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(_, b)| d2 < b) {
                best = Some((i, d2));
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// Keeps the first `n` measurements.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dims: self.dims,
            points: self.points[..n].to_vec(),
            f_values: self.f_values[..n].to_vec(),
            g_values: self.g_values[..n].to_vec(),
        }
    }

    /// Writes `x…, f…, g…` (g row-major) with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EstimationError> {
        let (n, m) = (self.dims.n(), self.dims.m());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        header.extend((0..n).map(|i| format!("f{i}")));
        for i in 0..n {
            header.extend((0..m).map(|j| format!("g{i}{j}")));
        }
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row: Vec<String> = self.points[k].iter().map(|v| v.to_string()).collect();
            row.extend(self.f_values[k].iter().map(|v| v.to_string()));
            for i in 0..n {
                row.extend((0..m).map(|j| self.g_values[k][(i, j)].to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| EstimationError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, dims: SystemDims) -> Result<Self, EstimationError> {
        let (n, m) = (dims.n(), dims.m());
        let width = 2 * n + n * m;
        let mut ds = Self::new(dims);
        let mut r = csv::Reader::from_reader(reader);
        for record in r.records() {
            let record = record?;
            if record.len() != width {
                return Err(EstimationError::DimensionMismatch {
                    what: "csv row",
                    expected: width,
                    got: record.len(),
                });
            }
            let vals = record
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EstimationError::Csv(e.to_string()))?;
            let x = Vector::from_column_slice(&vals[..n]);
            let f = Vector::from_column_slice(&vals[n..2 * n]);
            let g = Matrix::from_row_slice(n, m, &vals[2 * n..]);
            ds.insert(x, f, g)?;
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnEstimate {
    pub fhat: Vector,
    pub ghat: Matrix,
    pub e_f: f64,
    pub e_g: f64,
    pub index: usize,
    pub distance: f64,
}

/// `f̂ = f(p)`, `ĝ = g(p)`, `e_f = K_f d`, `e_g = K_g d` for the nearest
/// datapoint `p` at distance `d`.
pub fn nn_estimate(
    ds: &Dataset,
    lip: &LipschitzConstants,
    x: &Vector,
) -> Result<NnEstimate, EstimationError> {
    if x.len() != ds.dims().n() {
        return Err(EstimationError::DimensionMismatch {
            what: "state",
            expected: ds.dims().n(),
            got: x.len(),
        });
    }
    let (index, distance) = ds.nearest(x).ok_or(EstimationError::EmptyDataset)?;
    Ok(NnEstimate {
        fhat: ds.f_values[index].clone(),
        ghat: ds.g_values[index].clone(),
        e_f: lip.k_f * distance,
        e_g: lip.k_g * distance,
        index,
        distance,
    })
}

/// Nearest-neighbor dynamics with an exactly known barrier.
#[derive(Debug, Clone)]
pub struct NnModel<'a> {
    ds: &'a Dataset,
    lip: LipschitzConstants,
    barrier: Barrier,
}

impl NnModel<'_> {
    pub fn dataset(&self) -> &Dataset {
        self.ds
    }

    pub fn lipschitz(&self) -> LipschitzConstants {
        self.lip
    }
}

impl WorstCaseModel for NnModel<'_> {
    fn dims(&self) -> SystemDims {
        self.ds.dims()
    }

    fn eval_unchecked(&self, x: &Vector) -> ModelEval {
        let est = nn_estimate(self.ds, &self.lip, x).expect("NnModel holds a nonempty dataset");
        ModelEval {
            fhat: est.fhat,
            ghat: est.ghat,
            hhat: self.barrier.value(x),
            gradh_hat: self.barrier.gradient(x),
            e_f: est.e_f,
            e_g: est.e_g,
            e_h: 0.0,
            e_gradh: 0.0,
        }
    }
}

/// Worst-case model with `ĥ = h`, `∇ĥ = ∇h` and nearest-neighbor dynamics.
pub fn build_worstcase_model<'a>(
    ds: &'a Dataset,
    lip: LipschitzConstants,
    exact_cbf: &Barrier,
) -> Result<NnModel<'a>, EstimationError> {
    if ds.is_empty() {
        return Err(EstimationError::EmptyDataset);
    }
    Ok(NnModel {
        ds,
        lip,
        barrier: exact_cbf.clone(),
    })
}

/// Center plus `±ρ` along every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionPattern {
    radius: f64,
}

impl Default for AcquisitionPattern {
    fn default() -> Self {
        Self {
            radius: DEFAULT_PATTERN_RADIUS,
        }
    }
}

impl AcquisitionPattern {
    pub fn new(radius: f64) -> Result<Self, EstimationError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(EstimationError::InvalidRadius(radius));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points(&self, center: &Vector) -> Vec<Vector> {
        let mut pts = vec![center.clone()];
        for i in 0..center.len() {
            for sign in [1.0, -1.0] {
                let mut p = center.clone();
                p[i] += sign * self.radius;
                pts.push(p);
            }
        }
        pts
    }
}

/// Measures at `xbar` and the pattern around it. Pattern points that fall
/// outside the workspace are skipped. Returns the number of new points.
pub fn acquire_on_infeasibility(
    oracle: &Oracle,
    ds: &mut Dataset,
    xbar: &Vector,
    pattern: &AcquisitionPattern,
    workspace: &Region,
) -> Result<usize, EstimationError> {
    if !workspace.contains(xbar) {
        return Err(EstimationError::OutsideWorkspace {
            point: xbar.iter().cloned().collect(),
        });
    }
    let mut added = 0;
    for p in pattern.points(xbar) {
        if workspace.contains(&p) && ds.measure(oracle, &p)? {
            added += 1;
        }
    }
    Ok(added)
}
