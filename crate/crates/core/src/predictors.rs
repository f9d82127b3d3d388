//! Shape-servo policies and their uncertainty wrappers.
//!
//! A policy maps `(current cloud, goal cloud, manipulation point)` to an
//! end-effector action. Members here are ridge-regression maps from a fixed
//! hand-crafted feature vector to six action parameters (translation in
//! meters, axis-angle rotation in radians). Spread across an ensemble of
//! bootstrap-fitted members, or across dropout-masked passes of one member,
//! is the uncertainty signal consumed by the gate.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SMatrix, SVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::se3::{EnsembleOutputs, RigidTransform, Vec3};
use crate::seed;

/// Length of the feature vector produced by [`featurize`].
///
/// | index | block |
/// |-------|-------|
/// | 0..3  | goal centroid − current centroid |
/// | 3..6  | goal per-axis RMS spread − current per-axis RMS spread |
/// | 6..9  | manipulation point − current centroid |
/// | 9..12 | goal − current central mixed second moments (xz, yz, xy), each about its own centroid, divided by [`MOMENT_SCALE`] |
pub const FEATURE_DIM: usize = 12;
/// Translation (3) plus axis-angle rotation (3).
pub const ACTION_DIM: usize = 6;
/// Length scale (m) that brings the mixed second moments to meters.
pub const MOMENT_SCALE: f64 = 0.05;

pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;
pub const DEFAULT_DROPOUT_SAMPLES: usize = 100;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;

pub type Features = SVector<f64, FEATURE_DIM>;
pub type ActionParams = SVector<f64, ACTION_DIM>;
pub type Weights = SMatrix<f64, ACTION_DIM, FEATURE_DIM>;

const MODEL_MAGIC: &str = "shapeguard-member";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeServoInput {
    pub current_cloud: PointCloud,
    pub goal_cloud: PointCloud,
    pub manipulation_point: Vec3,
}

impl ShapeServoInput {
    /// Checks that both clouds are non-empty and the manipulation point lies
    /// inside the current cloud's bounding box inflated by 10% of its largest
    /// extent on every side.
    pub fn new(current_cloud: PointCloud, goal_cloud: PointCloud, manipulation_point: Vec3) -> Result<Self> {
        if goal_cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let (lo, hi) = current_cloud.bounds()?;
        let margin = 0.1 * (hi - lo).max();
        let inside = (0..3).all(|k| {
            manipulation_point[k] >= lo[k] - margin && manipulation_point[k] <= hi[k] + margin
        });
        if !inside {
            return Err(Error::Data(format!(
                "manipulation point {:?} outside the current cloud bounds",
                manipulation_point.as_slice()
            )));
        }
        Ok(Self {
            current_cloud,
            goal_cloud,
            manipulation_point,
        })
    }
}

/// A training example: the action that turned the current shape into the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionTuple {
    pub input: ShapeServoInput,
    pub action: RigidTransform,
}

struct CloudMoments {
    centroid: Vec3,
    spread: Vec3,
    mixed: Vec3,
}

fn moments(cloud: &PointCloud) -> Result<CloudMoments> {
    let centroid = cloud.centroid()?;
    let n = cloud.len() as f64;
    let mut var = Vec3::zeros();
    let mut mixed = Vec3::zeros();
    for p in &cloud.points {
        let d = p - centroid;
        var += d.component_mul(&d);
        mixed += Vec3::new(d.x * d.z, d.y * d.z, d.x * d.y);
    }
    Ok(CloudMoments {
        centroid,
        spread: (var / n).map(f64::sqrt),
        mixed: mixed / n,
    })
}

/// Feature vector of an input; layout documented on [`FEATURE_DIM`].
pub fn featurize(input: &ShapeServoInput) -> Result<Features> {
    let m = input.manipulation_point;
    let cur = moments(&input.current_cloud)?;
    let goal = moments(&input.goal_cloud)?;
    let mut f = Features::zeros();
    f.fixed_rows_mut::<3>(0).copy_from(&(goal.centroid - cur.centroid));
    f.fixed_rows_mut::<3>(3).copy_from(&(goal.spread - cur.spread));
    f.fixed_rows_mut::<3>(6).copy_from(&(m - cur.centroid));
    f.fixed_rows_mut::<3>(9).copy_from(&((goal.mixed - cur.mixed) / MOMENT_SCALE));
    Ok(f)
}

/// Converts six regression outputs into an action, keeping the rotation
/// angle strictly below π.
pub fn params_to_action(params: &ActionParams) -> RigidTransform {
    let mut w = Vec3::new(params[3], params[4], params[5]);
    let angle = w.norm();
    let limit = std::f64::consts::PI - 1e-6;
    if angle > limit {
        w *= limit / angle;
    }
    RigidTransform::new(
        crate::se3::Rotation3::from_axis_angle(&w),
        Vec3::new(params[0], params[1], params[2]),
    )
}

fn action_to_params(action: &RigidTransform) -> ActionParams {
    ActionParams::from_column_slice(&action.to_params())
}

/// One linear policy member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberModel {
    pub weights: Weights,
    pub seed: u64,
    pub ridge_lambda: f64,
}

impl MemberModel {
    pub fn new(weights: Weights, seed: u64, ridge_lambda: f64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Data("member weights must be finite".into()));
        }
        if !(ridge_lambda > 0.0) {
            return Err(Error::Config(format!("ridge lambda must be > 0, got {ridge_lambda}")));
        }
        Ok(Self {
            weights,
            seed,
            ridge_lambda,
        })
    }

    pub fn predict_params(&self, features: &Features) -> ActionParams {
        self.weights * features
    }

    pub fn predict_features(&self, features: &Features) -> RigidTransform {
        params_to_action(&self.predict_params(features))
    }

    pub fn predict(&self, input: &ShapeServoInput) -> Result<RigidTransform> {
        Ok(self.predict_features(&featurize(input)?))
    }

    /// Text format, version 1:
    ///
    /// ```text
    /// shapeguard-member 1
    /// features 12
    /// actions 6
    /// lambda <f64>
    /// seed <u64>
    /// <6 rows of 12 whitespace-separated weights, row-major>
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(out, "features {FEATURE_DIM}");
        let _ = writeln!(out, "actions {ACTION_DIM}");
        let _ = writeln!(out, "lambda {:e}", self.ridge_lambda);
        let _ = writeln!(out, "seed {}", self.seed);
        for r in 0..ACTION_DIM {
            let row: Vec<String> = (0..FEATURE_DIM).map(|c| format!("{:e}", self.weights[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let lines: Vec<&str> = text.lines().collect();
        let header = |i: usize, key: &str| -> Result<&str> {
            let line = lines.get(i).ok_or_else(|| err(i + 1, format!("missing '{key}' line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(err(i + 1, format!("expected '{key}'")));
            }
            parts.next().ok_or_else(|| err(i + 1, format!("'{key}' has no value")))
        };
        let version = header(0, MODEL_MAGIC)?;
        if version.parse::<u32>().ok() != Some(MODEL_VERSION) {
            return Err(err(1, format!("unsupported model version {version}")));
        }
        if header(1, "features")?.parse::<usize>().ok() != Some(FEATURE_DIM) {
            return Err(err(2, format!("feature dimension must be {FEATURE_DIM}")));
        }
        if header(2, "actions")?.parse::<usize>().ok() != Some(ACTION_DIM) {
            return Err(err(3, format!("action dimension must be {ACTION_DIM}")));
        }
        let lambda: f64 = header(3, "lambda")?
            .parse()
            .map_err(|_| err(4, "invalid lambda".into()))?;
        let seed: u64 = header(4, "seed")?
            .parse()
            .map_err(|_| err(5, "invalid seed".into()))?;
        let mut weights = Weights::zeros();
        for r in 0..ACTION_DIM {
            let line_no = 6 + r;
            let line = lines
                .get(5 + r)
                .ok_or_else(|| err(line_no, "missing weight row".into()))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| err(line_no, format!("invalid weight {v:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != FEATURE_DIM {
                return Err(err(line_no, format!("expected {FEATURE_DIM} weights, found {}", row.len())));
            }
            for (c, v) in row.into_iter().enumerate() {
                weights[(r, c)] = v;
            }
        }
        Self::new(weights, seed, lambda)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, path)
    }
}

/// Ridge fit on raw feature / target pairs over a seeded bootstrap resample.
pub fn fit_linear(features: &[Features], targets: &[ActionParams], seed: u64, ridge_lambda: f64) -> Result<MemberModel> {
    if features.len() != targets.len() {
        return Err(Error::Data("feature and target counts differ".into()));
    }
    if features.len() < FEATURE_DIM {
        return Err(Error::Data(format!(
            "need at least {FEATURE_DIM} training tuples, got {}",
            features.len()
        )));
    }
    if !(ridge_lambda > 0.0) {
        return Err(Error::Config(format!("ridge lambda must be > 0, got {ridge_lambda}")));
    }
    let n = features.len();
    let mut rng = seed::derived_rng(seed, 0xB007, 0);
    let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();

    let mut gram = SMatrix::<f64, FEATURE_DIM, FEATURE_DIM>::zeros();
    let mut cross = SMatrix::<f64, FEATURE_DIM, ACTION_DIM>::zeros();
    for &i in &picks {
        let x = &features[i];
        gram += x * x.transpose();
        cross += x * targets[i].transpose();
    }
    gram += SMatrix::<f64, FEATURE_DIM, FEATURE_DIM>::identity() * ridge_lambda;
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-15 {
        return Err(Error::RankDeficient);
    }
    let solution = chol.solve(&cross);
    MemberModel::new(solution.transpose(), seed, ridge_lambda)
}

pub fn fit_member(data: &[SupervisionTuple], seed: u64, ridge_lambda: f64) -> Result<MemberModel> {
    let features = data.iter().map(|d| featurize(&d.input)).collect::<Result<Vec<_>>>()?;
    let targets: Vec<ActionParams> = data.iter().map(|d| action_to_params(&d.action)).collect();
    fit_linear(&features, &targets, seed, ridge_lambda)
}

/// Anything that produces a set of candidate actions for one input.
pub trait Policy: Sync {
    fn sample(&self, input: &ShapeServoInput, rng_seed: u64) -> Result<EnsembleOutputs>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePredictor {
    members: Vec<MemberModel>,
}

impl EnsemblePredictor {
    pub fn new(members: Vec<MemberModel>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::TooFewMembers(members.len()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[MemberModel] {
        &self.members
    }

    /// Fits `size` members with seeds derived from `base_seed`.
    pub fn fit(data: &[SupervisionTuple], size: usize, base_seed: u64, ridge_lambda: f64) -> Result<Self> {
        if size < 2 {
            return Err(Error::TooFewMembers(size));
        }
        let features = data.iter().map(|d| featurize(&d.input)).collect::<Result<Vec<_>>>()?;
        let targets: Vec<ActionParams> = data.iter().map(|d| action_to_params(&d.action)).collect();
        let members = (0..size as u64)
            .map(|i| fit_linear(&features, &targets, seed::derive(base_seed, 0xE45E, i), ridge_lambda))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn predict_features(&self, features: &Features) -> Result<EnsembleOutputs> {
        EnsembleOutputs::new(self.members.iter().map(|m| m.predict_features(features)).collect())
    }
}

pub fn predict_ensemble(ens: &EnsemblePredictor, input: &ShapeServoInput) -> Result<EnsembleOutputs> {
    ens.predict_features(&featurize(input)?)
}

impl Policy for EnsemblePredictor {
    fn sample(&self, input: &ShapeServoInput, _rng_seed: u64) -> Result<EnsembleOutputs> {
        predict_ensemble(self, input)
    }
}

/// One member evaluated `sample_count` times under inverted dropout on its
/// feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPredictor {
    pub base: MemberModel,
    pub dropout_rate: f64,
    pub sample_count: usize,
}

impl StochasticPredictor {
    pub fn new(base: MemberModel, dropout_rate: f64, sample_count: usize) -> Result<Self> {
        if !(dropout_rate > 0.0 && dropout_rate < 1.0) {
            return Err(Error::Config(format!("dropout rate {dropout_rate} outside (0, 1)")));
        }
        if sample_count < 2 {
            return Err(Error::TooFewMembers(sample_count));
        }
        Ok(Self {
            base,
            dropout_rate,
            sample_count,
        })
    }

    pub fn predict_features(&self, features: &Features, rng_seed: u64) -> Result<EnsembleOutputs> {
        let keep = 1.0 - self.dropout_rate;
        let mut rng = seed::rng(rng_seed);
        let columns: Vec<ActionParams> = (0..FEATURE_DIM)
            .map(|j| self.base.weights.column(j) * features[j])
            .collect();
        let samples = (0..self.sample_count)
            .map(|_| {
                let mut params = ActionParams::zeros();
                for col in &columns {
                    if rng.random::<f64>() < keep {
                        params += col / keep;
                    }
                }
                params_to_action(&params)
            })
            .collect();
        EnsembleOutputs::new(samples)
    }
}

pub fn predict_stochastic(sp: &StochasticPredictor, input: &ShapeServoInput, rng_seed: u64) -> Result<EnsembleOutputs> {
    sp.predict_features(&featurize(input)?, rng_seed)
}

impl Policy for StochasticPredictor {
    fn sample(&self, input: &ShapeServoInput, rng_seed: u64) -> Result<EnsembleOutputs> {
        predict_stochastic(self, input, rng_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    Ensemble(EnsemblePredictor),
    Stochastic(StochasticPredictor),
}

impl Policy for Predictor {
    fn sample(&self, input: &ShapeServoInput, rng_seed: u64) -> Result<EnsembleOutputs> {
        match self {
            Predictor::Ensemble(e) => e.sample(input, rng_seed),
            Predictor::Stochastic(s) => s.sample(input, rng_seed),
        }
    }
}

/// Dense design matrix of features, one row per example.
pub fn design_matrix(features: &[Features]) -> DMatrix<f64> {
    DMatrix::from_fn(features.len(), FEATURE_DIM, |r, c| features[r][c])
}
