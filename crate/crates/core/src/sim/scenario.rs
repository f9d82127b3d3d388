//! Seeded episode scenarios and the self-supervised training distribution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sheet::{sense_with_seeds, DeformableSheet, SensorConfig, SheetGeometry};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::predictors::{ShapeServoInput, SupervisionTuple};
use crate::se3::{RigidTransform, Rotation3, Vec3};
use crate::seed;

const STREAM_SCENARIO: u64 = 0x5CE7;
const STREAM_DATASET: u64 = 0xDA7A;
const STREAM_SUBSAMPLE: u64 = 0xF95;
const STREAM_GOAL_NOISE: u64 = 0x6041;

/// Rows in from the free edge that training grasps may sit on.
const TRAIN_GRASP_ROWS: usize = 3;
/// Out-of-distribution sheets get a gentler goal than training-range ones.
const OOD_GOAL_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    InDistribution,
    SuboptimalGrasp,
    NonLocalGoal,
    OodGeometry,
    Bimanual,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::InDistribution,
        ScenarioKind::SuboptimalGrasp,
        ScenarioKind::NonLocalGoal,
        ScenarioKind::OodGeometry,
        ScenarioKind::Bimanual,
    ];

    pub fn is_out_of_distribution(self) -> bool {
        matches!(
            self,
            ScenarioKind::SuboptimalGrasp | ScenarioKind::NonLocalGoal | ScenarioKind::OodGeometry
        )
    }
}

/// An action applied at a specific grasp node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspAction {
    pub grasp: usize,
    pub action: RigidTransform,
}

/// Everything needed to replay one episode: sheet, robot grasp(s) and the
/// action sequence that generated the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub geometry: SheetGeometry,
    /// Node held by the autonomous arm.
    pub grasp: usize,
    /// Node held by the teleoperated arm (bimanual only).
    pub assist_grasp: Option<usize>,
    pub goal_actions: Vec<GraspAction>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Geometry range the policies are trained on.
pub fn sample_training_geometry(rng: &mut ChaCha8Rng) -> SheetGeometry {
    SheetGeometry {
        rows: rng.random_range(9..=11),
        cols: rng.random_range(9..=11),
        length_x: uniform(rng, 0.09, 0.11),
        width_y: uniform(rng, 0.09, 0.11),
        thickness: 0.01,
        curvature: 0.0,
        kernel_sigma: uniform(rng, 0.035, 0.045),
        yaw: 0.0,
    }
}

/// Coarse, soft, strongly curved sheets laid out half a turn round, so the
/// free edge faces the opposite way from every training sheet.
fn sample_ood_geometry(rng: &mut ChaCha8Rng) -> SheetGeometry {
    SheetGeometry {
        rows: rng.random_range(5..=6),
        cols: rng.random_range(5..=6),
        length_x: uniform(rng, 0.09, 0.11),
        width_y: uniform(rng, 0.09, 0.11),
        thickness: 0.015,
        curvature: uniform(rng, 10.5, 19.5),
        kernel_sigma: uniform(rng, 0.02, 0.03),
        yaw: std::f64::consts::PI,
    }
}

/// A top-layer node on or next to the free edge, in the middle third.
fn sample_good_grasp(sheet: &DeformableSheet, rng: &mut ChaCha8Rng) -> usize {
    let g = *sheet.geometry();
    let row = g.rows - 1 - rng.random_range(0..=1);
    let col = rng.random_range(g.cols / 3..=(2 * g.cols) / 3);
    sheet.node(1, row, col)
}

fn action_in_box(rng: &mut ChaCha8Rng, scale: f64) -> RigidTransform {
    let t = Vec3::new(
        uniform(rng, -0.02, 0.02),
        uniform(rng, -0.015, 0.015),
        uniform(rng, -0.01, 0.03),
    );
    let w = Vec3::new(
        uniform(rng, -0.06, 0.06),
        uniform(rng, -0.06, 0.06),
        uniform(rng, -0.06, 0.06),
    );
    RigidTransform::new(Rotation3::from_axis_angle(&(w * scale)), t * scale)
}

/// Training actions: a random box action shrunk by a uniform factor, so both
/// large moves and fine corrections are covered.
pub fn sample_training_action(rng: &mut ChaCha8Rng) -> RigidTransform {
    let scale = rng.random::<f64>();
    action_in_box(rng, scale)
}

/// A goal-generating action from the upper part of the training range that
/// always lifts the edge.
fn sample_goal_action(rng: &mut ChaCha8Rng) -> RigidTransform {
    let scale = uniform(rng, 0.6, 1.0);
    let mut a = action_in_box(rng, scale);
    a.translation.z = uniform(rng, 0.012, 0.03);
    a
}

fn sample_translation(rng: &mut ChaCha8Rng) -> RigidTransform {
    RigidTransform::from_translation(Vec3::new(
        uniform(rng, -0.012, 0.012),
        uniform(rng, -0.012, 0.008),
        uniform(rng, 0.008, 0.022),
    ))
}

impl Scenario {
    /// Deterministically samples a scenario of `kind` from `seed`.
    pub fn generate(kind: ScenarioKind, seed: u64) -> Result<Self> {
        let mut rng = seed::derived_rng(seed, STREAM_SCENARIO, kind as u64);
        let geometry = match kind {
            ScenarioKind::OodGeometry => sample_ood_geometry(&mut rng),
            _ => sample_training_geometry(&mut rng),
        };
        let sheet = DeformableSheet::new(geometry)?;
        let g = geometry;
        let (grasp, assist_grasp, goal_actions) = match kind {
            ScenarioKind::InDistribution => {
                let grasp = sample_good_grasp(&sheet, &mut rng);
                let action = sample_goal_action(&mut rng);
                (grasp, None, vec![GraspAction { grasp, action }])
            }
            ScenarioKind::OodGeometry => {
                let grasp = sheet.node(1, g.rows - 1, g.cols / 2);
                let p = sample_goal_action(&mut rng).to_params().map(|v| v * OOD_GOAL_SCALE);
                (grasp, None, vec![GraspAction { grasp, action: RigidTransform::from_params(&p) }])
            }
            ScenarioKind::SuboptimalGrasp => {
                // goal made at the free edge, robot holds the middle of the sheet
                let goal_grasp = sample_good_grasp(&sheet, &mut rng);
                let row = g.rows / 2 - 1 + rng.random_range(0..=1);
                let grasp = sheet.node(1, row, rng.random_range(g.cols / 3..=(2 * g.cols) / 3));
                let action = sample_goal_action(&mut rng);
                (grasp, None, vec![GraspAction { grasp: goal_grasp, action }])
            }
            ScenarioKind::NonLocalGoal => {
                // fold: lift and tilt the edge, then place it back down elsewhere
                let grasp = sample_good_grasp(&sheet, &mut rng);
                let lift = RigidTransform::new(
                    Rotation3::about_x(uniform(&mut rng, 1.0, 1.15)),
                    Vec3::new(uniform(&mut rng, -0.005, 0.005), uniform(&mut rng, -0.01, 0.0), uniform(&mut rng, 0.015, 0.02)),
                );
                let place = RigidTransform::new(
                    Rotation3::about_y(uniform(&mut rng, -0.8, 0.8)),
                    Vec3::new(
                        uniform(&mut rng, -0.01, 0.01),
                        uniform(&mut rng, -0.015, -0.01),
                        uniform(&mut rng, -0.012, -0.008),
                    ),
                );
                (
                    grasp,
                    None,
                    vec![GraspAction { grasp, action: lift }, GraspAction { grasp, action: place }],
                )
            }
            ScenarioKind::Bimanual => {
                let row = g.rows - 1;
                let left = sheet.node(1, row, g.cols / 4);
                let right = sheet.node(1, row, g.cols - 1 - g.cols / 4);
                let left_action = sample_translation(&mut rng);
                let right_action = sample_translation(&mut rng);
                (
                    right,
                    Some(left),
                    vec![
                        GraspAction { grasp: left, action: left_action },
                        GraspAction { grasp: right, action: right_action },
                    ],
                )
            }
        };
        Ok(Self {
            kind,
            seed,
            geometry,
            grasp,
            assist_grasp,
            goal_actions,
        })
    }

    pub fn reset_sheet(&self) -> Result<DeformableSheet> {
        DeformableSheet::new(self.geometry)
    }

    pub fn subsample_seed(&self) -> u64 {
        seed::derive(self.seed, STREAM_SUBSAMPLE, 0)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let sheet = self.reset_sheet()?;
        let nodes = sheet.node_count();
        for g in std::iter::once(self.grasp)
            .chain(self.assist_grasp)
            .chain(self.goal_actions.iter().map(|a| a.grasp))
        {
            if g >= nodes {
                return Err(Error::Config(format!("grasp node {g} out of range")));
            }
        }
        if self.kind == ScenarioKind::Bimanual && self.assist_grasp.is_none() {
            return Err(Error::Config("bimanual scenario needs two grasps".into()));
        }
        Ok(())
    }
}

/// Goal produced by replaying the oracle actions on `sheet`.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub cloud: PointCloud,
    pub sheet: DeformableSheet,
    pub oracle_actions: Vec<GraspAction>,
}

/// Applies the scenario's goal-generating actions to a copy of `sheet`, then
/// senses the result.
pub fn make_goal(sheet: &DeformableSheet, scenario: &Scenario, sensor: &SensorConfig) -> Result<Goal> {
    let mut goal = sheet.clone();
    for ga in &scenario.goal_actions {
        goal.apply_action(ga.grasp, &ga.action)?;
    }
    let n = sensor.subsample_n.min(goal.top_surface_indices().len());
    let cloud = sense_with_seeds(
        &goal,
        n,
        sensor.noise_sigma,
        scenario.subsample_seed(),
        seed::derive(scenario.seed, STREAM_GOAL_NOISE, 0),
    )?;
    Ok(Goal {
        cloud,
        sheet: goal,
        oracle_actions: scenario.goal_actions.clone(),
    })
}

/// Self-supervised tuples: a random training-range sheet and grasp per action;
/// the sensed result of the action is the goal. Half of the examples start
/// from a sheet already deformed by a goal-sized action and one in ten uses the identity action.
pub fn generate_dataset(count: usize, dataset_seed: u64, sensor: &SensorConfig) -> Result<Vec<SupervisionTuple>> {
    (0..count as u64)
        .map(|i| {
            let mut rng = seed::derived_rng(dataset_seed, STREAM_DATASET, i);
            let geometry = sample_training_geometry(&mut rng);
            let mut sheet = DeformableSheet::new(geometry)?;
            let row = geometry.rows - 1 - rng.random_range(0..=TRAIN_GRASP_ROWS);
            let col = rng.random_range(geometry.cols / 3..=(2 * geometry.cols) / 3);
            let grasp = sheet.node(1, row, col);
            if rng.random::<bool>() {
                let prior = sample_goal_action(&mut rng);
                sheet.apply_action(grasp, &prior)?;
            }
            let action = if rng.random::<f64>() < 0.1 {
                RigidTransform::identity()
            } else {
                sample_training_action(&mut rng)
            };
            let n = sensor.subsample_n.min(sheet.top_surface_indices().len());
            let sub_seed = rng.random::<u64>();
            let m = sheet.position(grasp);
            let current = sense_with_seeds(&sheet, n, sensor.noise_sigma, sub_seed, rng.random())?;
            sheet.apply_action(grasp, &action)?;
            let goal = sense_with_seeds(&sheet, n, sensor.noise_sigma, sub_seed, rng.random())?;
            Ok(SupervisionTuple {
                input: ShapeServoInput::new(current, goal, m)?,
                action,
            })
        })
        .collect()
}
