//! Closed-loop episodes: sense, predict, aggregate, gate, act.

use serde::{Deserialize, Serialize};

use super::scenario::{make_goal, Goal, Scenario, ScenarioKind};
use super::sheet::{sense_with_seeds, DeformableSheet, SensorConfig, MAX_STEP_TRANSLATION};
use crate::error::{Error, Result};
use crate::gate::{evaluate_gate, uncertainty_vector, GateConfig, GateDecision, UncertaintyVector, VarianceTrace};
use crate::pointcloud::chamfer;
use crate::predictors::{Policy, ShapeServoInput};
use crate::se3::{aggregate, RigidTransform};
use crate::seed;

/// Version of the [`TrialRecord`] JSON layout.
pub const TRIAL_SCHEMA_VERSION: u32 = 1;

const STREAM_SENSE: u64 = 0x5E45E;
const STREAM_POLICY: u64 = 0x9011C7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sensor: SensorConfig,
    pub max_steps: usize,
    /// Steps observed before the policy may declare convergence.
    pub min_steps: usize,
    /// Final Chamfer distance (m) under which a trial counts as a success.
    pub success_chamfer: f64,
    /// The policy stops when its mean translation norm (m) falls below this.
    pub termination_norm: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            max_steps: 20,
            min_steps: 2,
            success_chamfer: 0.003,
            termination_norm: 0.001,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 2 {
            return Err(Error::Config("max_steps must be >= 2 for the gate to see step 1".into()));
        }
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return Err(Error::Config("min_steps must lie in 1..=max_steps".into()));
        }
        if !(self.success_chamfer > 0.0) || !(self.termination_norm > 0.0) {
            return Err(Error::Config("success_chamfer and termination_norm must be positive".into()));
        }
        if self.sensor.subsample_n == 0 || !(self.sensor.noise_sigma >= 0.0) {
            return Err(Error::Config("sensor needs subsample_n >= 1 and noise_sigma >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
    Intervention,
    /// The grasp left the sensed region and the policy input became invalid.
    LostTrack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub samples: usize,
    /// Aggregate action `[tx, ty, tz, wx, wy, wz]`.
    pub action: [f64; 6],
    pub var_p: f64,
    pub var_r: f64,
    /// Chamfer distance (m) from the true surface to the goal before acting.
    pub chamfer: f64,
    pub executed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub gate_enabled: bool,
    pub steps: Vec<StepRecord>,
    pub gate: Option<GateDecision>,
    /// Slope vector at the decision step, when the episode reached it.
    pub slope: Option<UncertaintyVector>,
    pub termination: Termination,
    pub terminated_at_step: usize,
    pub final_chamfer: f64,
    pub success: bool,
    pub intervention_needed: bool,
    pub intervention_requested: bool,
    pub anchored_max_displacement: f64,
}

impl TrialRecord {
    pub fn trace(&self) -> Result<VarianceTrace> {
        let pairs: Vec<(f64, f64)> = self.steps.iter().map(|s| (s.var_p, s.var_r)).collect();
        VarianceTrace::from_pairs(&pairs)
    }
}

struct Rollout {
    steps: Vec<StepRecord>,
    trace: VarianceTrace,
    gate: Option<GateDecision>,
    termination: Termination,
    terminated_at_step: usize,
    final_chamfer: f64,
    anchored_max_displacement: f64,
}

fn clip_translation(action: &RigidTransform) -> RigidTransform {
    let norm = action.translation.norm();
    if norm > MAX_STEP_TRANSLATION {
        RigidTransform::new(action.rotation, action.translation * (MAX_STEP_TRANSLATION / norm))
    } else {
        *action
    }
}

/// The teleoperated arm: moves its grasp straight toward the goal position.
fn assist_step(sheet: &mut DeformableSheet, goal: &DeformableSheet, grasp: usize) -> Result<()> {
    let delta = goal.position(grasp) - sheet.position(grasp);
    if delta.norm() > 1e-12 {
        sheet.apply_action(grasp, &clip_translation(&RigidTransform::from_translation(delta)))?;
    }
    Ok(())
}

/// Oracle completion: the goal-generating actions replayed from the initial shape.
fn oracle_complete(scenario: &Scenario, goal: &Goal) -> Result<DeformableSheet> {
    let mut sheet = scenario.reset_sheet()?;
    for ga in &goal.oracle_actions {
        sheet.apply_action(ga.grasp, &ga.action)?;
    }
    Ok(sheet)
}

fn rollout(
    policy: &dyn Policy,
    gate: Option<&GateConfig>,
    scenario: &Scenario,
    goal: &Goal,
    sim: &SimConfig,
) -> Result<Rollout> {
    let mut sheet = scenario.reset_sheet()?;
    let goal_surface = goal.sheet.top_surface();
    let n = sim.sensor.subsample_n.min(sheet.top_surface_indices().len());
    let mut steps = Vec::new();
    let mut trace = VarianceTrace::new();
    let mut decision = None;
    let mut termination = Termination::MaxSteps;
    let mut anchored = 0.0f64;
    let mut last_t = 0;

    for t in 0..sim.max_steps {
        last_t = t;
        let cloud = sense_with_seeds(
            &sheet,
            n,
            sim.sensor.noise_sigma,
            scenario.subsample_seed(),
            seed::derive(scenario.seed, STREAM_SENSE, t as u64),
        )?;
        let input = match ShapeServoInput::new(cloud, goal.cloud.clone(), sheet.position(scenario.grasp)) {
            Ok(input) => input,
            Err(Error::Data(_)) if t > 0 => {
                termination = Termination::LostTrack;
                break;
            }
            Err(e) => return Err(e),
        };
        let outputs = policy.sample(&input, seed::derive(scenario.seed, STREAM_POLICY, t as u64))?;
        let agg = aggregate(&outputs)?;
        trace.push(agg.var_p, agg.var_r)?;
        let mut step = StepRecord {
            t,
            samples: outputs.len(),
            action: agg.action.to_params(),
            var_p: agg.var_p,
            var_r: agg.var_r,
            chamfer: chamfer(&sheet.top_surface(), &goal_surface)?,
            executed: false,
        };

        if let Some(cfg) = gate {
            let due = if cfg.monitor_continuously {
                t >= 1
            } else {
                t == cfg.decision_step
            };
            if due {
                let mut single = *cfg;
                single.monitor_continuously = false;
                single.decision_step = t;
                let d = evaluate_gate(&trace, &single)?;
                let stop = d.requests_intervention();
                if stop || !cfg.monitor_continuously || decision.is_none() {
                    decision = Some(d);
                }
                if stop {
                    steps.push(step);
                    termination = Termination::Intervention;
                    sheet = oracle_complete(scenario, goal)?;
                    break;
                }
            }
        }

        if t + 1 >= sim.min_steps && agg.action.translation.norm() < sim.termination_norm {
            steps.push(step);
            termination = Termination::Converged;
            break;
        }

        if let Some(assist) = scenario.assist_grasp {
            assist_step(&mut sheet, &goal.sheet, assist)?;
        }
        sheet.apply_action(scenario.grasp, &clip_translation(&agg.action))?;
        anchored = anchored.max(sheet.anchored_max_displacement());
        step.executed = true;
        steps.push(step);
    }

    anchored = anchored.max(sheet.anchored_max_displacement());
    Ok(Rollout {
        final_chamfer: chamfer(&sheet.top_surface(), &goal_surface)?,
        steps,
        trace,
        gate: decision,
        termination,
        terminated_at_step: last_t,
        anchored_max_displacement: anchored,
    })
}

/// Runs one episode. With a gate, an intervention hands the episode to the
/// oracle; `intervention_needed` always comes from a fully autonomous
/// rollout of the same scenario.
pub fn run_trial(
    policy: &dyn Policy,
    gate: Option<&GateConfig>,
    scenario: &Scenario,
    sim: &SimConfig,
) -> Result<TrialRecord> {
    sim.validate()?;
    if let Some(g) = gate {
        g.validate()?;
    }
    scenario.validate()?;
    let initial = scenario.reset_sheet()?;
    let goal = make_goal(&initial, scenario, &sim.sensor)?;

    let autonomous = rollout(policy, None, scenario, &goal, sim)?;
    let autonomous_success = autonomous.final_chamfer < sim.success_chamfer;
    let run = match gate {
        Some(cfg) => rollout(policy, Some(cfg), scenario, &goal, sim)?,
        None => autonomous,
    };
    let decision_step = gate.map_or(1, |g| if g.monitor_continuously { 1 } else { g.decision_step });
    let slope = uncertainty_vector(&run.trace, decision_step).ok();
    let requested = run.gate.as_ref().is_some_and(GateDecision::requests_intervention);
    Ok(TrialRecord {
        schema_version: TRIAL_SCHEMA_VERSION,
        kind: scenario.kind,
        seed: scenario.seed,
        gate_enabled: gate.is_some(),
        success: run.final_chamfer < sim.success_chamfer,
        final_chamfer: run.final_chamfer,
        steps: run.steps,
        gate: run.gate,
        slope,
        termination: run.termination,
        terminated_at_step: run.terminated_at_step,
        intervention_needed: !autonomous_success,
        intervention_requested: requested,
        anchored_max_displacement: run.anchored_max_displacement,
    })
}

/// Two-arm episode: the assist arm follows the oracle every step while the
/// gated policy drives the other grasp.
pub fn run_bimanual_trial(
    policy: &dyn Policy,
    gate: Option<&GateConfig>,
    scenario: &Scenario,
    sim: &SimConfig,
) -> Result<TrialRecord> {
    if scenario.kind != ScenarioKind::Bimanual || scenario.assist_grasp.is_none() {
        return Err(Error::Config("run_bimanual_trial needs a bimanual scenario".into()));
    }
    run_trial(policy, gate, scenario, sim)
}
