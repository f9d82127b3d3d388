//! Variance-slope uncertainty and the proceed / request-intervention decision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default positional slope threshold used in the tissue experiments.
pub const DEFAULT_TAU_P: f64 = -0.310;
/// Default rotational slope threshold used in the tissue experiments.
pub const DEFAULT_TAU_R: f64 = -0.487;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    pub var_p: f64,
    pub var_r: f64,
}

/// Per-step positional (m²) and rotational (rad) ensemble variances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TraceEntry>", into = "Vec<TraceEntry>")]
pub struct VarianceTrace {
    entries: Vec<TraceEntry>,
}

impl VarianceTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a trace from variance pairs at steps `0, 1, 2, ...`.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut trace = Self::new();
        for &(var_p, var_r) in pairs {
            trace.push(var_p, var_r)?;
        }
        Ok(trace)
    }

    /// Appends the next step.
    pub fn push(&mut self, var_p: f64, var_r: f64) -> Result<()> {
        check_variances(var_p, var_r)?;
        let t = self.entries.len();
        self.entries.push(TraceEntry { t, var_p, var_r });
        Ok(())
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&TraceEntry> {
        self.entries.get(t)
    }

    /// CSV with header `t,var_p,var_r`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,var_p,var_r\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:.17e},{:.17e}\n", e.t, e.var_p, e.var_r));
        }
        out
    }
}

impl TryFrom<Vec<TraceEntry>> for VarianceTrace {
    type Error = Error;

    fn try_from(entries: Vec<TraceEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.t != i {
                return Err(Error::InvalidTrace(format!(
                    "step indices must be 0, 1, 2, ...; found {} at position {i}",
                    e.t
                )));
            }
            check_variances(e.var_p, e.var_r)?;
        }
        Ok(Self { entries })
    }
}

impl From<VarianceTrace> for Vec<TraceEntry> {
    fn from(trace: VarianceTrace) -> Self {
        trace.entries
    }
}

fn check_variances(var_p: f64, var_r: f64) -> Result<()> {
    if !(var_p.is_finite() && var_p >= 0.0) {
        return Err(Error::InvalidTrace(format!("positional variance {var_p}")));
    }
    if !(var_r.is_finite() && (0.0..=std::f64::consts::PI).contains(&var_r)) {
        return Err(Error::InvalidTrace(format!("rotational variance {var_r}")));
    }
    Ok(())
}

/// Step-to-step change in the two variances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintyVector {
    pub d_var_p: f64,
    pub d_var_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Position,
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    Position,
    Rotation,
    Both,
}

impl GateMode {
    fn checks(self, component: Component) -> bool {
        matches!(
            (self, component),
            (GateMode::Both, _)
                | (GateMode::Position, Component::Position)
                | (GateMode::Rotation, Component::Rotation)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    #[serde(with = "crate::threshold_serde")]
    pub tau_p: f64,
    #[serde(with = "crate::threshold_serde")]
    pub tau_r: f64,
    pub mode: GateMode,
    pub decision_step: usize,
    pub monitor_continuously: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            tau_p: DEFAULT_TAU_P,
            tau_r: DEFAULT_TAU_R,
            mode: GateMode::Both,
            decision_step: 1,
            monitor_continuously: false,
        }
    }
}

impl GateConfig {
    pub fn new(tau_p: f64, tau_r: f64, mode: GateMode) -> Self {
        Self {
            tau_p,
            tau_r,
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.decision_step < 1 {
            return Err(Error::Config("gate decision_step must be >= 1".into()));
        }
        if self.tau_p.is_nan() || self.tau_r.is_nan() {
            return Err(Error::Config("gate thresholds must not be NaN".into()));
        }
        Ok(())
    }

    /// Components whose slope exceeds their threshold under this mode.
    pub fn violations(&self, u: &UncertaintyVector) -> Vec<Component> {
        let mut hit = Vec::new();
        if self.mode.checks(Component::Position) && u.d_var_p > self.tau_p {
            hit.push(Component::Position);
        }
        if self.mode.checks(Component::Rotation) && u.d_var_r > self.tau_r {
            hit.push(Component::Rotation);
        }
        hit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateAction {
    Proceed,
    RequestIntervention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub action: GateAction,
    pub triggered_by: Vec<Component>,
    pub at_step: usize,
    pub u: UncertaintyVector,
}

impl GateDecision {
    pub fn requests_intervention(&self) -> bool {
        self.action == GateAction::RequestIntervention
    }
}

pub fn uncertainty_vector(trace: &VarianceTrace, t: usize) -> Result<UncertaintyVector> {
    if t == 0 {
        return Err(Error::MissingStep(0));
    }
    let now = trace.get(t).ok_or(Error::MissingStep(t))?;
    let prev = trace.get(t - 1).ok_or(Error::MissingStep(t - 1))?;
    Ok(UncertaintyVector {
        d_var_p: now.var_p - prev.var_p,
        d_var_r: now.var_r - prev.var_r,
    })
}

/// Decides at `decision_step`, or at every step from 1 on when monitoring
/// continuously, in which case the first violation wins.
pub fn evaluate_gate(trace: &VarianceTrace, config: &GateConfig) -> Result<GateDecision> {
    config.validate()?;
    if config.monitor_continuously {
        if trace.len() < 2 {
            return Err(Error::MissingStep(1));
        }
        let mut last = None;
        for t in 1..trace.len() {
            let decision = decide_at(trace, config, t)?;
            if decision.requests_intervention() {
                return Ok(decision);
            }
            last = Some(decision);
        }
        Ok(last.expect("trace has at least two steps"))
    } else {
        decide_at(trace, config, config.decision_step)
    }
}

fn decide_at(trace: &VarianceTrace, config: &GateConfig, t: usize) -> Result<GateDecision> {
    let u = uncertainty_vector(trace, t)?;
    let triggered_by = config.violations(&u);
    let action = if triggered_by.is_empty() {
        GateAction::Proceed
    } else {
        GateAction::RequestIntervention
    };
    Ok(GateDecision {
        action,
        triggered_by,
        at_step: t,
        u,
    })
}
