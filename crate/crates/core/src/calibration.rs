//! Confusion accounting, threshold sweeps, meta-objective threshold selection
//! and Gaussian / histogram KL divergence between slope distributions.
//!
//! Positive class = "intervention needed" (an autonomous run would fail).
//! The gate requests an intervention when a slope is strictly greater than
//! its threshold.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::Component;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialLabel {
    pub intervention_needed: bool,
    pub intervention_requested: bool,
}

impl TrialLabel {
    pub fn new(intervention_needed: bool, intervention_requested: bool) -> Self {
        Self {
            intervention_needed,
            intervention_requested,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, label: TrialLabel) {
        match (label.intervention_needed, label.intervention_requested) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Weight on false positives in `FN + w·FP`, the probability that a needless
/// intervention causes a failure elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaObjectiveConfig {
    w: f64,
}

impl MetaObjectiveConfig {
    pub fn new(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Config(format!("false-positive weight {w} outside [0, 1]")));
        }
        Ok(Self { w })
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn objective(&self, cm: &ConfusionMatrix) -> f64 {
        cm.fn_ as f64 + self.w * cm.fp as f64
    }
}

/// Variance slopes at the decision step of one trial, with its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSample {
    pub slope_p: f64,
    pub slope_r: f64,
    pub intervention_needed: bool,
}

impl SlopeSample {
    pub fn slope(&self, component: Component) -> f64 {
        match component {
            Component::Position => self.slope_p,
            Component::Rotation => self.slope_r,
        }
    }
}

/// Samples with moment-matched Gaussian parameters (population variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub samples: Vec<f64>,
    pub fitted_mean: f64,
    pub fitted_variance: f64,
}

impl DistributionSummary {
    pub fn fit(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::DegenerateDistribution);
        }
        Ok(Self {
            samples,
            fitted_mean: mean,
            fitted_variance: variance,
        })
    }

    pub fn std_dev(&self) -> f64 {
        self.fitted_variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(with = "crate::threshold_serde")]
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(with = "crate::threshold_serde")]
    pub tau: f64,
    pub objective: f64,
    pub confusion: ConfusionMatrix,
}

pub fn confusion(labels: &[TrialLabel]) -> Result<ConfusionMatrix> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for &label in labels {
        cm.record(label);
    }
    Ok(cm)
}

/// Accuracy, FP/(FP+TN) and FN/(FN+TP).
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(Error::UndefinedRate("accuracy"));
    }
    if cm.fp + cm.tn == 0 {
        return Err(Error::UndefinedRate("false positive rate"));
    }
    if cm.fn_ + cm.tp == 0 {
        return Err(Error::UndefinedRate("false negative rate"));
    }
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / cm.total() as f64,
        fpr: cm.fp as f64 / (cm.fp + cm.tn) as f64,
        fnr: cm.fn_ as f64 / (cm.fn_ + cm.tp) as f64,
    })
}

/// Confusion of the single-component gate `slope > tau` on `samples`.
pub fn confusion_at(samples: &[SlopeSample], component: Component, tau: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for s in samples {
        cm.record(TrialLabel::new(s.intervention_needed, s.slope(component) > tau));
    }
    cm
}

/// `(threshold, fpr, fnr)` for each grid point, ordered by threshold.
pub fn sweep_thresholds(
    samples: &[SlopeSample],
    component: Component,
    grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    sweep_thresholds_with(samples, component, grid, Execution::default())
}

pub fn sweep_thresholds_with(
    samples: &[SlopeSample],
    component: Component,
    grid: &[f64],
    execution: Execution,
) -> Result<Vec<SweepPoint>> {
    let mut grid = grid.to_vec();
    if grid.iter().any(|t| t.is_nan()) {
        return Err(Error::Config("threshold grid contains NaN".into()));
    }
    grid.sort_by(f64::total_cmp);
    par::try_map(&grid, execution, |&tau| {
        let m = metrics(&confusion_at(samples, component, tau))?;
        Ok(SweepPoint {
            threshold: tau,
            fpr: m.fpr,
            fnr: m.fnr,
        })
    })
}

/// Every midpoint between consecutive distinct slopes, plus `±∞`.
pub fn default_grid(samples: &[SlopeSample], component: Component) -> Vec<f64> {
    let mut values: Vec<f64> = samples.iter().map(|s| s.slope(component)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut grid = Vec::with_capacity(values.len() + 2);
    grid.push(f64::NEG_INFINITY);
    grid.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    grid.push(f64::INFINITY);
    grid
}

/// Grid threshold minimising `FN + w·FP` (counts); ties go to the largest
/// threshold, i.e. the fewest interventions.
pub fn calibrate(
    samples: &[SlopeSample],
    component: Component,
    cfg: &MetaObjectiveConfig,
    grid: &[f64],
) -> Result<Calibration> {
    if samples.is_empty() || grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut best: Option<Calibration> = None;
    for &tau in grid {
        if tau.is_nan() {
            return Err(Error::Config("threshold grid contains NaN".into()));
        }
        let cm = confusion_at(samples, component, tau);
        let objective = cfg.objective(&cm);
        let better = match &best {
            None => true,
            Some(b) => objective < b.objective || (objective == b.objective && tau > b.tau),
        };
        if better {
            best = Some(Calibration {
                tau,
                objective,
                confusion: cm,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// KL(p ‖ q) between the moment-fitted Gaussians of two summaries.
pub fn kl_divergence_gaussian(p: &DistributionSummary, q: &DistributionSummary) -> Result<f64> {
    if !(p.fitted_variance > 0.0 && q.fitted_variance > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let (mp, vp) = (p.fitted_mean, p.fitted_variance);
    let (mq, vq) = (q.fitted_mean, q.fitted_variance);
    let kl = 0.5 * (vq / vp).ln() + (vp + (mp - mq).powi(2)) / (2.0 * vq) - 0.5;
    Ok(kl.max(0.0))
}

/// Smoothing mass added to every histogram bin.
pub const HISTOGRAM_EPSILON: f64 = 1e-9;

/// KL(p ‖ q) between histograms over shared equal-width bins spanning both
/// sample sets, with additive smoothing [`HISTOGRAM_EPSILON`].
pub fn kl_divergence_histogram(p: &[f64], q: &[f64], bins: usize) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let (lo, hi) = p
        .iter()
        .chain(q)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return Err(Error::DegenerateDistribution);
    }
    let hist = |xs: &[f64]| {
        let mut counts = vec![HISTOGRAM_EPSILON; bins];
        for &x in xs {
            let idx = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            counts[idx.min(bins - 1)] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        counts.into_iter().map(|c| c / total).collect::<Vec<_>>()
    };
    let (hp, hq) = (hist(p), hist(q));
    Ok(hp
        .iter()
        .zip(&hq)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0))
}

/// Writes samples as CSV with header `slope_p,slope_r,intervention_needed`.
pub fn write_slope_csv(samples: &[SlopeSample], path: &Path) -> Result<()> {
    std::fs::write(path, slope_csv_string(samples))?;
    Ok(())
}

pub fn slope_csv_string(samples: &[SlopeSample]) -> String {
    let mut out = String::from("slope_p,slope_r,intervention_needed\n");
    for s in samples {
        out.push_str(&format!(
            "{:.17e},{:.17e},{}\n",
            s.slope_p,
            s.slope_r,
            u8::from(s.intervention_needed)
        ));
    }
    out
}

pub fn read_slope_csv(path: &Path) -> Result<Vec<SlopeSample>> {
    let text = std::fs::read_to_string(path)?;
    parse_slope_csv(&text, path)
}

pub fn parse_slope_csv(text: &str, path: &Path) -> Result<Vec<SlopeSample>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "slope_p,slope_r,intervention_needed" => {}
        _ => {
            return Err(parse_err(
                1,
                "expected header slope_p,slope_r,intervention_needed".into(),
            ))
        }
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(line_no, format!("expected 3 fields, found {}", fields.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("invalid slope {s:?}")))
        };
        let needed = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line_no, format!("invalid label {other:?}, expected 0 or 1"))),
        };
        samples.push(SlopeSample {
            slope_p: num(fields[0])?,
            slope_r: num(fields[1])?,
            intervention_needed: needed,
        });
    }
    Ok(samples)
}
