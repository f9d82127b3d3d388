//! Seeded campaigns: training, simulation, calibration, gated runs and reports.
//!
//! Every result is a pure function of a [`CampaignConfig`]. Trials fan out over
//! [`crate::par`] and come back in scenario order, so JSON Lines output does not
//! depend on the worker count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate, default_grid, kl_divergence_gaussian, kl_divergence_histogram, slope_csv_string,
    sweep_thresholds_with, Calibration, ConfusionMatrix, DistributionSummary, MetaObjectiveConfig, SlopeSample,
    SweepPoint, TrialLabel,
};
use crate::error::{Error, Result};
use crate::gate::{Component, GateConfig};
use crate::par::{self, Execution};
use crate::predictors::{
    fit_member, EnsemblePredictor, MemberModel, Predictor, StochasticPredictor, DEFAULT_DROPOUT_SAMPLES,
    DEFAULT_ENSEMBLE_SIZE, DEFAULT_RIDGE_LAMBDA,
};
use crate::seed;
use crate::sim::{
    generate_dataset, run_bimanual_trial, run_trial, Scenario, ScenarioKind, SimConfig, TrialRecord,
    TRIAL_SCHEMA_VERSION,
};

/// Environment variable consulted for the trial seed when neither the config
/// file nor a flag sets one.
pub const SEED_ENV: &str = "SHAPEGUARD_SEED";
pub const DEFAULT_SEED: u64 = 1;
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Trial counts per scenario kind. Kinds missing from a JSON mix count as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMix {
    #[serde(default)]
    pub in_distribution: usize,
    #[serde(default)]
    pub suboptimal_grasp: usize,
    #[serde(default)]
    pub non_local_goal: usize,
    #[serde(default)]
    pub ood_geometry: usize,
    #[serde(default)]
    pub bimanual: usize,
}

impl Default for ScenarioMix {
    fn default() -> Self {
        Self {
            in_distribution: 12,
            suboptimal_grasp: 7,
            non_local_goal: 6,
            ood_geometry: 7,
            bimanual: 8,
        }
    }
}

impl ScenarioMix {
    pub fn none() -> Self {
        Self {
            in_distribution: 0,
            suboptimal_grasp: 0,
            non_local_goal: 0,
            ood_geometry: 0,
            bimanual: 0,
        }
    }

    pub fn count(&self, kind: ScenarioKind) -> usize {
        match kind {
            ScenarioKind::InDistribution => self.in_distribution,
            ScenarioKind::SuboptimalGrasp => self.suboptimal_grasp,
            ScenarioKind::NonLocalGoal => self.non_local_goal,
            ScenarioKind::OodGeometry => self.ood_geometry,
            ScenarioKind::Bimanual => self.bimanual,
        }
    }

    pub fn total(&self) -> usize {
        ScenarioKind::ALL.iter().map(|&k| self.count(k)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    Ensemble { size: usize },
    Stochastic { samples: usize, dropout_rate: f64 },
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::Ensemble {
            size: DEFAULT_ENSEMBLE_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub dataset_seed: u64,
    pub dataset_size: usize,
    pub ensemble_seed: u64,
    pub ridge_lambda: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            dataset_seed: 7,
            dataset_size: 600,
            ensemble_seed: 11,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Weight on false positives in `FN + w·FP`.
    pub w: f64,
    pub histogram_bins: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            w: 0.5,
            histogram_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Base trial seed; trial `i` of each kind uses `seed + i`.
    pub seed: Option<u64>,
    pub mix: ScenarioMix,
    pub training: TrainingConfig,
    pub predictor: PredictorSpec,
    pub gate: GateConfig,
    pub sim: SimConfig,
    pub calibration: CalibrationConfig,
    /// Worker threads for trial execution; `0` uses every core, `1` runs sequentially.
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: None,
            mix: ScenarioMix::default(),
            training: TrainingConfig::default(),
            predictor: PredictorSpec::default(),
            gate: GateConfig::default(),
            sim: SimConfig::default(),
            calibration: CalibrationConfig::default(),
            workers: 0,
            output_dir: PathBuf::from("shapeguard-out"),
        }
    }
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn trial_seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn execution(&self) -> Execution {
        Execution::from_workers(self.workers)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.gate.validate()?;
        match self.predictor {
            PredictorSpec::Ensemble { size } if size < 2 => {
                return Err(Error::Config(format!("ensemble needs at least 2 members, got {size}")))
            }
            PredictorSpec::Stochastic { samples, dropout_rate } => {
                if samples < 2 {
                    return Err(Error::Config(format!("stochastic predictor needs at least 2 samples, got {samples}")));
                }
                if !(dropout_rate > 0.0 && dropout_rate < 1.0) {
                    return Err(Error::Config(format!("dropout rate {dropout_rate} outside (0, 1)")));
                }
            }
            _ => {}
        }
        if !(self.training.ridge_lambda > 0.0) {
            return Err(Error::Config("training.ridge_lambda must be > 0".into()));
        }
        MetaObjectiveConfig::new(self.calibration.w)?;
        if self.calibration.histogram_bins == 0 {
            return Err(Error::Config("calibration.histogram_bins must be >= 1".into()));
        }
        Ok(())
    }

    /// Scenarios in kind order, each kind numbered from the trial seed.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let base = self.trial_seed();
        let mut out = Vec::with_capacity(self.mix.total());
        for kind in ScenarioKind::ALL {
            for i in 0..self.mix.count(kind) as u64 {
                out.push(Scenario::generate(kind, base.wrapping_add(i))?);
            }
        }
        Ok(out)
    }
}

/// What `train` leaves next to the member files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub predictor: PredictorSpec,
    pub training: TrainingConfig,
    pub members: Vec<String>,
}

pub fn train(config: &CampaignConfig) -> Result<(Manifest, Predictor)> {
    config.validate()?;
    let t = &config.training;
    let data = generate_dataset(t.dataset_size, t.dataset_seed, &config.sim.sensor)?;
    let predictor = match config.predictor {
        PredictorSpec::Ensemble { size } => {
            Predictor::Ensemble(EnsemblePredictor::fit(&data, size, t.ensemble_seed, t.ridge_lambda)?)
        }
        PredictorSpec::Stochastic { samples, dropout_rate } => {
            let base = fit_member(&data, seed::derive(t.ensemble_seed, 0xD409, 0), t.ridge_lambda)?;
            Predictor::Stochastic(StochasticPredictor::new(base, dropout_rate, samples)?)
        }
    };
    let count = match &predictor {
        Predictor::Ensemble(e) => e.members().len(),
        Predictor::Stochastic(_) => 1,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        predictor: config.predictor,
        training: *t,
        members: (0..count).map(|i| format!("member_{i}.txt")).collect(),
    };
    Ok((manifest, predictor))
}

fn members_of(predictor: &Predictor) -> Vec<&MemberModel> {
    match predictor {
        Predictor::Ensemble(e) => e.members().iter().collect(),
        Predictor::Stochastic(s) => vec![&s.base],
    }
}

pub fn save_model(dir: &Path, manifest: &Manifest, predictor: &Predictor) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, member) in manifest.members.iter().zip(members_of(predictor)) {
        member.save(&dir.join(name))?;
    }
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(Manifest, Predictor)> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Data(format!("unsupported manifest version {}", manifest.version)));
    }
    let members = manifest
        .members
        .iter()
        .map(|name| MemberModel::load(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    let predictor = match manifest.predictor {
        PredictorSpec::Ensemble { .. } => Predictor::Ensemble(EnsemblePredictor::new(members)?),
        PredictorSpec::Stochastic { samples, dropout_rate } => {
            let [base]: [MemberModel; 1] = members
                .try_into()
                .map_err(|_| Error::Data("stochastic model needs exactly one member file".into()))?;
            Predictor::Stochastic(StochasticPredictor::new(base, dropout_rate, samples)?)
        }
    };
    Ok((manifest, predictor))
}

/// Runs every scenario of the config, gated or not.
pub fn simulate(config: &CampaignConfig, predictor: &Predictor, gate: Option<&GateConfig>) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let scenarios = config.scenarios()?;
    par::try_map(&scenarios, config.execution(), |sc| {
        if sc.kind == ScenarioKind::Bimanual {
            run_bimanual_trial(predictor, gate, sc, &config.sim)
        } else {
            run_trial(predictor, gate, sc, &config.sim)
        }
    })
}

pub fn to_jsonl(records: &[TrialRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl(records: &[TrialRecord], path: &Path) -> Result<()> {
    std::fs::write(path, to_jsonl(records)?)?;
    Ok(())
}

pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: TrialRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if record.schema_version != TRIAL_SCHEMA_VERSION {
            return Err(err(format!(
                "schema version {} (expected {TRIAL_SCHEMA_VERSION})",
                record.schema_version
            )));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TrialRecord>> {
    parse_jsonl(&std::fs::read_to_string(path)?, path)
}

/// Slope samples of the trials that reached the decision step, plus how many
/// did not.
pub fn slope_samples(records: &[TrialRecord]) -> (Vec<SlopeSample>, usize) {
    let samples: Vec<SlopeSample> = records
        .iter()
        .filter_map(|r| {
            r.slope.map(|u| SlopeSample {
                slope_p: u.d_var_p,
                slope_r: u.d_var_r,
                intervention_needed: r.intervention_needed,
            })
        })
        .collect();
    let skipped = records.len() - samples.len();
    (samples, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCalibration {
    pub component: Component,
    pub calibration: Calibration,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub w: f64,
    pub samples: usize,
    pub skipped: usize,
    pub components: Vec<ComponentCalibration>,
}

impl ThresholdReport {
    pub fn tau(&self, component: Component) -> Option<f64> {
        self.components
            .iter()
            .find(|c| c.component == component)
            .map(|c| c.calibration.tau)
    }

    /// `base` with every calibrated threshold substituted.
    pub fn apply(&self, base: &GateConfig) -> GateConfig {
        GateConfig {
            tau_p: self.tau(Component::Position).unwrap_or(base.tau_p),
            tau_r: self.tau(Component::Rotation).unwrap_or(base.tau_r),
            ..*base
        }
    }
}

/// Meta-objective calibration over the default grid, with the full
/// `(threshold, fpr, fnr)` sweep of each component.
pub fn calibrate_records(
    records: &[TrialRecord],
    w: f64,
    components: &[Component],
    execution: Execution,
) -> Result<ThresholdReport> {
    let cfg = MetaObjectiveConfig::new(w)?;
    let (samples, skipped) = slope_samples(records);
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let components = components
        .iter()
        .map(|&component| {
            let grid = default_grid(&samples, component);
            let sweep = sweep_thresholds_with(&samples, component, &grid, execution)?;
            let calibration = calibrate(&samples, component, &cfg, &grid)?;
            Ok(ComponentCalibration {
                component,
                calibration,
                sweep,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdReport {
        w,
        samples: samples.len(),
        skipped,
        components,
    })
}

pub fn sweep_csv(sweep: &[SweepPoint]) -> String {
    let mut out = String::from("threshold,fpr,fnr\n");
    for p in sweep {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.fnr);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub trials: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    /// Fraction of trials that never requested an intervention.
    pub autonomy_rate: f64,
    /// Success with the gate and its oracle interventions.
    pub gated_success_rate: f64,
    /// Success of the counterfactual autonomous rollouts of the same scenarios.
    pub ungated_success_rate: f64,
}

pub fn gate_report(records: &[TrialRecord]) -> Result<GateReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for r in records {
        cm.record(TrialLabel::new(r.intervention_needed, r.intervention_requested));
    }
    let n = records.len() as f64;
    let rate = |f: &dyn Fn(&TrialRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n;
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok(GateReport {
        trials: records.len(),
        confusion: cm,
        accuracy: (cm.tp + cm.tn) as f64 / n,
        fpr: ratio(cm.fp, cm.fp + cm.tn),
        fnr: ratio(cm.fn_, cm.fn_ + cm.tp),
        autonomy_rate: rate(&|r| !r.intervention_requested),
        gated_success_rate: rate(&|r| r.success),
        ungated_success_rate: rate(&|r| !r.intervention_needed),
    })
}

/// Gated campaign plus its confusion report.
pub fn gate_run(config: &CampaignConfig, predictor: &Predictor, gate: &GateConfig) -> Result<(Vec<TrialRecord>, GateReport)> {
    let records = simulate(config, predictor, Some(gate))?;
    let report = gate_report(&records)?;
    Ok((records, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
}

impl SummaryStats {
    fn of(d: &DistributionSummary) -> Self {
        let mut v = d.samples.clone();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        let median = if v.len() % 2 == 0 { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] };
        Self {
            n: v.len(),
            mean: d.fitted_mean,
            variance: d.fitted_variance,
            median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub success: SummaryStats,
    pub failure: SummaryStats,
    /// KL(success ‖ failure) of the moment-fitted Gaussians.
    pub kl_gaussian: f64,
    /// KL(success ‖ failure) of smoothed shared-bin histograms.
    pub kl_histogram: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    /// Variance at the first prediction (t = 0).
    pub raw_variance: Separation,
    /// Variance slope at t = 1.
    pub slope: Separation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    /// Trials that ended before the decision step and carry no slope.
    pub skipped: usize,
    pub position: ComponentReport,
    pub rotation: ComponentReport,
}

/// One bin of a success/failure histogram pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramRow {
    pub quantity: &'static str,
    pub component: Component,
    pub lo: f64,
    pub hi: f64,
    pub success: usize,
    pub failure: usize,
}

struct Split {
    raw: [(Vec<f64>, Vec<f64>); 2],
    slope: [(Vec<f64>, Vec<f64>); 2],
}

fn split(records: &[TrialRecord]) -> (Split, usize) {
    let mut s = Split {
        raw: Default::default(),
        slope: Default::default(),
    };
    let mut skipped = 0;
    for r in records {
        let (Some(u), Some(first)) = (r.slope, r.steps.first()) else {
            skipped += 1;
            continue;
        };
        let pick = |pair: &mut (Vec<f64>, Vec<f64>), v: f64| {
            if r.intervention_needed {
                pair.1.push(v)
            } else {
                pair.0.push(v)
            }
        };
        pick(&mut s.raw[0], first.var_p);
        pick(&mut s.raw[1], first.var_r);
        pick(&mut s.slope[0], u.d_var_p);
        pick(&mut s.slope[1], u.d_var_r);
    }
    (s, skipped)
}

fn separation(success: &[f64], failure: &[f64], bins: usize) -> Result<Separation> {
    let s = DistributionSummary::fit(success.to_vec())?;
    let f = DistributionSummary::fit(failure.to_vec())?;
    Ok(Separation {
        success: SummaryStats::of(&s),
        failure: SummaryStats::of(&f),
        kl_gaussian: kl_divergence_gaussian(&s, &f)?,
        kl_histogram: kl_divergence_histogram(success, failure, bins)?,
    })
}

/// Raw-variance and slope distributions per component, split by ground truth.
pub fn report(records: &[TrialRecord], bins: usize) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (s, skipped) = split(records);
    let (successes, failures) = (s.slope[0].0.len(), s.slope[0].1.len());
    if successes == 0 || failures == 0 {
        return Err(Error::Data(format!(
            "report needs both successful and failed trials with a slope, got {successes} successes and {failures} failures"
        )));
    }
    let component = |i: usize| -> Result<ComponentReport> {
        Ok(ComponentReport {
            raw_variance: separation(&s.raw[i].0, &s.raw[i].1, bins)?,
            slope: separation(&s.slope[i].0, &s.slope[i].1, bins)?,
        })
    };
    Ok(Report {
        trials: records.len(),
        successes,
        failures,
        skipped,
        position: component(0)?,
        rotation: component(1)?,
    })
}

/// Shared-bin histograms of every quantity in [`report`].
pub fn histograms(records: &[TrialRecord], bins: usize) -> Vec<HistogramRow> {
    let (s, _) = split(records);
    let mut rows = Vec::new();
    for (quantity, pairs) in [("raw_variance", &s.raw), ("slope", &s.slope)] {
        for (i, component) in [Component::Position, Component::Rotation].into_iter().enumerate() {
            let (succ, fail) = &pairs[i];
            let all = succ.iter().chain(fail.iter());
            let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
            let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || bins == 0 {
                continue;
            }
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let bin = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
            let mut counts = vec![(0usize, 0usize); bins];
            succ.iter().for_each(|&x| counts[bin(x)].0 += 1);
            fail.iter().for_each(|&x| counts[bin(x)].1 += 1);
            for (b, (sc, fc)) in counts.into_iter().enumerate() {
                rows.push(HistogramRow {
                    quantity,
                    component,
                    lo: lo + b as f64 * width,
                    hi: lo + (b + 1) as f64 * width,
                    success: sc,
                    failure: fc,
                });
            }
        }
    }
    rows
}

fn component_name(c: Component) -> &'static str {
    match c {
        Component::Position => "position",
        Component::Rotation => "rotation",
    }
}

pub fn histogram_csv(rows: &[HistogramRow]) -> String {
    let mut out = String::from("quantity,component,bin_lo,bin_hi,success,failure\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.quantity,
            component_name(r.component),
            r.lo,
            r.hi,
            r.success,
            r.failure
        );
    }
    out
}

pub fn kl_csv(report: &Report) -> String {
    let mut out = String::from("component,quantity,kl_gaussian,kl_histogram\n");
    for (name, c) in [("position", &report.position), ("rotation", &report.rotation)] {
        for (quantity, s) in [("raw_variance", &c.raw_variance), ("slope", &c.slope)] {
            let _ = writeln!(out, "{name},{quantity},{},{}", s.kl_gaussian, s.kl_histogram);
        }
    }
    out
}

/// `var_p,var_r,intervention_needed` at t = 0 for every trial with a slope.
pub fn raw_variance_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("var_p,var_r,intervention_needed\n");
    for r in records.iter().filter(|r| r.slope.is_some()) {
        if let Some(first) = r.steps.first() {
            let _ = writeln!(out, "{},{},{}", first.var_p, first.var_r, u8::from(r.intervention_needed));
        }
    }
    out
}

/// Writes `report.json` and the plot-ready CSVs into `dir`.
pub fn write_report(records: &[TrialRecord], bins: usize, dir: &Path) -> Result<Report> {
    let rep = report(records, bins)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&rep)? + "\n")?;
    std::fs::write(dir.join("slopes.csv"), slope_csv_string(&slope_samples(records).0))?;
    std::fs::write(dir.join("raw_variance.csv"), raw_variance_csv(records))?;
    std::fs::write(dir.join("histograms.csv"), histogram_csv(&histograms(records, bins)))?;
    std::fs::write(dir.join("kl.csv"), kl_csv(&rep))?;
    Ok(rep)
}

/// Per-trial variance traces as `traces/<index>_<kind>_<seed>.csv`.
pub fn write_traces(records: &[TrialRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = dir.join("traces");
    std::fs::create_dir_all(&dir)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let kind = serde_json::to_value(r.kind)?;
            let path = dir.join(format!("{i:04}_{}_{}.csv", kind.as_str().unwrap_or("trial"), r.seed));
            std::fs::write(&path, r.trace()?.to_csv())?;
            Ok(path)
        })
        .collect()
}

/// Default predictor for stochastic campaigns.
pub fn default_stochastic(dropout_rate: f64) -> PredictorSpec {
    PredictorSpec::Stochastic {
        samples: DEFAULT_DROPOUT_SAMPLES,
        dropout_rate,
    }
}
