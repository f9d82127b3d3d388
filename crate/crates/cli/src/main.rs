mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use shapeguard::campaign::{self, CampaignConfig, ThresholdReport, SEED_ENV};
use shapeguard::gate::{Component, GateMode};
use shapeguard::{Error, Result};

/// Uncertainty-gated shape servoing campaigns.
///
/// Every subcommand reads an optional JSON config, layered over the defaults;
/// `--set key=value` replaces the value at a dotted key and the dedicated flags
/// override their keys. If no seed is given anywhere, the
/// SHAPEGUARD_SEED environment variable is used. The resolved config is written
/// to `<out>/<command>.config.json`.
///
/// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric degeneracy.
#[derive(Parser)]
#[command(name = "shapeguard", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON campaign config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set mix.bimanual=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (config key `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base trial seed (config key `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores (config key `workers`).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct Manual {
    /// Position slope threshold; skips calibration together with `--tau-r`.
    #[arg(long, allow_hyphen_values = true, requires = "tau_r")]
    tau_p: Option<f64>,
    /// Rotation slope threshold.
    #[arg(long, allow_hyphen_values = true, requires = "tau_p")]
    tau_r: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a supervision dataset and fit the model members.
    Train {
        #[command(flatten)]
        common: Common,
        /// Ensemble size (config key `predictor`).
        #[arg(long)]
        ensemble_size: Option<usize>,
        /// Model directory [default: <out>/model].
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the scenario mix and write trials.jsonl.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Gate with the config thresholds instead of running autonomously.
        #[arg(long)]
        gated: bool,
        /// Also write per-trial variance traces.
        #[arg(long)]
        traces: bool,
    },
    /// Pick slope thresholds from labelled trials.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Trials file [default: <out>/trials.jsonl].
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Cost of a false positive relative to a false negative (config key `calibration.w`).
        #[arg(long)]
        w: Option<f64>,
        #[arg(long, value_enum, default_value_t = Which::Both)]
        component: Which,
        #[command(flatten)]
        manual: Manual,
    },
    /// Run the scenario mix with the gate and oracle interventions.
    GateRun {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// thresholds.json from `calibrate`.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[command(flatten)]
        manual: Manual,
    },
    /// Summaries, KL divergences and plot-ready CSVs of a trials file.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Histogram bins (config key `calibration.histogram_bins`).
        #[arg(long)]
        bins: Option<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Position,
    Rotation,
    Both,
}

impl Which {
    fn components(self) -> Vec<Component> {
        match self {
            Which::Position => vec![Component::Position],
            Which::Rotation => vec![Component::Rotation],
            Which::Both => vec![Component::Position, Component::Rotation],
        }
    }

    fn mode(self) -> GateMode {
        match self {
            Which::Position => GateMode::Position,
            Which::Rotation => GateMode::Rotation,
            Which::Both => GateMode::Both,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ThresholdFile {
    #[serde(with = "shapeguard::threshold_serde")]
    tau_p: f64,
    #[serde(with = "shapeguard::threshold_serde")]
    tau_r: f64,
    mode: GateMode,
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    calibration: Option<ThresholdReport>,
}

fn resolve(cmd: &str, common: &Common, mut flags: Vec<(&'static str, Value)>) -> Result<CampaignConfig> {
    let file = common.config.as_deref().map(config::read_file).transpose()?;
    if let Some(out) = &common.out {
        flags.push(("output_dir", json!(out)));
    }
    if let Some(seed) = common.seed {
        flags.push(("seed", json!(seed)));
    }
    if let Some(workers) = common.workers {
        flags.push(("workers", json!(workers)));
    }
    let env = std::env::var(SEED_ENV).ok();
    let cfg = config::resolve(file, &common.sets, flags, env.as_deref())?;
    echo(cmd, &cfg)?;
    Ok(cfg)
}

fn echo(cmd: &str, cfg: &CampaignConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("{cmd}.config.json"));
    std::fs::write(path, serde_json::to_string_pretty(cfg)? + "\n")?;
    Ok(())
}

fn model_dir(cfg: &CampaignConfig, model: Option<PathBuf>) -> PathBuf {
    model.unwrap_or_else(|| cfg.output_dir.join("model"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            ensemble_size,
            model,
        } => {
            let flags = ensemble_size
                .map(|n| ("predictor", json!({"kind": "ensemble", "size": n})))
                .into_iter()
                .collect();
            let cfg = resolve("train", &common, flags)?;
            let (manifest, predictor) = campaign::train(&cfg)?;
            let dir = model_dir(&cfg, model);
            campaign::save_model(&dir, &manifest, &predictor)?;
            println!("wrote {} member file(s) and {} to {}", manifest.members.len(), campaign::MANIFEST_FILE, dir.display());
        }
        Command::Simulate {
            common,
            model,
            gated,
            traces,
        } => {
            let cfg = resolve("simulate", &common, vec![])?;
            let (_, predictor) = campaign::load_model(&model_dir(&cfg, model))?;
            let records = campaign::simulate(&cfg, &predictor, gated.then_some(&cfg.gate))?;
            let path = cfg.output_dir.join("trials.jsonl");
            campaign::write_jsonl(&records, &path)?;
            if traces {
                campaign::write_traces(&records, &cfg.output_dir)?;
            }
            let needed = records.iter().filter(|r| r.intervention_needed).count();
            println!("{} trials ({needed} needing intervention) -> {}", records.len(), path.display());
        }
        Command::Calibrate {
            common,
            trials,
            w,
            component,
            manual,
        } => {
            let flags = w.map(|w| ("calibration.w", json!(w))).into_iter().collect();
            let cfg = resolve("calibrate", &common, flags)?;
            let file = if let (Some(tau_p), Some(tau_r)) = (manual.tau_p, manual.tau_r) {
                println!("manual thresholds: tau_p = {tau_p}, tau_r = {tau_r}");
                ThresholdFile {
                    tau_p,
                    tau_r,
                    mode: GateMode::Both,
                    source: "manual".into(),
                    calibration: None,
                }
            } else {
                let path = trials.unwrap_or_else(|| cfg.output_dir.join("trials.jsonl"));
                let records = campaign::read_jsonl(&path)?;
                let rep = campaign::calibrate_records(&records, cfg.calibration.w, &component.components(), cfg.execution())?;
                for c in &rep.components {
                    let name = serde_json::to_value(c.component)?;
                    let name = name.as_str().unwrap_or("component");
                    std::fs::write(cfg.output_dir.join(format!("sweep_{name}.csv")), campaign::sweep_csv(&c.sweep))?;
                    let cm = c.calibration.confusion;
                    println!(
                        "{name}: tau* = {} objective = {} (tp {} fp {} tn {} fn {})",
                        c.calibration.tau, c.calibration.objective, cm.tp, cm.fp, cm.tn, cm.fn_
                    );
                    println!("{name} sweep (threshold, fpr, fnr):");
                    for p in &c.sweep {
                        println!("  {:>14.6e} {:.4} {:.4}", p.threshold, p.fpr, p.fnr);
                    }
                }
                let gate = rep.apply(&cfg.gate);
                ThresholdFile {
                    tau_p: gate.tau_p,
                    tau_r: gate.tau_r,
                    mode: component.mode(),
                    source: "calibrated".into(),
                    calibration: Some(rep),
                }
            };
            write_json(&cfg.output_dir.join("thresholds.json"), &file)?;
        }
        Command::GateRun {
            common,
            model,
            thresholds,
            manual,
        } => {
            let mut flags = Vec::new();
            if let Some(path) = &thresholds {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let t: ThresholdFile =
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                flags.push(("gate.tau_p", serde_json::to_value(Tau(t.tau_p))?));
                flags.push(("gate.tau_r", serde_json::to_value(Tau(t.tau_r))?));
                flags.push(("gate.mode", serde_json::to_value(t.mode)?));
            }
            if let (Some(p), Some(r)) = (manual.tau_p, manual.tau_r) {
                flags.push(("gate.tau_p", serde_json::to_value(Tau(p))?));
                flags.push(("gate.tau_r", serde_json::to_value(Tau(r))?));
            }
            let cfg = resolve("gate-run", &common, flags)?;
            let (_, predictor) = campaign::load_model(&model_dir(&cfg, model))?;
            let (records, rep) = campaign::gate_run(&cfg, &predictor, &cfg.gate)?;
            campaign::write_jsonl(&records, &cfg.output_dir.join("gated_trials.jsonl"))?;
            write_json(&cfg.output_dir.join("gate_report.json"), &rep)?;
            let cm = rep.confusion;
            println!("trials {} tp {} fp {} tn {} fn {}", rep.trials, cm.tp, cm.fp, cm.tn, cm.fn_);
            println!(
                "accuracy {:.4} fpr {} fnr {} autonomy {:.4}",
                rep.accuracy,
                fmt_rate(rep.fpr),
                fmt_rate(rep.fnr),
                rep.autonomy_rate
            );
            println!("success gated {:.4} ungated {:.4}", rep.gated_success_rate, rep.ungated_success_rate);
        }
        Command::Report { common, trials, bins } => {
            let flags = bins.map(|b| ("calibration.histogram_bins", json!(b))).into_iter().collect();
            let cfg = resolve("report", &common, flags)?;
            let path = trials.unwrap_or_else(|| cfg.output_dir.join("trials.jsonl"));
            let records = campaign::read_jsonl(&path)?;
            let rep = campaign::write_report(&records, cfg.calibration.histogram_bins, &cfg.output_dir)?;
            println!(
                "trials {} successes {} failures {} skipped {}",
                rep.trials, rep.successes, rep.failures, rep.skipped
            );
            for (name, c) in [("position", &rep.position), ("rotation", &rep.rotation)] {
                println!(
                    "{name}: raw KL {:.4} (hist {:.4}), slope KL {:.4} (hist {:.4}), slope medians {:.4e} / {:.4e}",
                    c.raw_variance.kl_gaussian,
                    c.raw_variance.kl_histogram,
                    c.slope.kl_gaussian,
                    c.slope.kl_histogram,
                    c.slope.success.median,
                    c.slope.failure.median
                );
            }
        }
    }
    Ok(())
}

/// Threshold value in the config's JSON encoding.
#[derive(Serialize)]
struct Tau(#[serde(with = "shapeguard::threshold_serde")] f64);

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::UndefinedRate(_) | Error::DegenerateDistribution => {
            Some("the trials need both successful and failed episodes; simulate a mix that includes out-of-distribution scenarios")
        }
        Error::Io(_) => Some("run `shapeguard train` and `shapeguard simulate` first, or pass the file paths explicitly"),
        _ => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
