//! Command-line front end: train, evaluate, sweep-code-size, report.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::adaboost::{BoostedEnsemble, GridPoint, Variant};
use crate::autoencoder::{AutoencoderModel, LocalProfile};
use crate::config::{Ablation, ExperimentConfig, TrustMode};
use crate::dataset::NormalizationStats;
use crate::federation::{self, CloudModels, LocalUnit, PreparedData, TrainedSystem};
use crate::neuralnet::NetworkParams;
use crate::plot::{self, Series};
use crate::report::{self, EvaluationReport, ReportFile, RunMetadata, SweepReport, SweepRow};

#[derive(Debug, Parser)]
#[command(name = "tierguard", version, about = "Two-tier anomaly detection simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the autoencoder and cloud ensembles and save the artifacts.
    Train(TrainArgs),
    /// Evaluate saved artifacts on the test splits.
    Evaluate(EvaluateArgs),
    /// Train and evaluate once per code size.
    SweepCodeSize(SweepArgs),
    /// Merge report files into CSV tables and a text summary.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (defaults to run.output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub trust_mode: Option<TrustMode>,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Replace existing artifacts.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Artifact directory written by `train` (defaults to the output directory).
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Code sizes to try.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 15, 20, 25, 30])]
    pub sizes: Vec<usize>,
    /// Also write sweep.png (cloud MCC against code size).
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ReportArgs {
    /// report.json or sweep.json files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    /// Also write a PNG chart.
    #[arg(long)]
    pub plot: bool,
}

/// Loads the config (or defaults) and applies command-line overrides.
pub fn resolve_config(c: &CommonArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = c.trust_mode {
        cfg.run.trust_mode = t;
    }
    if let Some(a) = c.ablation {
        cfg.run.ablation = a;
    }
    if let Some(o) = &c.out {
        cfg.run.output_dir = o.clone();
    }
    cfg.validate()?;
    let out = cfg.run.output_dir.clone();
    Ok((cfg, out))
}

pub const AUTOENCODER_FILE: &str = "autoencoder.bin";
pub const PROFILES_FILE: &str = "profiles.json";
pub const NORMALIZER_FILE: &str = "normalizer.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn ensemble_file(v: Variant) -> String {
    format!("ensemble_{}.bin", v.name())
}

pub fn artifact_files() -> Vec<String> {
    let mut f = vec![AUTOENCODER_FILE.to_string()];
    f.extend(Variant::ALL.iter().map(|v| ensemble_file(*v)));
    f.extend([PROFILES_FILE, NORMALIZER_FILE, MANIFEST_FILE].map(String::from));
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub seed: u64,
    pub input_width: usize,
    pub code_size: usize,
    pub n_units: usize,
    pub include_class_feature: bool,
    pub distribution_bytes: u64,
    pub grid: Vec<GridPoint>,
}

fn refuse_existing(dir: &Path) -> Result<()> {
    let existing: Vec<String> = artifact_files()
        .into_iter()
        .filter(|f| dir.join(f).exists())
        .collect();
    if !existing.is_empty() {
        bail!(
            "{} already holds artifacts ({}); pass --overwrite to replace them",
            dir.display(),
            existing.join(", ")
        );
    }
    Ok(())
}

pub fn save_artifacts(dir: &Path, cfg: &ExperimentConfig, s: &TrainedSystem, overwrite: bool) -> Result<()> {
    if !overwrite {
        refuse_existing(dir)?;
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, bytes: &[u8]| {
        std::fs::write(dir.join(name), bytes).with_context(|| format!("writing {}", dir.join(name).display()))
    };
    write(AUTOENCODER_FILE, &s.params.to_bytes())?;
    for v in Variant::ALL {
        write(&ensemble_file(v), &s.cloud.get(v).to_bytes())?;
    }
    let profiles: Vec<&LocalProfile> = s.units.iter().map(|u| &u.profile).collect();
    write(PROFILES_FILE, serde_json::to_string_pretty(&profiles)?.as_bytes())?;
    write(NORMALIZER_FILE, serde_json::to_string_pretty(&s.normalizer)?.as_bytes())?;
    let manifest = ArtifactManifest {
        seed: cfg.run.seed,
        input_width: s.normalizer.mean.len(),
        code_size: s.cloud.code_size,
        n_units: s.units.len(),
        include_class_feature: s.cloud.include_class_feature,
        distribution_bytes: s.distribution_bytes,
        grid: s.grid.clone(),
    };
    write(MANIFEST_FILE, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let p = dir.join(name);
    std::fs::read(&p).with_context(|| format!("reading {}", p.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    let bytes = read(dir, name)?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", dir.join(name).display()))
}

pub fn load_artifacts(dir: &Path) -> Result<(ArtifactManifest, TrainedSystem)> {
    let manifest: ArtifactManifest = read_json(dir, MANIFEST_FILE)?;
    let params = NetworkParams::from_bytes(&read(dir, AUTOENCODER_FILE)?).context("decoding autoencoder.bin")?;
    let profiles: Vec<LocalProfile> = read_json(dir, PROFILES_FILE)?;
    let normalizer: NormalizationStats = read_json(dir, NORMALIZER_FILE)?;
    let ens = |v: Variant| -> Result<BoostedEnsemble> {
        let name = ensemble_file(v);
        BoostedEnsemble::from_bytes(&read(dir, &name)?).with_context(|| format!("decoding {name}"))
    };
    let cloud = CloudModels {
        normal: ens(Variant::Normal)?,
        regular: ens(Variant::Regular)?,
        attack: ens(Variant::Attack)?,
        code_size: manifest.code_size,
        include_class_feature: manifest.include_class_feature,
    };
    let model = AutoencoderModel::from_params(params.clone())?;
    if model.code_size != manifest.code_size {
        bail!(
            "autoencoder.bin has code size {} but the manifest says {}",
            model.code_size,
            manifest.code_size
        );
    }
    if profiles.len() != manifest.n_units {
        bail!("{} profiles for {} units", profiles.len(), manifest.n_units);
    }
    let units = profiles
        .into_iter()
        .enumerate()
        .map(|(id, profile)| LocalUnit {
            id,
            model: model.clone(),
            profile,
        })
        .collect();
    let system = TrainedSystem {
        params,
        units,
        cloud,
        normalizer,
        grid: manifest.grid.clone(),
        distribution_bytes: manifest.distribution_bytes,
    };
    Ok((manifest, system))
}

pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let (cfg, out) = resolve_config(&args.common)?;
    if !args.overwrite {
        refuse_existing(&out)?;
    }
    let (_, system) = federation::train_from_config(&cfg)?;
    save_artifacts(&out, &cfg, &system, args.overwrite)?;
    Ok(format!(
        "trained {} units (code size {}); artifacts in {}",
        system.units.len(),
        system.cloud.code_size,
        out.display()
    ))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport> {
    let (cfg, out) = resolve_config(&args.common)?;
    let art_dir = args.artifacts.clone().unwrap_or_else(|| out.clone());
    let (manifest, system) = load_artifacts(&art_dir)?;
    if manifest.code_size != cfg.autoencoder.code_size {
        bail!(
            "artifacts in {} use code size {} but the config asks for {}",
            art_dir.display(),
            manifest.code_size,
            cfg.autoencoder.code_size
        );
    }
    if manifest.input_width != cfg.input_width() {
        bail!(
            "artifacts expect {} input features but the dataset config has {}",
            manifest.input_width,
            cfg.input_width()
        );
    }
    if manifest.n_units != cfg.run.n_units {
        bail!("artifacts were trained for {} units, config has {}", manifest.n_units, cfg.run.n_units);
    }
    let raw = federation::prepare_splits(&cfg)?;
    let data = PreparedData {
        units: federation::normalize_units(&raw, &system.normalizer)?,
        normalizer: system.normalizer.clone(),
    };
    let report = federation::evaluate_system(&cfg, &data, &system)?;
    report::write_evaluation(&out, &report)?;
    report::write_json(&out.join("metadata.json"), &RunMetadata::now())?;
    Ok(report)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepReport> {
    let (cfg, out) = resolve_config(&args.common)?;
    if args.sizes.is_empty() {
        bail!("--sizes needs at least one code size");
    }
    let mut rows = Vec::new();
    for &h in &args.sizes {
        let mut c = cfg.clone();
        c.autoencoder.code_size = h;
        c.validate().with_context(|| format!("code size {h}"))?;
        let r = federation::run_simulation(&c).with_context(|| format!("code size {h}"))?;
        rows.push(SweepRow::from_report(&r));
    }
    rows.sort_by_key(|r| r.code_size);
    let sweep = SweepReport { config: cfg, rows };
    report::write_sweep(&out, &sweep)?;
    report::write_json(&out.join("metadata.json"), &RunMetadata::now())?;
    if args.plot {
        plot::write_png(&out.join("sweep.png"), &sweep_series(&sweep.rows))?;
    }
    Ok(sweep)
}

fn sweep_series(rows: &[SweepRow]) -> Vec<Series> {
    vec![
        Series {
            points: rows.iter().map(|r| (r.code_size as f64, r.cloud_mcc)).collect(),
        },
        Series {
            points: rows.iter().map(|r| (r.code_size as f64, r.local_mcc)).collect(),
        },
    ]
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    let mut inputs = Vec::new();
    for p in &args.inputs {
        let file = report::read_report(p)?;
        inputs.push((p.display().to_string(), file));
    }
    let merged = report::merge_reports(&inputs)?;
    let summary = report::write_merged(&args.out, &merged)?;
    if args.plot {
        let series = if merged.sweep.is_empty() {
            // Per-unit local and cloud MCC across all evaluation reports.
            let mut local = Vec::new();
            let mut cloud = Vec::new();
            let mut i = 0.0;
            for (_, f) in &inputs {
                if let ReportFile::Evaluation(r) = f {
                    for u in &r.units {
                        local.push((i, u.local.mcc));
                        cloud.push((i, u.cloud.mcc));
                        i += 1.0;
                    }
                }
            }
            vec![Series { points: cloud }, Series { points: local }]
        } else {
            let rows: Vec<SweepRow> = merged.sweep.iter().map(|(_, r)| r.clone()).collect();
            sweep_series(&rows)
        };
        plot::write_png(&args.out.join("report.png"), &series)?;
    }
    Ok(summary)
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => {
            let r = cmd_evaluate(&a)?;
            Ok(format!(
                "local: acc {:.4} mcc {:.4} | cloud: acc {:.4} mcc {:.4} ur {:.4} | bytes {} / raw {} (ratio {:.5})",
                r.overall_local.accuracy,
                r.overall_local.mcc,
                r.overall_cloud.accuracy,
                r.overall_cloud.mcc,
                r.overall_cloud.ur,
                r.ledger.addai_bytes,
                r.ledger.raw_bytes,
                r.ledger.ratio
            ))
        }
        Command::SweepCodeSize(a) => {
            let s = cmd_sweep(&a)?;
            Ok(s
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "h {:>3}  bytes {:>4}  ratio {:.5}  local mcc {:.4}  cloud mcc {:.4}",
                        r.code_size, r.message_bytes, r.ledger_ratio, r.local_mcc, r.cloud_mcc
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"))
        }
        Command::Report(a) => cmd_report(&a),
    }
}
