//! Evaluation and sweep reports: JSON documents plus flat CSV tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaboost::{ClassWeights, GridPoint};
use crate::autoencoder::LocalProfile;
use crate::config::{Ablation, ExperimentConfig, TrustMode};
use crate::federation::{CloudModels, RoutingDecision};
use crate::metrics::MetricSummary;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no reports given")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Byte totals from the cost ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    /// Local → cloud bytes actually sent (messages or verdicts).
    pub addai_bytes: u64,
    /// Bytes the raw-offload baseline would have sent for the same samples.
    pub raw_bytes: u64,
    pub messages: u64,
    pub verdicts: u64,
    /// Cloud → local parameter bytes, summed over units.
    pub distribution_bytes: u64,
    pub bytes_per_message: Option<f64>,
    /// `addai_bytes / raw_bytes`.
    pub ratio: f64,
}

/// Samples sent to each cloud ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RouteCounts {
    pub normal: u64,
    pub regular: u64,
    pub attack: u64,
}

impl RouteCounts {
    pub fn add(&mut self, d: RoutingDecision) {
        match d {
            RoutingDecision::NormalModel => self.normal += 1,
            RoutingDecision::RegularModel => self.regular += 1,
            RoutingDecision::AttackModel => self.attack += 1,
        }
    }

    pub fn merge(&self, o: &RouteCounts) -> RouteCounts {
        RouteCounts {
            normal: self.normal + o.normal,
            regular: self.regular + o.regular,
            attack: self.attack + o.attack,
        }
    }

    pub fn total(&self) -> u64 {
        self.normal + self.regular + self.attack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBytes {
    /// Whole autoencoder as f32 parameters.
    pub full: usize,
    /// Encoder half only.
    pub encoder_only: usize,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantInfo {
    pub class_weights: ClassWeights,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub normal: VariantInfo,
    pub regular: VariantInfo,
    pub attack: VariantInfo,
}

impl VariantSummary {
    pub fn from_models(m: &CloudModels) -> VariantSummary {
        let info = |e: &crate::adaboost::BoostedEnsemble| VariantInfo {
            class_weights: e.class_weights,
            rounds: e.rounds.len(),
        };
        VariantSummary {
            normal: info(&m.normal),
            regular: info(&m.regular),
            attack: info(&m.attack),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitResult {
    pub unit_id: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_test_attacks: usize,
    pub profile: LocalProfile,
    pub local: MetricSummary,
    pub cloud: MetricSummary,
    pub routed: RouteCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub input_width: usize,
    pub code_size: usize,
    pub message_bytes: usize,
    pub raw_bytes_per_sample: usize,
    pub trust_mode: TrustMode,
    pub ablation: Ablation,
    pub n_test: usize,
    pub units: Vec<UnitResult>,
    pub overall_local: MetricSummary,
    pub overall_cloud: MetricSummary,
    pub routed: RouteCounts,
    pub ledger: LedgerTotals,
    pub variants: VariantSummary,
    pub grid: Vec<GridPoint>,
    pub model_bytes: ModelBytes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub code_size: usize,
    pub message_bytes: usize,
    pub ledger_ratio: f64,
    pub local_accuracy: f64,
    pub local_mcc: f64,
    pub cloud_accuracy: f64,
    pub cloud_mcc: f64,
    pub cloud_ur: f64,
}

impl SweepRow {
    pub fn from_report(r: &EvaluationReport) -> SweepRow {
        SweepRow {
            code_size: r.code_size,
            message_bytes: r.message_bytes,
            ledger_ratio: r.ledger.ratio,
            local_accuracy: r.overall_local.accuracy,
            local_mcc: r.overall_local.mcc,
            cloud_accuracy: r.overall_cloud.accuracy,
            cloud_mcc: r.overall_cloud.mcc,
            cloud_ur: r.overall_cloud.ur,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
}

/// Any report file, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReportFile {
    Evaluation(Box<EvaluationReport>),
    Sweep(SweepReport),
}

/// Run metadata kept apart from the report so reports stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub created_unix_secs: u64,
    pub tool_version: String,
}

impl RunMetadata {
    pub fn now() -> RunMetadata {
        RunMetadata {
            created_unix_secs: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn to_json(r: &ReportFile) -> String {
    serde_json::to_string_pretty(r).expect("reports always serialize")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Reads a report, reporting syntax and schema errors with line and column.
pub fn read_report(path: &Path) -> Result<ReportFile, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ReportError> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(f))
}

fn metric_fields(m: &MetricSummary) -> Vec<String> {
    vec![
        m.accuracy.to_string(),
        m.mcc.to_string(),
        m.ur.to_string(),
        m.confusion.tp.to_string(),
        m.confusion.tn.to_string(),
        m.confusion.fp.to_string(),
        m.confusion.fn_.to_string(),
    ]
}

/// Rows of `(unit_id, scope, metrics…)`; overall rows use unit id "all".
pub fn metric_rows(r: &EvaluationReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for u in &r.units {
        for (scope, m) in [("local", &u.local), ("cloud", &u.cloud)] {
            let mut row = vec![u.unit_id.to_string(), scope.to_string()];
            row.extend(metric_fields(m));
            rows.push(row);
        }
    }
    for (scope, m) in [("local", &r.overall_local), ("cloud", &r.overall_cloud)] {
        let mut row = vec!["all".to_string(), scope.to_string()];
        row.extend(metric_fields(m));
        rows.push(row);
    }
    rows
}

pub const METRIC_HEADER: [&str; 9] = ["unit_id", "scope", "accuracy", "mcc", "ur", "tp", "tn", "fp", "fn"];

/// Writes report.json, metrics.csv, profiles.csv, ledger.csv and routing.csv.
pub fn write_evaluation(dir: &Path, r: &EvaluationReport) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let file = ReportFile::Evaluation(Box::new(r.clone()));
    write_json(&dir.join("report.json"), &file)?;

    let mut w = csv_writer(&dir.join("metrics.csv"))?;
    w.write_record(METRIC_HEADER)?;
    for row in metric_rows(r) {
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("profiles.csv"))?;
    w.write_record(["unit_id", "eta", "trust", "range_lo", "range_hi", "n_train"])?;
    for u in &r.units {
        let p = &u.profile;
        w.write_record([
            p.unit_id.to_string(),
            p.eta.to_string(),
            p.trust.to_string(),
            p.range_lo.to_string(),
            p.range_hi.to_string(),
            p.n_train.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(dir))?;

    let l = &r.ledger;
    let mut w = csv_writer(&dir.join("ledger.csv"))?;
    w.write_record(["addai_bytes", "raw_bytes", "messages", "verdicts", "distribution_bytes", "ratio"])?;
    w.write_record([
        l.addai_bytes.to_string(),
        l.raw_bytes.to_string(),
        l.messages.to_string(),
        l.verdicts.to_string(),
        l.distribution_bytes.to_string(),
        l.ratio.to_string(),
    ])?;
    w.flush().map_err(io_err(dir))?;

    let mut w = csv_writer(&dir.join("routing.csv"))?;
    w.write_record(["unit_id", "normal", "regular", "attack", "n_test"])?;
    for u in &r.units {
        w.write_record([
            u.unit_id.to_string(),
            u.routed.normal.to_string(),
            u.routed.regular.to_string(),
            u.routed.attack.to_string(),
            u.n_test.to_string(),
        ])?;
    }
    w.write_record([
        "all".to_string(),
        r.routed.normal.to_string(),
        r.routed.regular.to_string(),
        r.routed.attack.to_string(),
        r.n_test.to_string(),
    ])?;
    w.flush().map_err(io_err(dir))?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 8] = [
    "code_size",
    "message_bytes",
    "ledger_ratio",
    "local_accuracy",
    "local_mcc",
    "cloud_accuracy",
    "cloud_mcc",
    "cloud_ur",
];

fn sweep_fields(s: &SweepRow) -> Vec<String> {
    vec![
        s.code_size.to_string(),
        s.message_bytes.to_string(),
        s.ledger_ratio.to_string(),
        s.local_accuracy.to_string(),
        s.local_mcc.to_string(),
        s.cloud_accuracy.to_string(),
        s.cloud_mcc.to_string(),
        s.cloud_ur.to_string(),
    ]
}

/// Writes sweep.json and sweep.csv.
pub fn write_sweep(dir: &Path, s: &SweepReport) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("sweep.json"), &ReportFile::Sweep(s.clone()))?;
    let mut w = csv_writer(&dir.join("sweep.csv"))?;
    w.write_record(SWEEP_HEADER)?;
    for row in &s.rows {
        w.write_record(sweep_fields(row))?;
    }
    w.flush().map_err(io_err(dir))?;
    Ok(())
}

/// Combined view of several report files.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedReport {
    /// `(source, unit_id, scope, metrics…)` rows from evaluation reports.
    pub metrics: Vec<Vec<String>>,
    /// `(source, sweep row)` sorted by code size, then source.
    pub sweep: Vec<(String, SweepRow)>,
}

pub fn merge_reports(inputs: &[(String, ReportFile)]) -> Result<MergedReport, ReportError> {
    if inputs.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut metrics = Vec::new();
    let mut sweep = Vec::new();
    for (source, file) in inputs {
        match file {
            ReportFile::Evaluation(r) => {
                for row in metric_rows(r) {
                    let mut full = vec![source.clone()];
                    full.extend(row);
                    metrics.push(full);
                }
            }
            ReportFile::Sweep(s) => {
                sweep.extend(s.rows.iter().map(|r| (source.clone(), r.clone())));
            }
        }
    }
    sweep.sort_by(|a, b| a.1.code_size.cmp(&b.1.code_size).then_with(|| a.0.cmp(&b.0)));
    Ok(MergedReport { metrics, sweep })
}

/// Writes comparison.csv and/or sweep_merged.csv and returns a text summary.
pub fn write_merged(dir: &Path, m: &MergedReport) -> Result<String, ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut summary = String::new();
    if !m.metrics.is_empty() {
        let mut w = csv_writer(&dir.join("comparison.csv"))?;
        let mut header = vec!["source"];
        header.extend(METRIC_HEADER);
        w.write_record(&header)?;
        for row in &m.metrics {
            w.write_record(row)?;
            summary.push_str(&format!(
                "{:<24} unit {:<4} {:<6} acc {:>8} mcc {:>8} ur {:>8}\n",
                row[0], row[1], row[2], short(&row[3]), short(&row[4]), short(&row[5])
            ));
        }
        w.flush().map_err(io_err(dir))?;
    }
    if !m.sweep.is_empty() {
        let mut w = csv_writer(&dir.join("sweep_merged.csv"))?;
        let mut header = vec!["source"];
        header.extend(SWEEP_HEADER);
        w.write_record(&header)?;
        for (source, row) in &m.sweep {
            let mut rec = vec![source.clone()];
            rec.extend(sweep_fields(row));
            w.write_record(&rec)?;
            summary.push_str(&format!(
                "{:<24} h {:<3} bytes {:<4} ratio {:.5} local mcc {:.4} cloud mcc {:.4}\n",
                source, row.code_size, row.message_bytes, row.ledger_ratio, row.local_mcc, row.cloud_mcc
            ));
        }
        w.flush().map_err(io_err(dir))?;
    }
    std::fs::write(dir.join("summary.txt"), &summary).map_err(io_err(dir))?;
    Ok(summary)
}

fn short(v: &str) -> String {
    v.parse::<f64>().map_or_else(|_| v.to_string(), |x| format!("{x:.4}"))
}
