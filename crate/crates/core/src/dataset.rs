//! Flow-record datasets: CSV ingestion, synthetic fixtures, z-score
//! normalization, stratified splitting and partitioning among local units.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    NotFound(PathBuf),
    #[error("column `{0}` is absent from the CSV header")]
    MissingColumn(String),
    #[error("row {row}: column `{column}`: cannot parse `{value}` as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label `{value}` is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("no records")]
    NoRecords,
    #[error("feature values must be finite")]
    NonFinite,
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot split a dataset with {0} record(s)")]
    TooSmallToSplit(usize),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("cannot partition {records} records among {units} units")]
    TooManyUnits { records: usize, units: usize },
    #[error("dataset contains no normal records")]
    NoNormals,
    #[error("synthetic data needs at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary class of a flow. Normal is 0, attack is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Attack,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Label> {
        match bit {
            0 => Some(Label::Normal),
            1 => Some(Label::Attack),
            _ => None,
        }
    }

    pub fn as_bit(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Attack => 1,
        }
    }

    /// Boosting sign convention: normal is -1, attack is +1.
    pub fn to_pm1(self) -> i8 {
        match self {
            Label::Normal => -1,
            Label::Attack => 1,
        }
    }

    /// Inverse of [`Label::to_pm1`]; non-negative values map to attack.
    pub fn from_pm1(sign: i8) -> Label {
        if sign < 0 {
            Label::Normal
        } else {
            Label::Attack
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub features: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Vec<String>,
    pub records: Vec<FlowRecord>,
}

impl Dataset {
    /// Builds a dataset, checking that every record matches the schema width
    /// and that all features are finite.
    pub fn new(schema: Vec<String>, records: Vec<FlowRecord>) -> Result<Self, DatasetError> {
        let k = schema.len();
        for r in &records {
            if r.features.len() != k {
                return Err(DatasetError::DimensionMismatch {
                    expected: k,
                    got: r.features.len(),
                });
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite);
            }
        }
        Ok(Dataset { schema, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.len()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    fn with_records(&self, records: Vec<FlowRecord>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records,
        }
    }

    fn select(&self, indices: &[usize]) -> Dataset {
        self.with_records(indices.iter().map(|&i| self.records[i].clone()).collect())
    }

    /// Concatenates datasets sharing one schema, in order.
    pub fn concat<'a, I>(parts: I) -> Result<Dataset, DatasetError>
    where
        I: IntoIterator<Item = &'a Dataset>,
    {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(DatasetError::NoRecords)?;
        let mut out = first.clone();
        for d in iter {
            if d.width() != out.width() {
                return Err(DatasetError::DimensionMismatch {
                    expected: out.width(),
                    got: d.width(),
                });
            }
            out.records.extend(d.records.iter().cloned());
        }
        Ok(out)
    }
}

/// Which CSV columns are model features and which holds the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub label: String,
}

impl CsvSchema {
    /// Default WUSTL-IIoT profile: 40 numeric flow statistics, label `Target`.
    ///
    /// Timestamps, addresses, the protocol name, both port numbers and the
    /// attack-type column are excluded.
    pub fn wustl_iiot() -> CsvSchema {
        const FEATURES: [&str; 40] = [
            "Mean", "SrcPkts", "DstPkts", "TotPkts", "DstBytes", "SrcBytes", "TotBytes",
            "SrcLoad", "DstLoad", "Load", "SrcRate", "DstRate", "Rate", "SrcLoss", "DstLoss",
            "Loss", "pLoss", "SrcJitter", "DstJitter", "SIntPkt", "DIntPkt", "Dur", "TcpRtt",
            "IdleTime", "Sum", "Min", "Max", "sDSb", "sTtl", "dTtl", "sIpId", "dIpId",
            "SAppBytes", "DAppBytes", "TotAppByte", "SynAck", "RunTime", "sTos", "SrcJitAct",
            "DstJitAct",
        ];
        CsvSchema {
            features: FEATURES.iter().map(|s| s.to_string()).collect(),
            label: "Target".to_string(),
        }
    }
}

fn parse_finite(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_label(raw: &str) -> Option<Label> {
    match parse_finite(raw)? {
        0.0 => Some(Label::Normal),
        1.0 => Some(Label::Attack),
        _ => None,
    }
}

/// Reads a headered CSV. Row numbers in errors are 1-based data rows.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::NotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|f| position(f))
        .collect::<Result<Vec<_>, _>>()?;
    let label_col = position(&schema.label)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let mut features = Vec::with_capacity(feature_cols.len());
        for (name, &col) in schema.features.iter().zip(&feature_cols) {
            let raw = row.get(col).unwrap_or("");
            let v = parse_finite(raw).ok_or_else(|| DatasetError::Parse {
                row: row_no,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            features.push(v);
        }
        let raw = row.get(label_col).unwrap_or("");
        let label = parse_label(raw).ok_or_else(|| DatasetError::BadLabel {
            row: row_no,
            value: raw.to_string(),
        })?;
        records.push(FlowRecord { features, label });
    }
    if records.is_empty() {
        return Err(DatasetError::NoRecords);
    }
    Dataset::new(schema.features.clone(), records)
}

/// Writes `d` with its schema columns followed by `label_column`.
/// Floats use the shortest representation that parses back exactly.
pub fn write_csv(d: &Dataset, path: &Path, label_column: &str) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let mut header = d.schema.clone();
    header.push(label_column.to_string());
    w.write_record(&header)?;
    for r in &d.records {
        let mut row: Vec<String> = r.features.iter().map(|v| format!("{v:?}")).collect();
        row.push(r.label.as_bit().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-feature z-score parameters. Constant features carry std 1 so they
/// normalize to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit(train: &Dataset) -> Result<Self, DatasetError> {
        if train.is_empty() {
            return Err(DatasetError::NoRecords);
        }
        let k = train.width();
        let n = train.len() as f64;
        let mut mean = vec![0.0; k];
        for r in &train.records {
            for (m, v) in mean.iter_mut().zip(&r.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k];
        for r in &train.records {
            for ((s, v), m) in var.iter_mut().zip(&r.features).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(NormalizationStats { mean, std })
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset, DatasetError> {
        if d.width() != self.mean.len() {
            return Err(DatasetError::DimensionMismatch {
                expected: self.mean.len(),
                got: d.width(),
            });
        }
        let records = d
            .records
            .iter()
            .map(|r| FlowRecord {
                features: self.transform(&r.features),
                label: r.label,
            })
            .collect();
        Ok(d.with_records(records))
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub fn fit_normalizer(train: &Dataset) -> Result<NormalizationStats, DatasetError> {
    NormalizationStats::fit(train)
}

pub fn apply_normalizer(d: &Dataset, s: &NormalizationStats) -> Result<Dataset, DatasetError> {
    s.apply(d)
}

fn indices_by_label(d: &Dataset) -> (Vec<usize>, Vec<usize>) {
    let mut normals = Vec::new();
    let mut attacks = Vec::new();
    for (i, r) in d.records.iter().enumerate() {
        match r.label {
            Label::Normal => normals.push(i),
            Label::Attack => attacks.push(i),
        }
    }
    (normals, attacks)
}

/// Stratified shuffle split. The first part receives ⌊ratio·N⌋ records
/// (±1 from per-class rounding); a class with at least two records lands on
/// both sides. Records keep their original relative order.
pub fn split_train_test(
    d: &Dataset,
    ratio: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    let n = d.len();
    if n < 2 {
        return Err(DatasetError::TooSmallToSplit(n));
    }
    let mut rng = seed::rng(seed);
    let (mut normals, mut attacks) = indices_by_label(d);
    normals.shuffle(&mut rng);
    attacks.shuffle(&mut rng);

    let per_class = |count: usize| -> usize {
        let mut take = (ratio * count as f64).round() as usize;
        if count >= 2 {
            take = take.clamp(1, count - 1);
        }
        take.min(count)
    };
    let mut take_attack = per_class(attacks.len());
    let target = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
    let mut take_normal = target.saturating_sub(take_attack).min(normals.len());
    if normals.len() >= 2 {
        take_normal = take_normal.clamp(1, normals.len() - 1);
    }
    // keep both sides non-empty when a class is a singleton
    if take_normal + take_attack == 0 {
        if normals.is_empty() {
            take_attack = 1;
        } else {
            take_normal = 1;
        }
    } else if take_normal + take_attack == n {
        if take_attack > 0 && attacks.len() == 1 {
            take_attack = 0;
        } else {
            take_normal -= 1;
        }
    }

    let mut train: Vec<usize> = normals[..take_normal]
        .iter()
        .chain(&attacks[..take_attack])
        .copied()
        .collect();
    let mut test: Vec<usize> = normals[take_normal..]
        .iter()
        .chain(&attacks[take_attack..])
        .copied()
        .collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok((d.select(&train), d.select(&test)))
}

/// Random disjoint partition into `n_units` parts whose sizes differ by at most one.
pub fn partition_local(
    d: &Dataset,
    n_units: usize,
    seed: u64,
) -> Result<Vec<Dataset>, DatasetError> {
    if n_units == 0 || n_units > d.len() {
        return Err(DatasetError::TooManyUnits {
            records: d.len(),
            units: n_units,
        });
    }
    if n_units == 1 {
        return Ok(vec![d.clone()]);
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let base = d.len() / n_units;
    let extra = d.len() % n_units;
    let mut parts = Vec::with_capacity(n_units);
    let mut start = 0;
    for u in 0..n_units {
        let size = base + usize::from(u < extra);
        let mut idx = order[start..start + size].to_vec();
        idx.sort_unstable();
        parts.push(d.select(&idx));
        start += size;
    }
    Ok(parts)
}

/// Normal records only, order preserved.
pub fn filter_normal(d: &Dataset) -> Result<Dataset, DatasetError> {
    let records: Vec<FlowRecord> = d
        .records
        .iter()
        .filter(|r| r.label == Label::Normal)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(DatasetError::NoNormals);
    }
    Ok(d.with_records(records))
}

/// Stratified random subsample of `size` records preserving class proportions.
pub fn stratified_subsample(d: &Dataset, size: usize, seed: u64) -> Result<Dataset, DatasetError> {
    if size >= d.len() {
        return Ok(d.clone());
    }
    let mut rng = seed::rng(seed);
    let (mut normals, mut attacks) = indices_by_label(d);
    normals.shuffle(&mut rng);
    attacks.shuffle(&mut rng);
    let take_attack =
        ((size as f64 * attacks.len() as f64 / d.len() as f64).round() as usize).min(attacks.len());
    let take_normal = (size - take_attack).min(normals.len());
    let mut idx: Vec<usize> = normals[..take_normal]
        .iter()
        .chain(&attacks[..take_attack])
        .copied()
        .collect();
    idx.sort_unstable();
    Ok(d.select(&idx))
}

/// Synthetic flows. Normals lie near a random low-rank linear manifold with
/// small isotropic noise; attacks are the same process shifted by ±4
/// standard deviations in every feature (random signs). Each feature is then
/// given its own scale and offset. Normals come first, then attacks.
pub fn generate_synthetic(
    n_normal: usize,
    n_attack: usize,
    k: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    const NOISE: f64 = 0.1;
    const SHIFT_SIGMAS: f64 = 4.0;
    if k < 2 {
        return Err(DatasetError::TooFewFeatures(k));
    }
    let mut rng = seed::rng(seed);
    let latent = (k / 5).max(1);
    let mixing: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..latent)
                .map(|_| rng.sample::<f64, _>(StandardNormal) / (latent as f64).sqrt())
                .collect()
        })
        .collect();
    let sigma: Vec<f64> = mixing
        .iter()
        .map(|row| (row.iter().map(|a| a * a).sum::<f64>() + NOISE * NOISE).sqrt())
        .collect();
    let shift: Vec<f64> = sigma
        .iter()
        .map(|s| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * SHIFT_SIGMAS * s
        })
        .collect();
    let scale: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..5.0)).collect();
    let offset: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();

    let sample = |rng: &mut rand_chacha::ChaCha8Rng, attack: bool| -> Vec<f64> {
        let z: Vec<f64> = (0..latent).map(|_| rng.sample(StandardNormal)).collect();
        (0..k)
            .map(|j| {
                let clean: f64 = mixing[j].iter().zip(&z).map(|(a, z)| a * z).sum();
                let noise: f64 = NOISE * rng.sample::<f64, _>(StandardNormal);
                let shifted = clean + noise + if attack { shift[j] } else { 0.0 };
                offset[j] + scale[j] * shifted
            })
            .collect()
    };
    let mut records = Vec::with_capacity(n_normal + n_attack);
    for _ in 0..n_normal {
        let features = sample(&mut rng, false);
        records.push(FlowRecord {
            features,
            label: Label::Normal,
        });
    }
    for _ in 0..n_attack {
        let features = sample(&mut rng, true);
        records.push(FlowRecord {
            features,
            label: Label::Attack,
        });
    }
    let schema = (0..k).map(|j| format!("f{j}")).collect();
    Dataset::new(schema, records)
}

/// Writes a small CSV from literal rows, for fixtures and examples.
pub fn write_rows(path: &Path, header: &[&str], rows: &[&[&str]]) -> std::io::Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(values: &[(f64, u8)]) -> Dataset {
        Dataset::new(
            vec!["a".into()],
            values
                .iter()
                .map(|&(v, l)| FlowRecord {
                    features: vec![v],
                    label: Label::from_bit(l).unwrap(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn counted(n: usize, attacks: usize) -> Dataset {
        labeled(
            &(0..n)
                .map(|i| (i as f64, u8::from(i < attacks)))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn pm1_mapping() {
        assert_eq!(Label::Normal.to_pm1(), -1);
        assert_eq!(Label::Attack.to_pm1(), 1);
        for l in [Label::Normal, Label::Attack] {
            assert_eq!(Label::from_pm1(l.to_pm1()), l);
        }
    }

    #[test]
    fn normalizer_statistics() {
        let d = labeled(&[(1.0, 0), (2.0, 0), (3.0, 1)]);
        let s = fit_normalizer(&d).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        // population std of {1,2,3}
        let expected = ((1.0 + 0.0 + 1.0) / 3.0f64).sqrt();
        assert!((s.std[0] - expected).abs() < 1e-15);
        assert_eq!(s, fit_normalizer(&d.clone()).unwrap());
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let d = labeled(&[(5.0, 0), (5.0, 1), (5.0, 0)]);
        let s = fit_normalizer(&d).unwrap();
        let z = apply_normalizer(&d, &s).unwrap();
        assert!(z.records.iter().all(|r| r.features[0] == 0.0));
    }

    #[test]
    fn mean_record_maps_to_zero() {
        let d = labeled(&[(1.0, 0), (4.0, 0), (7.0, 1)]);
        let s = fit_normalizer(&d).unwrap();
        let mean = labeled(&[(4.0, 0)]);
        assert_eq!(apply_normalizer(&mean, &s).unwrap().records[0].features, vec![0.0]);
    }

    #[test]
    fn normalizer_dimension_mismatch() {
        let s = fit_normalizer(&labeled(&[(1.0, 0)])).unwrap();
        let wide = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![FlowRecord {
                features: vec![1.0, 2.0],
                label: Label::Normal,
            }],
        )
        .unwrap();
        assert!(matches!(
            apply_normalizer(&wide, &s),
            Err(DatasetError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = counted(100, 10);
        let (a, b) = split_train_test(&d, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        let (a2, b2) = split_train_test(&d, 0.8, 3).unwrap();
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn split_is_stratified() {
        let d = counted(1000, 100);
        for seed in 0..5 {
            let (train, test) = split_train_test(&d, 0.8, seed).unwrap();
            let attacks = train.count(Label::Attack) as i64;
            assert!((attacks - 80).abs() <= 1);
            assert!(test.count(Label::Attack) > 0);
            assert!((train.len() as i64 - 800).abs() <= 1);
        }
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_train_test(&counted(1, 0), 0.8, 0),
            Err(DatasetError::TooSmallToSplit(1))
        ));
        assert!(matches!(
            split_train_test(&counted(10, 2), 1.0, 0),
            Err(DatasetError::BadRatio(_))
        ));
    }

    #[test]
    fn partition_cases() {
        let d = counted(9, 3);
        let parts = partition_local(&d, 3, 1).unwrap();
        assert!(parts.iter().all(|p| p.len() == 3));
        assert_eq!(partition_local(&d, 1, 1).unwrap(), vec![d.clone()]);
        assert!(matches!(
            partition_local(&d, 10, 1),
            Err(DatasetError::TooManyUnits { .. })
        ));
    }

    #[test]
    fn filter_normal_cases() {
        let all_normal = counted(5, 0);
        assert_eq!(filter_normal(&all_normal).unwrap(), all_normal);
        assert!(matches!(
            filter_normal(&counted(4, 4)),
            Err(DatasetError::NoNormals)
        ));
        let mixed = counted(6, 2);
        let normals = filter_normal(&mixed).unwrap();
        let values: Vec<f64> = normals.records.iter().map(|r| r.features[0]).collect();
        assert_eq!(values, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let d = generate_synthetic(100, 0, 5, 9).unwrap();
        assert_eq!((d.count(Label::Normal), d.count(Label::Attack)), (100, 0));
        assert_eq!(d.width(), 5);
        assert_eq!(d, generate_synthetic(100, 0, 5, 9).unwrap());
        assert!(matches!(
            generate_synthetic(1, 1, 1, 0),
            Err(DatasetError::TooFewFeatures(1))
        ));
    }

    #[test]
    fn subsample_preserves_proportions() {
        let d = counted(1000, 73);
        let s = stratified_subsample(&d, 500, 4).unwrap();
        assert_eq!(s.len(), 500);
        assert!((s.count(Label::Attack) as i64 - 37).abs() <= 1);
    }

    #[test]
    fn wustl_profile_has_forty_features() {
        let p = CsvSchema::wustl_iiot();
        assert_eq!(p.features.len(), 40);
        assert!(!p.features.contains(&p.label));
    }
}
