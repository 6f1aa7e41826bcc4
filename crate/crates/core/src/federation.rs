//! Two-tier orchestration: cloud-side training and parameter distribution,
//! local inference and message emission, local-range routing to the three
//! cloud ensembles, and byte accounting on a simulated uplink.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaboost::{self, BoostedEnsemble, GridPoint, Variant};
use crate::autoencoder::{self, AutoencoderModel, LocalProfile};
use crate::config::{Ablation, DatasetSource, ExperimentConfig, TrustMode};
use crate::dataset::{self, Dataset, FlowRecord, Label, NormalizationStats};
use crate::metrics::{ConfusionMatrix, MetricSummary};
use crate::neuralnet::{NetworkParams, TrainConfig};
use crate::report::{EvaluationReport, LedgerTotals, ModelBytes, RouteCounts, UnitResult, VariantSummary};
use crate::seed::{derive_seed, Stage};

/// Bytes for the predicted class plus the f32 reconstruction error.
pub const MESSAGE_HEADER_BYTES: usize = 1 + 4;
/// Bytes per raw feature in the offload baseline.
pub const RAW_FEATURE_BYTES: usize = 4;

/// Message length for code size `h`: 1 + 4 + 4h.
pub const fn message_len(h: usize) -> usize {
    MESSAGE_HEADER_BYTES + 4 * h
}

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("message length {got} does not match code size {h} (expected {expected} bytes)")]
    Length { got: usize, expected: usize, h: usize },
    #[error("invalid class byte {0}")]
    ClassByte(u8),
}

/// What a local unit sends to the cloud when its verdict is not trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudMessage {
    pub predicted_class: Label,
    pub recon_error: f32,
    pub code: Vec<f32>,
}

impl CloudMessage {
    pub fn code_size(&self) -> usize {
        self.code.len()
    }

    /// Class byte, then the error and each code component as little-endian f32.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(message_len(self.code.len()));
        out.push(self.predicted_class.as_bit());
        out.extend_from_slice(&self.recon_error.to_le_bytes());
        for c in &self.code {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], h: usize) -> Result<CloudMessage, WireError> {
        let expected = message_len(h);
        if bytes.len() != expected {
            return Err(WireError::Length {
                got: bytes.len(),
                expected,
                h,
            });
        }
        let predicted_class = Label::from_bit(bytes[0]).ok_or(WireError::ClassByte(bytes[0]))?;
        let f = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        Ok(CloudMessage {
            predicted_class,
            recon_error: f(1),
            code: (0..h).map(|j| f(5 + 4 * j)).collect(),
        })
    }

    /// Bitwise comparison (distinguishes NaN payloads and signed zeros).
    pub fn bitwise_eq(&self, other: &CloudMessage) -> bool {
        self.predicted_class == other.predicted_class
            && self.recon_error.to_bits() == other.recon_error.to_bits()
            && self.code.len() == other.code.len()
            && self
                .code
                .iter()
                .zip(&other.code)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn encode_message(m: &CloudMessage) -> Vec<u8> {
    m.encode()
}

/// Which cloud ensemble receives a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoutingDecision {
    NormalModel,
    RegularModel,
    AttackModel,
}

impl RoutingDecision {
    pub fn variant(self) -> Variant {
        match self {
            RoutingDecision::NormalModel => Variant::Normal,
            RoutingDecision::RegularModel => Variant::Regular,
            RoutingDecision::AttackModel => Variant::Attack,
        }
    }

    pub fn from_variant(v: Variant) -> RoutingDecision {
        match v {
            Variant::Normal => RoutingDecision::NormalModel,
            Variant::Regular => RoutingDecision::RegularModel,
            Variant::Attack => RoutingDecision::AttackModel,
        }
    }
}

/// Below the local range → Normal; inside (inclusive) → Regular; above → Attack.
pub fn route(error: f64, profile: &LocalProfile) -> RoutingDecision {
    if error < profile.range_lo {
        RoutingDecision::NormalModel
    } else if error <= profile.range_hi {
        RoutingDecision::RegularModel
    } else {
        RoutingDecision::AttackModel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    /// Local → cloud message with code and error.
    Message,
    /// Local → cloud one-byte verdict in trusted mode.
    Verdict,
    /// Cloud → local parameter distribution.
    Params,
}

/// Observer of every payload crossing the simulated channel.
pub trait ByteTap: Send + Sync {
    fn record(&self, kind: PayloadKind, payload_len: usize, raw_equivalent: usize);
}

/// Running byte totals; safe for concurrent increments.
#[derive(Debug, Default)]
pub struct CostLedger {
    addai_bytes: AtomicU64,
    raw_bytes: AtomicU64,
    messages: AtomicU64,
    verdicts: AtomicU64,
    distribution_bytes: AtomicU64,
}

impl ByteTap for CostLedger {
    fn record(&self, kind: PayloadKind, payload_len: usize, raw_equivalent: usize) {
        let len = payload_len as u64;
        match kind {
            PayloadKind::Message => {
                self.addai_bytes.fetch_add(len, Ordering::Relaxed);
                self.raw_bytes
                    .fetch_add(raw_equivalent as u64, Ordering::Relaxed);
                self.messages.fetch_add(1, Ordering::Relaxed);
            }
            PayloadKind::Verdict => {
                self.addai_bytes.fetch_add(len, Ordering::Relaxed);
                self.raw_bytes
                    .fetch_add(raw_equivalent as u64, Ordering::Relaxed);
                self.verdicts.fetch_add(1, Ordering::Relaxed);
            }
            PayloadKind::Params => {
                self.distribution_bytes.fetch_add(len, Ordering::Relaxed);
            }
        }
    }
}

impl CostLedger {
    pub fn new() -> CostLedger {
        CostLedger::default()
    }

    pub fn totals(&self) -> LedgerTotals {
        let addai_bytes = self.addai_bytes.load(Ordering::SeqCst);
        let raw_bytes = self.raw_bytes.load(Ordering::SeqCst);
        let messages = self.messages.load(Ordering::SeqCst);
        LedgerTotals {
            addai_bytes,
            raw_bytes,
            messages,
            verdicts: self.verdicts.load(Ordering::SeqCst),
            distribution_bytes: self.distribution_bytes.load(Ordering::SeqCst),
            bytes_per_message: (messages > 0).then(|| addai_bytes as f64 / messages as f64),
            ratio: if raw_bytes > 0 {
                addai_bytes as f64 / raw_bytes as f64
            } else {
                0.0
            },
        }
    }
}

/// Records each payload length, for recomputing ledger totals.
#[derive(Debug, Default)]
pub struct MessageLog {
    entries: Mutex<Vec<(PayloadKind, usize, usize)>>,
}

impl MessageLog {
    pub fn entries(&self) -> Vec<(PayloadKind, usize, usize)> {
        self.entries.lock().unwrap().clone()
    }
}

impl ByteTap for MessageLog {
    fn record(&self, kind: PayloadKind, payload_len: usize, raw_equivalent: usize) {
        self.entries
            .lock()
            .unwrap()
            .push((kind, payload_len, raw_equivalent));
    }
}

/// In-process channel: delivers payloads unchanged and reports them to every tap.
#[derive(Clone, Default)]
pub struct Channel {
    taps: Vec<Arc<dyn ByteTap>>,
}

impl Channel {
    pub fn new() -> Channel {
        Channel::default()
    }

    pub fn with_tap(mut self, tap: Arc<dyn ByteTap>) -> Channel {
        self.taps.push(tap);
        self
    }

    pub fn transmit(&self, kind: PayloadKind, payload: Vec<u8>, raw_equivalent: usize) -> Vec<u8> {
        for t in &self.taps {
            t.record(kind, payload.len(), raw_equivalent);
        }
        payload
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct SimError {
    pub stage: &'static str,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, SimError>;
}

impl<T, E> StageContext<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn stage(self, stage: &'static str) -> Result<T, SimError> {
        self.map_err(|e| SimError {
            stage,
            source: Box::new(e),
        })
    }
}

fn sim_error(stage: &'static str, msg: String) -> SimError {
    SimError {
        stage,
        source: msg.into(),
    }
}

/// Trains one autoencoder on the normal records pooled from every unit.
pub fn cloud_train_autoencoder(
    all_units_data: &[Dataset],
    h: usize,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<NetworkParams, SimError> {
    let normals: Vec<Dataset> = all_units_data
        .iter()
        .filter_map(|d| dataset::filter_normal(d).ok())
        .collect();
    if normals.is_empty() {
        return Err(sim_error("cloud-autoencoder", "no normal samples in any unit".into()));
    }
    let pooled = Dataset::concat(&normals).stage("cloud-autoencoder")?;
    let model = autoencoder::build_autoencoder(pooled.width(), h, init_seed).stage("cloud-autoencoder")?;
    let trained = autoencoder::train(model, &pooled, cfg).stage("cloud-autoencoder")?;
    Ok(trained.params)
}

/// Sends the serialized parameters to each unit over `channel` and rebuilds
/// a model from what arrived.
pub fn distribute_params(
    p: &NetworkParams,
    n_units: usize,
    channel: &Channel,
) -> Result<Vec<AutoencoderModel>, SimError> {
    let payload = p.to_bytes();
    (0..n_units)
        .map(|_| {
            let delivered = channel.transmit(PayloadKind::Params, payload.clone(), 0);
            let received = NetworkParams::from_bytes(&delivered).stage("distribute")?;
            if received.to_bytes() != payload {
                return Err(sim_error("distribute", "parameter round-trip mismatch".into()));
            }
            AutoencoderModel::from_params(received).stage("distribute")
        })
        .collect()
}

/// Result of one local inference step.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalOutput {
    Verdict(Label),
    /// The message as received by the cloud.
    Message(CloudMessage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUnit {
    pub id: usize,
    pub model: AutoencoderModel,
    pub profile: LocalProfile,
}

impl LocalUnit {
    /// Message this unit would send for `x`, without transmitting it.
    pub fn message(&self, x: &[f64]) -> Result<CloudMessage, autoencoder::AutoencoderError> {
        let (code, err) = self.model.encode_with_error(x)?;
        Ok(CloudMessage {
            predicted_class: autoencoder::classify_local(err, self.profile.eta),
            recon_error: err as f32,
            code: code.iter().map(|c| *c as f32).collect(),
        })
    }

    /// Trusted mode sends the one-byte verdict; untrusted mode sends the
    /// full message. Both count the raw baseline of 4 bytes per feature.
    pub fn step(
        &self,
        x: &[f64],
        mode: TrustMode,
        channel: &Channel,
    ) -> Result<LocalOutput, autoencoder::AutoencoderError> {
        let raw = RAW_FEATURE_BYTES * x.len();
        match mode {
            TrustMode::Trusted => {
                let err = self.model.reconstruction_error(x)?;
                let verdict = autoencoder::classify_local(err, self.profile.eta);
                let delivered = channel.transmit(PayloadKind::Verdict, vec![verdict.as_bit()], raw);
                Ok(LocalOutput::Verdict(
                    Label::from_bit(delivered[0]).expect("verdict byte"),
                ))
            }
            TrustMode::Untrusted => {
                let msg = self.message(x)?;
                let delivered = channel.transmit(PayloadKind::Message, msg.encode(), raw);
                let received = CloudMessage::decode(&delivered, self.model.code_size)
                    .expect("payload built from this unit's own code size");
                Ok(LocalOutput::Message(received))
            }
        }
    }
}

pub fn local_unit_step(
    unit: &LocalUnit,
    x: &FlowRecord,
    mode: TrustMode,
    channel: &Channel,
) -> Result<LocalOutput, autoencoder::AutoencoderError> {
    unit.step(&x.features, mode, channel)
}

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("message code size {got} does not match the cloud models ({expected})")]
    CodeSize { expected: usize, got: usize },
    #[error(transparent)]
    Boost(#[from] adaboost::BoostError),
}

/// The three cloud ensembles, trained on `[code ++ error (++ class)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudModels {
    pub normal: BoostedEnsemble,
    pub regular: BoostedEnsemble,
    pub attack: BoostedEnsemble,
    pub code_size: usize,
    pub include_class_feature: bool,
}

/// Cloud feature vector for a message.
pub fn cloud_features(msg: &CloudMessage, include_class: bool) -> Vec<f64> {
    let mut f: Vec<f64> = msg.code.iter().map(|c| *c as f64).collect();
    f.push(msg.recon_error as f64);
    if include_class {
        f.push(msg.predicted_class.as_bit() as f64);
    }
    f
}

pub fn cloud_schema(h: usize, include_class: bool) -> Vec<String> {
    let mut s: Vec<String> = (0..h).map(|j| format!("code{j}")).collect();
    s.push("recon_error".into());
    if include_class {
        s.push("local_class".into());
    }
    s
}

impl CloudModels {
    pub fn get(&self, v: Variant) -> &BoostedEnsemble {
        match v {
            Variant::Normal => &self.normal,
            Variant::Regular => &self.regular,
            Variant::Attack => &self.attack,
        }
    }

    /// Routes by the message's error and the sender's profile (or forces one
    /// ensemble), then predicts.
    pub fn classify(
        &self,
        msg: &CloudMessage,
        profile: &LocalProfile,
        force: Option<Variant>,
    ) -> Result<(Label, RoutingDecision), CloudError> {
        if msg.code.len() != self.code_size {
            return Err(CloudError::CodeSize {
                expected: self.code_size,
                got: msg.code.len(),
            });
        }
        let target = match force {
            Some(v) => RoutingDecision::from_variant(v),
            None => route(msg.recon_error as f64, profile),
        };
        let x = cloud_features(msg, self.include_class_feature);
        let p = self.get(target.variant()).predict(&x)?;
        Ok((p.label, target))
    }
}

pub fn cloud_classify(
    msg: &CloudMessage,
    profile: &LocalProfile,
    models: &CloudModels,
) -> Result<Label, CloudError> {
    models.classify(msg, profile, None).map(|(l, _)| l)
}

/// Per-unit training and test splits after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitData {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub units: Vec<UnitData>,
    pub normalizer: NormalizationStats,
}

impl PreparedData {
    pub fn input_width(&self) -> usize {
        self.normalizer.mean.len()
    }
}

/// Loads or generates the dataset, partitions it among units and splits each
/// unit's share. No normalization yet.
pub fn prepare_splits(cfg: &ExperimentConfig) -> Result<Vec<UnitData>, SimError> {
    let master = cfg.run.seed;
    let full = match cfg.dataset.source {
        DatasetSource::Synthetic => {
            let s = &cfg.dataset.synthetic;
            dataset::generate_synthetic(
                s.n_normal,
                s.n_attack,
                s.features,
                derive_seed(master, Stage::Synthetic, 0),
            )
            .stage("dataset")?
        }
        DatasetSource::Csv => {
            let path = cfg
                .dataset
                .path
                .as_ref()
                .ok_or_else(|| sim_error("dataset", "dataset.path is not set".into()))?;
            let d = dataset::load_csv(path, &cfg.dataset.csv_schema()).stage("dataset")?;
            match cfg.dataset.subsample {
                Some(n) => dataset::stratified_subsample(&d, n, derive_seed(master, Stage::Subsample, 0))
                    .stage("dataset")?,
                None => d,
            }
        }
    };
    let parts = dataset::partition_local(&full, cfg.run.n_units, derive_seed(master, Stage::Partition, 0))
        .stage("partition")?;
    parts
        .iter()
        .enumerate()
        .map(|(u, part)| {
            let (train, test) =
                dataset::split_train_test(part, cfg.dataset.train_ratio, derive_seed(master, Stage::Split, u as u64))
                    .stage("split")?;
            Ok(UnitData { train, test })
        })
        .collect()
}

/// Applies `stats` to every split.
pub fn normalize_units(units: &[UnitData], stats: &NormalizationStats) -> Result<Vec<UnitData>, SimError> {
    units
        .iter()
        .map(|u| {
            Ok(UnitData {
                train: stats.apply(&u.train).stage("normalize")?,
                test: stats.apply(&u.test).stage("normalize")?,
            })
        })
        .collect()
}

/// Splits plus a normalizer fitted on the pooled training splits.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData, SimError> {
    let raw = prepare_splits(cfg)?;
    let pooled = Dataset::concat(raw.iter().map(|u| &u.train)).stage("normalize")?;
    let normalizer = NormalizationStats::fit(&pooled).stage("normalize")?;
    Ok(PreparedData {
        units: normalize_units(&raw, &normalizer)?,
        normalizer,
    })
}

/// Everything produced by training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub params: NetworkParams,
    pub units: Vec<LocalUnit>,
    pub cloud: CloudModels,
    pub normalizer: NormalizationStats,
    pub grid: Vec<GridPoint>,
    pub distribution_bytes: u64,
}

/// Cloud training features: the message each unit would send for each of
/// its training records, pooled over units, with true labels.
pub fn cloud_training_set(
    units: &[LocalUnit],
    data: &[UnitData],
    include_class: bool,
) -> Result<Dataset, SimError> {
    let h = units.first().map_or(0, |u| u.model.code_size);
    let mut records = Vec::new();
    for (unit, d) in units.iter().zip(data) {
        for r in &d.train.records {
            let msg = unit.message(&r.features).stage("cloud-features")?;
            let received = CloudMessage::decode(&msg.encode(), h).stage("cloud-features")?;
            records.push(FlowRecord {
                features: cloud_features(&received, include_class),
                label: r.label,
            });
        }
    }
    Dataset::new(cloud_schema(h, include_class), records).stage("cloud-features")
}

pub fn train_system(cfg: &ExperimentConfig, data: &PreparedData) -> Result<TrainedSystem, SimError> {
    let master = cfg.run.seed;
    let h = cfg.autoencoder.code_size;
    let train_cfg = cfg.train_config();
    let trains: Vec<Dataset> = data.units.iter().map(|u| u.train.clone()).collect();
    let params = cloud_train_autoencoder(
        &trains,
        h,
        &train_cfg,
        derive_seed(master, Stage::AutoencoderInit, 0),
    )?;

    let ledger = Arc::new(CostLedger::new());
    let channel = Channel::new().with_tap(ledger.clone());
    let models = distribute_params(&params, data.units.len(), &channel)?;

    let units = models
        .into_par_iter()
        .enumerate()
        .map(|(id, model)| {
            let profile = LocalProfile::derive(id, &model, &data.units[id].train).stage("local-profile")?;
            Ok(LocalUnit { id, model, profile })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let include_class = cfg.federation.include_class_feature;
    let pool = cloud_training_set(&units, &data.units, include_class)?;
    let (fit, valid) = dataset::split_train_test(
        &pool,
        1.0 - cfg.adaboost.validation_ratio,
        derive_seed(master, Stage::Validation, 0),
    )
    .stage("cloud-adaboost")?;
    let grid = adaboost::ClassWeights::grid(&cfg.adaboost.class_weight_values);
    let search = adaboost::grid_search_variants(&fit, &valid, &grid, &cfg.adaboost.boost_config(), cfg.adaboost.mcc_slack)
        .stage("cloud-adaboost")?;

    Ok(TrainedSystem {
        params,
        units,
        cloud: CloudModels {
            normal: search.normal,
            regular: search.regular,
            attack: search.attack,
            code_size: h,
            include_class_feature: include_class,
        },
        normalizer: data.normalizer.clone(),
        grid: search.points,
        distribution_bytes: ledger.totals().distribution_bytes,
    })
}

struct UnitOutcome {
    local: ConfusionMatrix,
    cloud: ConfusionMatrix,
    routed: RouteCounts,
}

/// Runs every test record through its unit and, in untrusted mode, through
/// the cloud. Units run concurrently and share one ledger.
pub fn evaluate_system(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    system: &TrainedSystem,
) -> Result<EvaluationReport, SimError> {
    evaluate_with_channel(cfg, data, system, Channel::new())
}

pub fn evaluate_with_channel(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    system: &TrainedSystem,
    channel: Channel,
) -> Result<EvaluationReport, SimError> {
    if data.units.len() != system.units.len() {
        return Err(sim_error(
            "evaluate",
            format!("{} data units vs {} trained units", data.units.len(), system.units.len()),
        ));
    }
    let mode = cfg.run.trust_mode;
    let force = cfg.run.ablation.variant();
    let ledger = Arc::new(CostLedger::new());
    let channel = channel.with_tap(ledger.clone());

    let outcomes = system
        .units
        .par_iter()
        .zip(data.units.par_iter())
        .map(|(unit, d)| -> Result<UnitOutcome, SimError> {
            let mut out = UnitOutcome {
                local: ConfusionMatrix::new(),
                cloud: ConfusionMatrix::new(),
                routed: RouteCounts::default(),
            };
            for r in &d.test.records {
                match unit.step(&r.features, mode, &channel).stage("evaluate")? {
                    LocalOutput::Verdict(v) => {
                        out.local.accumulate(r.label, v);
                        out.cloud.accumulate(r.label, v);
                    }
                    LocalOutput::Message(msg) => {
                        out.local.accumulate(r.label, msg.predicted_class);
                        let (label, target) = system
                            .cloud
                            .classify(&msg, &unit.profile, force)
                            .stage("cloud-classify")?;
                        out.cloud.accumulate(r.label, label);
                        out.routed.add(target);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut units = Vec::with_capacity(outcomes.len());
    let mut overall_local = ConfusionMatrix::new();
    let mut overall_cloud = ConfusionMatrix::new();
    let mut routed = RouteCounts::default();
    for ((unit, d), o) in system.units.iter().zip(&data.units).zip(&outcomes) {
        overall_local = overall_local + o.local;
        overall_cloud = overall_cloud + o.cloud;
        routed = routed.merge(&o.routed);
        units.push(UnitResult {
            unit_id: unit.id,
            n_train: d.train.len(),
            n_test: d.test.len(),
            n_test_attacks: d.test.count(Label::Attack),
            profile: unit.profile.clone(),
            local: MetricSummary::from(&o.local),
            cloud: MetricSummary::from(&o.cloud),
            routed: o.routed,
        });
    }
    let model = system
        .units
        .first()
        .map(|u| u.model.clone())
        .ok_or_else(|| sim_error("evaluate", "no units".into()))?;
    let (full, encoder) = model.storage_bytes();
    let mut ledger_totals = ledger.totals();
    ledger_totals.distribution_bytes = system.distribution_bytes;

    Ok(EvaluationReport {
        config: cfg.clone(),
        input_width: data.input_width(),
        code_size: system.cloud.code_size,
        message_bytes: message_len(system.cloud.code_size),
        raw_bytes_per_sample: RAW_FEATURE_BYTES * data.input_width(),
        trust_mode: mode,
        ablation: cfg.run.ablation,
        n_test: data.units.iter().map(|u| u.test.len()).sum(),
        units,
        overall_local: MetricSummary::from(&overall_local),
        overall_cloud: MetricSummary::from(&overall_cloud),
        routed,
        ledger: ledger_totals,
        variants: VariantSummary::from_models(&system.cloud),
        grid: system.grid.clone(),
        model_bytes: ModelBytes {
            full,
            encoder_only: encoder,
            parameters: model.params.parameter_count(),
        },
    })
}

/// Full pipeline: prepare, train, evaluate.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<EvaluationReport, SimError> {
    cfg.validate().stage("config")?;
    let data = prepare_data(cfg)?;
    let system = train_system(cfg, &data)?;
    evaluate_system(cfg, &data, &system)
}

/// Training-only convenience returning the data alongside the system.
pub fn train_from_config(cfg: &ExperimentConfig) -> Result<(PreparedData, TrainedSystem), SimError> {
    cfg.validate().stage("config")?;
    let data = prepare_data(cfg)?;
    let system = train_system(cfg, &data)?;
    Ok((data, system))
}

impl Ablation {
    pub fn variant(self) -> Option<Variant> {
        match self {
            Ablation::None => None,
            Ablation::Normal => Some(Variant::Normal),
            Ablation::Regular => Some(Variant::Regular),
            Ablation::Attack => Some(Variant::Attack),
        }
    }
}
