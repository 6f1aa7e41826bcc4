//! Class-weighted AdaBoost over depth-limited decision trees.
//!
//! Labels enter boosting as -1 (normal) / +1 (attack). Class weights only
//! affect how each weak learner is grown: a sample's effective weight in the
//! split criterion and in leaf assignment is `w_i * cw[y_i]`. The learner
//! error, vote weight and sample-weight update follow plain AdaBoost, with
//! the weights renormalized to sum 1 after every round.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Label};
use crate::metrics::ConfusionMatrix;

pub const EPSILON_MIN: f64 = 1e-10;
/// Split improvements smaller than this are treated as ties.
pub const SPLIT_TOLERANCE: f64 = 1e-12;
/// Probability clamp for the class-weighted log loss.
pub const PROB_CLAMP: f64 = 1e-12;

const ENSEMBLE_MAGIC: [u8; 4] = *b"TGAB";
const ENSEMBLE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum BoostError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("empty training set")]
    Empty,
    #[error("sample weights: expected {expected}, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weight underflow: all sample weights collapsed to zero")]
    WeightUnderflow,
    #[error("the first weak learner is no better than chance (error {0:.4})")]
    NoUsefulLearner(f64),
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty class-weight grid")]
    EmptyGrid,
    #[error("empty validation set")]
    EmptyValidation,
    #[error("class weights must be positive and finite")]
    BadClassWeights,
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("malformed ensemble payload: {0}")]
    Format(String),
}

/// Per-class multipliers `(cw_0, cw_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub normal: f64,
    pub attack: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights {
        normal: 1.0,
        attack: 1.0,
    };

    pub fn new(normal: f64, attack: f64) -> ClassWeights {
        ClassWeights { normal, attack }
    }

    pub fn of(&self, label: Label) -> f64 {
        match label {
            Label::Normal => self.normal,
            Label::Attack => self.attack,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.normal > 0.0 && self.attack > 0.0 && self.normal.is_finite() && self.attack.is_finite()
    }

    /// max(cw_0/cw_1, cw_1/cw_0)
    pub fn ratio(&self) -> f64 {
        (self.normal / self.attack).max(self.attack / self.normal)
    }

    /// Full Cartesian grid over `values`, ordered by (cw_0, cw_1).
    pub fn grid(values: &[f64]) -> Vec<ClassWeights> {
        values
            .iter()
            .flat_map(|&a| values.iter().map(move |&b| ClassWeights::new(a, b)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Normal,
    Regular,
    Attack,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Normal, Variant::Regular, Variant::Attack];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Normal => "normal",
            Variant::Regular => "regular",
            Variant::Attack => "attack",
        }
    }

    fn code(self) -> u8 {
        match self {
            Variant::Normal => 0,
            Variant::Regular => 1,
            Variant::Attack => 2,
        }
    }

    fn from_code(c: u8) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.code() == c)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Label),
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f32,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, x: &[f64]) -> Label {
        match self {
            Node::Leaf(label) => *label,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature as usize] <= *threshold as f64 {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn max_feature(&self) -> Option<u32> {
        match self {
            Node::Leaf(_) => None,
            Node::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        match self {
            Node::Leaf(label) => {
                out.push(0);
                out.push(label.to_pm1() as u8);
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push(1);
                out.extend_from_slice(&feature.to_le_bytes());
                out.extend_from_slice(&threshold.to_le_bytes());
                left.write(out);
                right.write(out);
            }
        }
    }

    fn read(r: &mut Reader<'_>, depth: usize) -> Result<Node, BoostError> {
        if depth > 64 {
            return Err(BoostError::Format("tree too deep".into()));
        }
        match r.u8()? {
            0 => match r.u8()? as i8 {
                -1 => Ok(Node::Leaf(Label::Normal)),
                1 => Ok(Node::Leaf(Label::Attack)),
                other => Err(BoostError::Format(format!("bad leaf label {other}"))),
            },
            1 => {
                let feature = r.u32()?;
                let threshold = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
                if !threshold.is_finite() {
                    return Err(BoostError::Format("non-finite threshold".into()));
                }
                let left = Box::new(Node::read(r, depth + 1)?);
                let right = Box::new(Node::read(r, depth + 1)?);
                Ok(Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                })
            }
            tag => Err(BoostError::Format(format!("bad node tag {tag}"))),
        }
    }
}

/// A depth-limited binary decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakLearner {
    pub root: Node,
}

impl WeakLearner {
    pub fn predict(&self, x: &[f64]) -> Label {
        self.root.predict(x)
    }

    /// Prediction as -1/+1.
    pub fn vote(&self, x: &[f64]) -> f64 {
        self.predict(x).to_pm1() as f64
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

/// Sample weights; positive and summing to 1 between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    pub fn uniform(n: usize) -> SampleWeights {
        SampleWeights(vec![1.0 / n as f64; n])
    }

    /// Normalizes `raw` to sum 1.
    pub fn from_raw(raw: Vec<f64>) -> Result<SampleWeights, BoostError> {
        let mut w = SampleWeights(raw);
        w.normalize()?;
        Ok(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    fn normalize(&mut self) -> Result<(), BoostError> {
        let total: f64 = self.0.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(BoostError::WeightUnderflow);
        }
        for w in &mut self.0 {
            *w /= total;
            // individual underflow: keep every weight strictly positive
            if *w == 0.0 {
                *w = f64::MIN_POSITIVE;
            }
        }
        Ok(())
    }
}

/// Sample indices ordered by each feature (ties by index). Computed once per
/// training set and reused by every round and grid point.
#[derive(Debug, Clone)]
pub struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(train: &Dataset) -> SortedColumns {
        let n = train.len();
        let order = (0..train.width())
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    train.records[a as usize].features[f]
                        .total_cmp(&train.records[b as usize].features[f])
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        SortedColumns { order }
    }
}

/// Largest f32 not above `v`.
fn f32_at_or_below(v: f64) -> f32 {
    let t = v as f32;
    if (t as f64) > v {
        t.next_down()
    } else {
        t
    }
}

/// Split threshold between adjacent distinct values `lo < hi`: the midpoint
/// rounded down onto the f32 grid, or `None` when f32 cannot separate them.
pub fn split_threshold(lo: f64, hi: f64) -> Option<f32> {
    let t = f32_at_or_below(0.5 * (lo + hi));
    let tv = t as f64;
    (tv >= lo && tv < hi).then_some(t)
}

/// Heavier class; ties go to attack.
fn heavier(normal: f64, attack: f64) -> Label {
    if normal > attack {
        Label::Normal
    } else {
        Label::Attack
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    error: f64,
    feature: u32,
    threshold: f32,
}

enum Pending {
    Open,
    Leaf(Label),
    Split {
        feature: u32,
        threshold: f32,
        left: usize,
        right: usize,
    },
}

const SETTLED: u32 = u32::MAX;

/// Grows a tree level by level. Every split minimizes the effective-weight
/// misclassification `Σ_children min(W_normal, W_attack)`; candidate
/// thresholds sit between adjacent distinct values; ties keep the lowest
/// feature index, then the lowest threshold. A node becomes a leaf when it is
/// pure, at max depth, or when no split beats it by more than
/// [`SPLIT_TOLERANCE`].
pub fn fit_weak_sorted(
    train: &Dataset,
    columns: &SortedColumns,
    w: &SampleWeights,
    cw: ClassWeights,
    max_depth: usize,
) -> Result<WeakLearner, BoostError> {
    let n = train.len();
    if n == 0 {
        return Err(BoostError::Empty);
    }
    if w.len() != n {
        return Err(BoostError::WeightCount {
            expected: n,
            got: w.len(),
        });
    }
    if !cw.is_valid() {
        return Err(BoostError::BadClassWeights);
    }
    let eff: Vec<f64> = train
        .records
        .iter()
        .zip(w.as_slice())
        .map(|(r, wi)| wi * cw.of(r.label))
        .collect();
    let is_attack: Vec<bool> = train.records.iter().map(|r| r.label == Label::Attack).collect();

    let mut arena = vec![Pending::Open];
    // node_of[i]: arena index of the open node holding sample i
    let mut node_of = vec![0u32; n];

    for depth in 0..=max_depth {
        let open: Vec<usize> = (0..arena.len())
            .filter(|&i| matches!(arena[i], Pending::Open))
            .collect();
        if open.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; arena.len()];
        for (s, &a) in open.iter().enumerate() {
            slot[a] = s;
        }
        let mut totals = vec![(0.0f64, 0.0f64); open.len()];
        for i in 0..n {
            let node = node_of[i];
            if node == SETTLED {
                continue;
            }
            let t = &mut totals[slot[node as usize]];
            if is_attack[i] {
                t.1 += eff[i];
            } else {
                t.0 += eff[i];
            }
        }

        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        if depth < max_depth {
            let node_err: Vec<f64> = totals.iter().map(|(a, b)| a.min(*b)).collect();
            let mut left = vec![(0.0f64, 0.0f64); open.len()];
            let mut last: Vec<Option<f64>> = vec![None; open.len()];
            for (f, order) in columns.order.iter().enumerate() {
                left.iter_mut().for_each(|l| *l = (0.0, 0.0));
                last.iter_mut().for_each(|l| *l = None);
                for &i in order {
                    let i = i as usize;
                    let node = node_of[i];
                    if node == SETTLED {
                        continue;
                    }
                    let s = slot[node as usize];
                    let v = train.records[i].features[f];
                    if let Some(prev) = last[s] {
                        if v > prev && node_err[s] > 0.0 {
                            if let Some(threshold) = split_threshold(prev, v) {
                                let (ln, la) = left[s];
                                let (tn, ta) = totals[s];
                                let err = ln.min(la) + (tn - ln).min(ta - la);
                                let bar = best[s].map_or(node_err[s], |c| c.error);
                                if err < bar - SPLIT_TOLERANCE {
                                    best[s] = Some(Candidate {
                                        error: err,
                                        feature: f as u32,
                                        threshold,
                                    });
                                }
                            }
                        }
                    }
                    if is_attack[i] {
                        left[s].1 += eff[i];
                    } else {
                        left[s].0 += eff[i];
                    }
                    last[s] = Some(v);
                }
            }
        }

        for (s, &a) in open.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let l = arena.len();
                    arena.push(Pending::Open);
                    arena.push(Pending::Open);
                    arena[a] = Pending::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l,
                        right: l + 1,
                    };
                }
                None => arena[a] = Pending::Leaf(heavier(totals[s].0, totals[s].1)),
            }
        }
        for i in 0..n {
            let node = node_of[i];
            if node == SETTLED {
                continue;
            }
            node_of[i] = match arena[node as usize] {
                Pending::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if train.records[i].features[feature as usize] <= threshold as f64 {
                        left as u32
                    } else {
                        right as u32
                    }
                }
                _ => SETTLED,
            };
        }
    }

    fn assemble(arena: &[Pending], i: usize) -> Node {
        match &arena[i] {
            Pending::Leaf(label) => Node::Leaf(*label),
            Pending::Split {
                feature,
                threshold,
                left,
                right,
            } => Node::Split {
                feature: *feature,
                threshold: *threshold,
                left: Box::new(assemble(arena, *left)),
                right: Box::new(assemble(arena, *right)),
            },
            Pending::Open => unreachable!("every open node is resolved at max depth"),
        }
    }
    Ok(WeakLearner {
        root: assemble(&arena, 0),
    })
}

pub fn fit_weak(
    train: &Dataset,
    w: &SampleWeights,
    cw: ClassWeights,
    max_depth: usize,
) -> Result<WeakLearner, BoostError> {
    fit_weak_sorted(train, &SortedColumns::new(train), w, cw, max_depth)
}

/// Weight of misclassified samples over total weight.
pub fn weighted_error(learner: &WeakLearner, train: &Dataset, w: &SampleWeights) -> f64 {
    let mut wrong = 0.0;
    let mut total = 0.0;
    for (r, wi) in train.records.iter().zip(w.as_slice()) {
        total += wi;
        if learner.predict(&r.features) != r.label {
            wrong += wi;
        }
    }
    if total > 0.0 {
        (wrong / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Vote weight ½·ln((1−ε)/ε), with ε clamped to [ε_min, 1−ε_min].
pub fn alpha(epsilon: f64) -> f64 {
    let e = epsilon.clamp(EPSILON_MIN, 1.0 - EPSILON_MIN);
    0.5 * ((1.0 - e) / e).ln()
}

/// `w_i ← w_i · exp(−y_i·l(x_i)·α)`, then renormalized.
pub fn update_weights(
    w: &SampleWeights,
    learner: &WeakLearner,
    alpha: f64,
    train: &Dataset,
) -> Result<SampleWeights, BoostError> {
    if w.len() != train.len() {
        return Err(BoostError::WeightCount {
            expected: train.len(),
            got: w.len(),
        });
    }
    let raw = train
        .records
        .iter()
        .zip(w.as_slice())
        .map(|(r, wi)| {
            let y = r.label.to_pm1() as f64;
            let h = learner.vote(&r.features);
            wi * (-y * h * alpha).exp()
        })
        .collect();
    SampleWeights::from_raw(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    pub rounds: usize,
    pub max_depth: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 100,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub learner: WeakLearner,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedEnsemble {
    pub rounds: Vec<Round>,
    pub class_weights: ClassWeights,
    pub variant: Variant,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub margin: f64,
}

impl BoostedEnsemble {
    /// `margin = Σ α_t·l_t(x)`; margin ≥ 0 is an attack.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, BoostError> {
        if x.len() != self.n_features {
            return Err(BoostError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let margin: f64 = self.rounds.iter().map(|r| r.alpha * r.learner.vote(x)).sum();
        let label = if margin >= 0.0 {
            Label::Attack
        } else {
            Label::Normal
        };
        Ok(Prediction { label, margin })
    }

    pub fn with_variant(mut self, variant: Variant) -> BoostedEnsemble {
        self.variant = variant;
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&ENSEMBLE_MAGIC);
        out.extend_from_slice(&ENSEMBLE_VERSION.to_le_bytes());
        out.push(self.variant.code());
        out.extend_from_slice(&self.class_weights.normal.to_le_bytes());
        out.extend_from_slice(&self.class_weights.attack.to_le_bytes());
        out.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        out.extend_from_slice(&(self.rounds.len() as u32).to_le_bytes());
        for r in &self.rounds {
            out.extend_from_slice(&r.alpha.to_le_bytes());
            r.learner.root.write(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<BoostedEnsemble, BoostError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != ENSEMBLE_MAGIC {
            return Err(BoostError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != ENSEMBLE_VERSION {
            return Err(BoostError::Format(format!("unsupported version {version}")));
        }
        let variant = Variant::from_code(r.u8()?)
            .ok_or_else(|| BoostError::Format("bad variant".into()))?;
        let class_weights = ClassWeights::new(r.f64()?, r.f64()?);
        if !class_weights.is_valid() {
            return Err(BoostError::Format("bad class weights".into()));
        }
        let n_features = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut rounds = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let alpha = r.f64()?;
            if !alpha.is_finite() {
                return Err(BoostError::Format("non-finite alpha".into()));
            }
            let root = Node::read(&mut r, 0)?;
            if root.max_feature().is_some_and(|f| f as usize >= n_features) {
                return Err(BoostError::Format("feature index out of range".into()));
            }
            rounds.push(Round {
                learner: WeakLearner { root },
                alpha,
            });
        }
        if r.pos != bytes.len() {
            return Err(BoostError::Format("trailing bytes".into()));
        }
        Ok(BoostedEnsemble {
            rounds,
            class_weights,
            variant,
            n_features,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BoostError> {
        if self.pos + n > self.bytes.len() {
            return Err(BoostError::Format("truncated payload".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, BoostError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, BoostError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, BoostError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn check_both_classes(train: &Dataset) -> Result<(), BoostError> {
    if train.is_empty() {
        return Err(BoostError::Empty);
    }
    let attacks = train.count(Label::Attack);
    if attacks == 0 || attacks == train.len() {
        return Err(BoostError::SingleClass);
    }
    Ok(())
}

/// Per-round diagnostics from [`boost_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub epsilon: f64,
    pub weights_after: SampleWeights,
}

pub fn boost(
    train: &Dataset,
    cfg: &BoostConfig,
    cw: ClassWeights,
) -> Result<BoostedEnsemble, BoostError> {
    boost_sorted(train, &SortedColumns::new(train), cfg, cw).map(|(e, _)| e)
}

pub fn boost_traced(
    train: &Dataset,
    cfg: &BoostConfig,
    cw: ClassWeights,
) -> Result<(BoostedEnsemble, Vec<RoundTrace>), BoostError> {
    boost_sorted(train, &SortedColumns::new(train), cfg, cw)
}

/// Sequential boosting from uniform weights. Stops after `cfg.rounds`
/// learners, when a learner is no better than chance (ε ≥ 0.5, discarded),
/// or when a learner is perfect (ε ≤ ε_min, kept).
pub fn boost_sorted(
    train: &Dataset,
    columns: &SortedColumns,
    cfg: &BoostConfig,
    cw: ClassWeights,
) -> Result<(BoostedEnsemble, Vec<RoundTrace>), BoostError> {
    check_both_classes(train)?;
    if cfg.rounds == 0 {
        return Err(BoostError::NoRounds);
    }
    if !cw.is_valid() {
        return Err(BoostError::BadClassWeights);
    }
    let mut w = SampleWeights::uniform(train.len());
    let mut rounds = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..cfg.rounds {
        let learner = fit_weak_sorted(train, columns, &w, cw, cfg.max_depth)?;
        let eps = weighted_error(&learner, train, &w);
        if eps >= 0.5 {
            if rounds.is_empty() {
                return Err(BoostError::NoUsefulLearner(eps));
            }
            break;
        }
        let a = alpha(eps);
        if eps <= EPSILON_MIN {
            rounds.push(Round { learner, alpha: a });
            break;
        }
        w = update_weights(&w, &learner, a, train)?;
        trace.push(RoundTrace {
            epsilon: eps,
            weights_after: w.clone(),
        });
        rounds.push(Round { learner, alpha: a });
    }
    Ok((
        BoostedEnsemble {
            rounds,
            class_weights: cw,
            variant: Variant::Regular,
            n_features: train.width(),
        },
        trace,
    ))
}

/// Attack probability from a boosting margin: σ(2·margin).
pub fn margin_probability(margin: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * margin).exp())
}

/// `(1/N)·Σ [cw_0·y·log p + cw_1·(1−y)·log(1−p)]` with y ∈ {0,1} and p the
/// attack probability clamped to [1e-12, 1−1e-12]. The value is ≤ 0; model
/// selection minimizes its negation.
pub fn class_weighted_loss(
    probabilities: &[f64],
    labels: &[Label],
    cw: ClassWeights,
) -> Result<f64, BoostError> {
    if probabilities.len() != labels.len() {
        return Err(BoostError::LengthMismatch(probabilities.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(BoostError::EmptyValidation);
    }
    let sum: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let y = l.as_bit() as f64;
            cw.normal * (y * p.ln()) + cw.attack * ((1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / labels.len() as f64)
}

/// Validation scores of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub class_weights: ClassWeights,
    /// Negated class-weighted loss with unit weights (lower is better);
    /// `None` when the point could not be fitted.
    pub selection_loss: Option<f64>,
    pub mcc: Option<f64>,
    pub recall_normal: Option<f64>,
    pub recall_attack: Option<f64>,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub normal: BoostedEnsemble,
    pub regular: BoostedEnsemble,
    pub attack: BoostedEnsemble,
    pub points: Vec<GridPoint>,
}

impl GridSearchResult {
    pub fn get(&self, v: Variant) -> &BoostedEnsemble {
        match v {
            Variant::Normal => &self.normal,
            Variant::Regular => &self.regular,
            Variant::Attack => &self.attack,
        }
    }
}

struct Scored {
    ensemble: BoostedEnsemble,
    loss: f64,
    cm: ConfusionMatrix,
}

fn score(ensemble: BoostedEnsemble, valid: &Dataset) -> Result<Scored, BoostError> {
    let mut cm = ConfusionMatrix::new();
    let mut probs = Vec::with_capacity(valid.len());
    let mut labels = Vec::with_capacity(valid.len());
    for r in &valid.records {
        let p = ensemble.predict(&r.features)?;
        cm.accumulate(r.label, p.label);
        probs.push(margin_probability(p.margin));
        labels.push(r.label);
    }
    let loss = -class_weighted_loss(&probs, &labels, ClassWeights::UNIFORM)?;
    Ok(Scored { ensemble, loss, cm })
}

/// Trains one ensemble per grid point (in parallel) and picks the variants
/// on `valid`:
/// * Regular: among points with cw_0 = cw_1 (plus (1, 1)), lowest negated
///   unit-weight loss.
/// * Normal: highest normal-class recall among points whose MCC is at least
///   MCC(Regular) − `mcc_slack`; ties by higher MCC, then smaller weight ratio.
/// * Attack: the same for attack-class recall.
///
/// Points whose first learner is no better than chance are skipped.
pub fn grid_search_variants(
    train: &Dataset,
    valid: &Dataset,
    grid: &[ClassWeights],
    cfg: &BoostConfig,
    mcc_slack: f64,
) -> Result<GridSearchResult, BoostError> {
    if grid.is_empty() {
        return Err(BoostError::EmptyGrid);
    }
    if valid.is_empty() {
        return Err(BoostError::EmptyValidation);
    }
    if grid.iter().any(|cw| !cw.is_valid()) {
        return Err(BoostError::BadClassWeights);
    }
    check_both_classes(train)?;
    let mut points: Vec<ClassWeights> = grid.to_vec();
    if !points.contains(&ClassWeights::UNIFORM) {
        points.push(ClassWeights::UNIFORM);
    }
    let columns = SortedColumns::new(train);
    let fitted: Vec<Result<Option<Scored>, BoostError>> = points
        .par_iter()
        .map(|&cw| match boost_sorted(train, &columns, cfg, cw) {
            Ok((e, _)) => score(e, valid).map(Some),
            Err(BoostError::NoUsefulLearner(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let fitted = fitted.into_iter().collect::<Result<Vec<_>, _>>()?;

    let regular_idx = points
        .iter()
        .enumerate()
        .filter(|(i, cw)| cw.normal == cw.attack && fitted[*i].is_some())
        .min_by(|(i, _), (j, _)| {
            let a = fitted[*i].as_ref().unwrap().loss;
            let b = fitted[*j].as_ref().unwrap().loss;
            a.total_cmp(&b).then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .ok_or(BoostError::NoUsefulLearner(0.5))?;
    let regular_mcc = fitted[regular_idx].as_ref().unwrap().cm.mcc();

    let pick = |recall: fn(&ConfusionMatrix) -> f64| -> usize {
        let mut best = regular_idx;
        for (i, s) in fitted.iter().enumerate() {
            let Some(s) = s else { continue };
            if s.cm.mcc() < regular_mcc - mcc_slack {
                continue;
            }
            let b = fitted[best].as_ref().unwrap();
            let better = recall(&s.cm)
                .total_cmp(&recall(&b.cm))
                .then(s.cm.mcc().total_cmp(&b.cm.mcc()))
                .then(points[best].ratio().total_cmp(&points[i].ratio()))
                .is_gt();
            if better {
                best = i;
            }
        }
        best
    };
    let normal_idx = pick(ConfusionMatrix::recall_normal);
    let attack_idx = pick(ConfusionMatrix::recall_attack);

    let report = points
        .iter()
        .zip(&fitted)
        .map(|(cw, s)| GridPoint {
            class_weights: *cw,
            selection_loss: s.as_ref().map(|s| s.loss),
            mcc: s.as_ref().map(|s| s.cm.mcc()),
            recall_normal: s.as_ref().map(|s| s.cm.recall_normal()),
            recall_attack: s.as_ref().map(|s| s.cm.recall_attack()),
            rounds: s.as_ref().map_or(0, |s| s.ensemble.rounds.len()),
        })
        .collect();
    let take = |i: usize, v: Variant| fitted[i].as_ref().unwrap().ensemble.clone().with_variant(v);
    Ok(GridSearchResult {
        normal: take(normal_idx, Variant::Normal),
        regular: take(regular_idx, Variant::Regular),
        attack: take(attack_idx, Variant::Attack),
        points: report,
    })
}
