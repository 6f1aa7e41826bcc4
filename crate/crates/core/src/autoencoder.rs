//! Local-unit model: a symmetric autoencoder trained on normal flows, its
//! reconstruction-error threshold, and the error range that routes samples
//! to the neutral cloud model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Label};
use crate::neuralnet::{self, NetError, NetworkParams, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum AutoencoderError {
    #[error("code size {code} must satisfy 2 <= code < input width {input}")]
    BadCodeSize { input: usize, code: usize },
    #[error("training set contains attack records; the autoencoder learns normal traffic only")]
    AttackInTraining,
    #[error("threshold selection needs both classes in the labeled set")]
    SingleClass,
    #[error("parameters do not form a symmetric autoencoder: {0}")]
    NotAutoencoder(String),
    #[error("empty error list")]
    NoErrors,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Number of encoder steps between the input and the bottleneck.
pub const ENCODER_STEPS: usize = 3;

/// Layer widths interpolated linearly (rounded) from `k` down to `h` over
/// three encoder steps, mirrored for the decoder.
pub fn layer_widths(k: usize, h: usize) -> Result<Vec<usize>, AutoencoderError> {
    if h < 2 || h >= k {
        return Err(AutoencoderError::BadCodeSize { input: k, code: h });
    }
    let encoder: Vec<usize> = (0..=ENCODER_STEPS)
        .map(|i| {
            let t = i as f64 / ENCODER_STEPS as f64;
            (k as f64 - (k - h) as f64 * t).round() as usize
        })
        .collect();
    let mut widths = encoder.clone();
    widths.extend(encoder.iter().rev().skip(1));
    Ok(widths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub params: NetworkParams,
    pub code_size: usize,
    /// Position of the bottleneck in the layer-width sequence (input is 0).
    pub code_layer_index: usize,
}

pub fn build_autoencoder(k: usize, h: usize, seed: u64) -> Result<AutoencoderModel, AutoencoderError> {
    let widths = layer_widths(k, h)?;
    let params = NetworkParams::init(&widths, seed)?;
    Ok(AutoencoderModel {
        params,
        code_size: h,
        code_layer_index: ENCODER_STEPS,
    })
}

impl AutoencoderModel {
    /// Wraps received parameters, checking the symmetric shape.
    pub fn from_params(params: NetworkParams) -> Result<AutoencoderModel, AutoencoderError> {
        let widths = params.layer_sizes();
        if widths.len() < 3 || widths.len().is_multiple_of(2) {
            return Err(AutoencoderError::NotAutoencoder(format!("widths {widths:?}")));
        }
        let mid = widths.len() / 2;
        let symmetric = widths.iter().eq(widths.iter().rev());
        if !symmetric || widths[mid] >= widths[0] {
            return Err(AutoencoderError::NotAutoencoder(format!("widths {widths:?}")));
        }
        Ok(AutoencoderModel {
            code_size: widths[mid],
            code_layer_index: mid,
            params,
        })
    }

    pub fn input_width(&self) -> usize {
        self.params.input_width()
    }

    /// Bottleneck activations.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        Ok(self.params.forward_prefix(x, self.code_layer_index)?)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        Ok(self.params.infer(x)?)
    }

    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64, AutoencoderError> {
        let out = self.params.infer(x)?;
        Ok(neuralnet::mse(x, &out)?)
    }

    /// Code and reconstruction error from one inference pass.
    pub fn encode_with_error(&self, x: &[f64]) -> Result<(Vec<f64>, f64), AutoencoderError> {
        let acts = self.params.forward(x, None)?;
        let code = acts.layers[self.code_layer_index - 1].output.clone();
        let err = neuralnet::mse(x, acts.output())?;
        Ok((code, err))
    }

    pub fn errors(&self, d: &Dataset) -> Result<Vec<f64>, AutoencoderError> {
        d.records
            .iter()
            .map(|r| self.reconstruction_error(&r.features))
            .collect()
    }

    /// Bytes of the serialized full model and of its encoder half alone.
    pub fn storage_bytes(&self) -> (usize, usize) {
        let full = self.params.encoded_len();
        let encoder = NetworkParams {
            layers: self.params.layers[..self.code_layer_index].to_vec(),
        };
        (full, encoder.encoded_len())
    }
}

/// Trains the model to reconstruct normal records.
pub fn train(
    model: AutoencoderModel,
    normals: &Dataset,
    cfg: &TrainConfig,
) -> Result<AutoencoderModel, AutoencoderError> {
    Ok(train_with_history(model, normals, cfg)?.0)
}

pub fn train_with_history(
    model: AutoencoderModel,
    normals: &Dataset,
    cfg: &TrainConfig,
) -> Result<(AutoencoderModel, Vec<f64>), AutoencoderError> {
    if normals.records.iter().any(|r| r.label == Label::Attack) {
        return Err(AutoencoderError::AttackInTraining);
    }
    let inputs: Vec<Vec<f64>> = normals.records.iter().map(|r| r.features.clone()).collect();
    let outcome = neuralnet::fit(model.params, &inputs, &inputs, cfg)?;
    Ok((
        AutoencoderModel {
            params: outcome.params,
            ..model
        },
        outcome.loss_history,
    ))
}

/// Error at or above `eta` is an attack.
pub fn classify_local(error: f64, eta: f64) -> Label {
    if error < eta {
        Label::Normal
    } else {
        Label::Attack
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub eta: f64,
    /// Training accuracy at `eta`.
    pub accuracy: f64,
}

/// Picks the threshold with the best accuracy among midpoints of adjacent
/// distinct errors; ties go to the smaller threshold. With a single distinct
/// error value there is no midpoint and that value itself is returned.
pub fn select_threshold_from_errors(
    errors: &[f64],
    labels: &[Label],
) -> Result<ThresholdChoice, AutoencoderError> {
    if errors.len() != labels.len() || errors.is_empty() {
        return Err(AutoencoderError::NoErrors);
    }
    let attacks_total = labels.iter().filter(|l| **l == Label::Attack).count();
    if attacks_total == 0 || attacks_total == labels.len() {
        return Err(AutoencoderError::SingleClass);
    }
    let mut pairs: Vec<(f64, Label)> = errors.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();

    // Sweep: everything strictly below the candidate is called normal.
    let mut best: Option<(usize, f64)> = None;
    let mut normals_below = 0usize;
    let mut attacks_below = 0usize;
    let mut i = 0;
    while i < n {
        let v = pairs[i].0;
        while i < n && pairs[i].0 == v {
            match pairs[i].1 {
                Label::Normal => normals_below += 1,
                Label::Attack => attacks_below += 1,
            }
            i += 1;
        }
        if i == n {
            break;
        }
        let eta = 0.5 * (v + pairs[i].0);
        let correct = normals_below + (attacks_total - attacks_below);
        if best.is_none_or(|(c, _)| correct > c) {
            best = Some((correct, eta));
        }
    }
    let (correct, eta) = match best {
        Some(b) => b,
        None => (attacks_total, pairs[0].0),
    };
    Ok(ThresholdChoice {
        eta,
        accuracy: correct as f64 / n as f64,
    })
}

/// Threshold chosen on the model's errors over a labeled training set.
pub fn select_threshold(
    model: &AutoencoderModel,
    labeled_train: &Dataset,
) -> Result<ThresholdChoice, AutoencoderError> {
    let errors = model.errors(labeled_train)?;
    let labels: Vec<Label> = labeled_train.records.iter().map(|r| r.label).collect();
    select_threshold_from_errors(&errors, &labels)
}

/// Reconstruction errors in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedErrors(Vec<f64>);

impl SortedErrors {
    pub fn new(mut values: Vec<f64>) -> Result<SortedErrors, AutoencoderError> {
        if values.is_empty() {
            return Err(AutoencoderError::NoErrors);
        }
        values.sort_by(f64::total_cmp);
        Ok(SortedErrors(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the value closest to `target`; ties go to the lower index.
    pub fn closest_index(&self, target: f64) -> usize {
        let v = &self.0;
        let upper = v.partition_point(|e| *e < target);
        if upper == 0 {
            return 0;
        }
        if upper == v.len() {
            return v.len() - 1;
        }
        // first occurrence of the lower neighbour's value
        let lower_val = v[upper - 1];
        let lower = v.partition_point(|e| *e < lower_val);
        if target - lower_val <= v[upper] - target {
            lower
        } else {
            upper
        }
    }
}

/// Regular-model error interval for one unit:
/// `r = 1 - trust`, `k = ⌊r·n/2⌋`, `idx` the error closest to `eta`,
/// `lo = eta - Err[idx - k]`, `hi = eta + Err[idx + k]`. Indices clamp to
/// the array and `lo` clamps at 0.
pub fn compute_local_range(errs: &SortedErrors, eta: f64, trust: f64, n: usize) -> (f64, f64) {
    let r = (1.0 - trust).clamp(0.0, 1.0);
    // small slack absorbs representation error, e.g. (1 - 0.6) * 5 / 2
    let k = (r * n as f64 / 2.0 + 1e-9).floor() as usize;
    let idx = errs.closest_index(eta);
    let last = errs.len() - 1;
    let below = idx.saturating_sub(k);
    let above = (idx + k).min(last);
    let lo = (eta - errs.0[below]).max(0.0);
    let hi = eta + errs.0[above];
    (lo, hi)
}

/// Per-unit decision state reported alongside the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalProfile {
    pub unit_id: usize,
    pub eta: f64,
    pub trust: f64,
    pub range_lo: f64,
    pub range_hi: f64,
    pub n_train: usize,
}

impl LocalProfile {
    /// Threshold, trust and local range from the unit's labeled training split.
    pub fn derive(
        unit_id: usize,
        model: &AutoencoderModel,
        labeled_train: &Dataset,
    ) -> Result<LocalProfile, AutoencoderError> {
        let errors = model.errors(labeled_train)?;
        Self::from_errors(unit_id, &errors, labeled_train)
    }

    pub fn from_errors(
        unit_id: usize,
        errors: &[f64],
        labeled_train: &Dataset,
    ) -> Result<LocalProfile, AutoencoderError> {
        let labels: Vec<Label> = labeled_train.records.iter().map(|r| r.label).collect();
        let choice = select_threshold_from_errors(errors, &labels)?;
        let sorted = SortedErrors::new(errors.to_vec())?;
        let n = sorted.len();
        let (range_lo, range_hi) = compute_local_range(&sorted, choice.eta, choice.accuracy, n);
        Ok(LocalProfile {
            unit_id,
            eta: choice.eta,
            trust: choice.accuracy,
            range_lo,
            range_hi,
            n_train: n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, FlowRecord};
    use crate::neuralnet::Layer;

    #[test]
    fn widths_follow_linear_interpolation() {
        assert_eq!(layer_widths(40, 25).unwrap(), vec![40, 35, 30, 25, 30, 35, 40]);
        assert_eq!(layer_widths(40, 10).unwrap(), vec![40, 30, 20, 10, 20, 30, 40]);
        assert_eq!(
            layer_widths(4, 4),
            Err(AutoencoderError::BadCodeSize { input: 4, code: 4 })
        );
        assert!(layer_widths(40, 1).is_err());
    }

    #[test]
    fn build_has_code_layer_in_the_middle() {
        let m = build_autoencoder(40, 25, 1).unwrap();
        assert_eq!(m.code_layer_index, 3);
        assert_eq!(m.encode(&[0.1; 40]).unwrap().len(), 25);
        assert_eq!(m.params.parameter_count(), 6595);
        let (full, enc) = m.storage_bytes();
        assert_eq!(full, 12 + 6 * 8 + 4 * 6595);
        assert!(enc < full);
    }

    #[test]
    fn zero_network_encodes_to_zero() {
        let mut m = build_autoencoder(6, 2, 1).unwrap();
        m.params = m.params.zeros_like();
        assert_eq!(m.encode(&[1.0; 6]).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn hand_computed_encode_and_error() {
        // 3-2-3 network; code is tanh of the first layer
        let params = NetworkParams {
            layers: vec![
                Layer {
                    inputs: 3,
                    outputs: 2,
                    weights: vec![0.5, 0.0, -0.5, 0.25, 0.25, 0.25],
                    bias: vec![0.0, 0.1],
                },
                Layer {
                    inputs: 2,
                    outputs: 3,
                    weights: vec![1.0, 0.0, 0.0, 1.0, 1.0, -1.0],
                    bias: vec![0.0, 0.0, 0.5],
                },
            ],
        };
        let m = AutoencoderModel::from_params(params).unwrap();
        let x = [1.0, 2.0, -1.0];
        let c0 = (0.5 * 1.0 - 0.5 * -1.0f64).tanh();
        let c1 = (0.25 * (1.0 + 2.0 - 1.0) + 0.1f64).tanh();
        assert_eq!(m.encode(&x).unwrap(), vec![c0, c1]);
        let out = [c0, c1, c0 - c1 + 0.5];
        let expected = x
            .iter()
            .zip(out)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 3.0;
        assert!((m.reconstruction_error(&x).unwrap() - expected).abs() < 1e-9);
        let (code, err) = m.encode_with_error(&x).unwrap();
        assert_eq!(code, vec![c0, c1]);
        assert_eq!(err, m.reconstruction_error(&x).unwrap());
    }

    #[test]
    fn perfect_reconstruction_has_zero_error() {
        let mut m = build_autoencoder(5, 2, 1).unwrap();
        m.params = m.params.zeros_like();
        assert_eq!(m.reconstruction_error(&[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn classify_boundary_goes_to_attack() {
        assert_eq!(classify_local(0.1, 0.43), Label::Normal);
        assert_eq!(classify_local(0.43, 0.43), Label::Attack);
        assert_eq!(classify_local(1.5, 0.43), Label::Attack);
    }

    #[test]
    fn threshold_on_separable_errors() {
        use Label::{Attack, Normal};
        let c = select_threshold_from_errors(
            &[0.1, 0.2, 0.9, 1.0],
            &[Normal, Normal, Attack, Attack],
        )
        .unwrap();
        assert!((c.eta - 0.55).abs() < 1e-15);
        assert_eq!(c.accuracy, 1.0);
    }

    #[test]
    fn threshold_on_interleaved_errors() {
        use Label::{Attack, Normal};
        let c = select_threshold_from_errors(
            &[0.1, 0.1, 0.2, 0.2],
            &[Normal, Attack, Normal, Attack],
        )
        .unwrap();
        assert!((c.eta - 0.15).abs() < 1e-15);
        assert_eq!(c.accuracy, 0.5);
    }

    #[test]
    fn threshold_needs_both_classes() {
        assert_eq!(
            select_threshold_from_errors(&[0.1, 0.2], &[Label::Normal, Label::Normal]),
            Err(AutoencoderError::SingleClass)
        );
    }

    #[test]
    fn closest_index_ties_go_low() {
        let e = SortedErrors::new(vec![0.1, 0.2, 0.2, 0.4]).unwrap();
        assert_eq!(e.closest_index(0.3), 1);
        assert_eq!(e.closest_index(0.0), 0);
        assert_eq!(e.closest_index(9.0), 3);
        assert_eq!(e.closest_index(0.2), 1);
        assert_eq!(e.closest_index(0.35), 3);
    }

    #[test]
    fn local_range_hand_case() {
        let e = SortedErrors::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let (lo, hi) = compute_local_range(&e, 0.3, 0.6, 5);
        assert!((lo - 0.1).abs() < 1e-12);
        assert!((hi - 0.7).abs() < 1e-12);
    }

    #[test]
    fn local_range_full_trust() {
        let e = SortedErrors::new(vec![0.05, 0.2, 0.41, 0.6]).unwrap();
        let (lo, hi) = compute_local_range(&e, 0.4, 1.0, 4);
        assert!((lo - (0.4 - 0.41f64).max(0.0)).abs() < 1e-15);
        assert!((hi - 0.81).abs() < 1e-12);
    }

    #[test]
    fn training_rejects_attacks() {
        let d = generate_synthetic(5, 1, 6, 0).unwrap();
        let m = build_autoencoder(6, 3, 0).unwrap();
        assert_eq!(
            train(m, &d, &TrainConfig::default()).unwrap_err(),
            AutoencoderError::AttackInTraining
        );
    }

    #[test]
    fn memorizes_a_single_sample() {
        let d = Dataset::new(
            (0..6).map(|i| format!("f{i}")).collect(),
            vec![FlowRecord {
                features: vec![0.5, -0.3, 0.8, 0.1, -0.6, 0.2],
                label: Label::Normal,
            }],
        )
        .unwrap();
        let m = build_autoencoder(6, 3, 4).unwrap();
        let before = m.reconstruction_error(&d.records[0].features).unwrap();
        let trained = train(m, &d, &TrainConfig::default()).unwrap();
        let after = trained.reconstruction_error(&d.records[0].features).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn from_params_rejects_asymmetric() {
        let p = NetworkParams::init(&[6, 4, 5], 0).unwrap();
        assert!(AutoencoderModel::from_params(p).is_err());
    }
}
