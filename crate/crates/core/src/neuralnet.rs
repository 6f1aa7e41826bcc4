//! Fully-connected networks: forward pass, MSE loss, backpropagation,
//! inverted dropout and Adam.
//!
//! Hidden layers use tanh, the final layer is linear. Parameters are stored
//! as `f64` but always hold values exactly representable as `f32` (they are
//! rounded after initialization and after every optimizer step), so the
//! 4-byte little-endian wire format round-trips them bit for bit. All
//! arithmetic runs in `f64`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const PARAMS_MAGIC: [u8; 4] = *b"TGNP";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("a network needs at least two layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer size at position {0} is zero")]
    ZeroLayer(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("activations were not produced by this network")]
    ShapeMismatch,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training samples")]
    NoSamples,
    #[error("malformed parameter payload: {0}")]
    Format(String),
}

/// One dense layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Layer {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

/// Gradients share the parameter layout.
pub type Gradients = NetworkParams;

/// Forward-pass record of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Value fed to the next layer (after dropout, if any).
    pub output: Vec<f64>,
    /// Activation before dropout.
    pub activated: Vec<f64>,
    /// Inverted-dropout multipliers (0 or 1/(1-rate)), training mode only.
    pub mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub input: Vec<f64>,
    pub layers: Vec<LayerTrace>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("at least one layer").output
    }
}

/// Dropout mask generator for training-mode forward passes.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Dropout {
        Dropout {
            rate,
            rng: seed::rng(seed),
        }
    }

    fn mask(&mut self, n: usize) -> Option<Vec<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some(
            (0..n)
                .map(|_| {
                    if self.rng.random::<f64>() < self.rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect(),
        )
    }
}

fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

impl NetworkParams {
    /// Glorot-uniform weights in ±sqrt(6/(in+out)), zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<NetworkParams, NetError> {
        if layer_sizes.len() < 2 {
            return Err(NetError::TooFewLayers(layer_sizes.len()));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(NetError::ZeroLayer(pos));
        }
        let mut rng = seed::rng(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| to_f32_grid(rng.random_range(-limit..limit)))
                    .collect();
                Layer {
                    inputs,
                    outputs,
                    weights,
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(NetworkParams { layers })
    }

    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_width()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.input_width() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Full forward pass keeping every layer's activations. Dropout is
    /// applied to hidden layers only, and only when a generator is given.
    pub fn forward(
        &self,
        x: &[f64],
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Activations, NetError> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = traces.last().map_or(x, |t| t.output.as_slice());
            let mut activated = layer.affine(input);
            if i == last {
                traces.push(LayerTrace {
                    output: activated.clone(),
                    activated,
                    mask: None,
                });
                continue;
            }
            activated.iter_mut().for_each(|v| *v = v.tanh());
            let mask = dropout.as_deref_mut().and_then(|d| d.mask(layer.outputs));
            let output = match &mask {
                Some(m) => activated.iter().zip(m).map(|(a, s)| a * s).collect(),
                None => activated.clone(),
            };
            traces.push(LayerTrace {
                output,
                activated,
                mask,
            });
        }
        Ok(Activations {
            input: x.to_vec(),
            layers: traces,
        })
    }

    /// Inference output of the first `depth` layers (no dropout). The last
    /// layer of the network is linear; every earlier one is tanh.
    pub fn forward_prefix(&self, x: &[f64], depth: usize) -> Result<Vec<f64>, NetError> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().take(depth).enumerate() {
            h = layer.affine(&h);
            if i != last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(h)
    }

    /// Inference output (no dropout).
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        self.forward_prefix(x, self.layers.len())
    }

    /// Exact gradients of `mse(target, output)` for one sample.
    pub fn backward(&self, acts: &Activations, target: &[f64]) -> Result<Gradients, NetError> {
        let mut grads = self.zeros_like();
        self.accumulate_gradients(acts, target, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sample's gradients into `grads`.
    pub fn accumulate_gradients(
        &self,
        acts: &Activations,
        target: &[f64],
        grads: &mut Gradients,
    ) -> Result<(), NetError> {
        if acts.layers.len() != self.layers.len()
            || acts.input.len() != self.input_width()
            || grads.layers.len() != self.layers.len()
        {
            return Err(NetError::ShapeMismatch);
        }
        for (l, t) in self.layers.iter().zip(&acts.layers) {
            if t.output.len() != l.outputs {
                return Err(NetError::ShapeMismatch);
            }
        }
        let out = acts.output();
        if target.len() != out.len() {
            return Err(NetError::DimensionMismatch {
                expected: out.len(),
                got: target.len(),
            });
        }
        let scale = 2.0 / out.len() as f64;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(o, t)| scale * (o - t))
            .collect();

        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = if i == 0 {
                &acts.input
            } else {
                &acts.layers[i - 1].output
            };
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, x)| *gw += d * x);
            }
            if i == 0 {
                break;
            }
            let below = &acts.layers[i - 1];
            let mut next = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                next.iter_mut().zip(row).for_each(|(n, w)| *n += w * d);
            }
            for (j, n) in next.iter_mut().enumerate() {
                let a = below.activated[j];
                *n *= 1.0 - a * a;
                if let Some(mask) = &below.mask {
                    *n *= mask[j];
                }
            }
            delta = next;
        }
        Ok(())
    }

    /// Versioned little-endian encoding: magic, version, layer count, then per
    /// layer `inputs`, `outputs` (u32) followed by row-major W and b as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&PARAMS_MAGIC);
        out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        12 + self
            .layers
            .iter()
            .map(|l| 8 + 4 * (l.weights.len() + l.bias.len()))
            .sum::<usize>()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<NetworkParams, NetError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != PARAMS_MAGIC {
            return Err(NetError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != PARAMS_VERSION {
            return Err(NetError::Format(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(NetError::Format("no layers".into()));
        }
        let mut layers = Vec::with_capacity(count);
        for i in 0..count {
            let inputs = r.u32()? as usize;
            let outputs = r.u32()? as usize;
            if inputs == 0 || outputs == 0 {
                return Err(NetError::Format(format!("layer {i} has a zero dimension")));
            }
            if let Some(prev) = layers.last().map(|l: &Layer| l.outputs) {
                if prev != inputs {
                    return Err(NetError::Format(format!(
                        "layer {i} input {inputs} does not chain with previous output {prev}"
                    )));
                }
            }
            let weights = r.f32s(inputs * outputs)?;
            let bias = r.f32s(outputs)?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        if r.pos != bytes.len() {
            return Err(NetError::Format("trailing bytes".into()));
        }
        Ok(NetworkParams { layers })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NetError::Format("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, NetError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| NetError::Format("size overflow".into()))?)?;
        raw.chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(NetError::Format("non-finite parameter".into()))
                }
            })
            .collect()
    }
}

/// Mean squared error over the K components.
pub fn mse(x: &[f64], x_prime: &[f64]) -> Result<f64, NetError> {
    if x.len() != x_prime.len() {
        return Err(NetError::DimensionMismatch {
            expected: x.len(),
            got: x_prime.len(),
        });
    }
    if x.is_empty() {
        return Err(NetError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    let sum: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.01,
            dropout_rate: 0.05,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push("epochs must be at least 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            out.push(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            out.push(format!("adam_beta1 must lie in [0, 1), got {}", self.adam_beta1));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            out.push(format!("adam_beta2 must lie in [0, 1), got {}", self.adam_beta2));
        }
        if !(self.adam_epsilon > 0.0) {
            out.push(format!("adam_epsilon must be > 0, got {}", self.adam_epsilon));
        }
        out
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(NetError::Config(problems.join("; ")))
        }
    }
}

/// First and second moment estimates, zero at step 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> AdamState {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, rounding the result onto the f32 grid.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = to_f32_grid(*p - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon));
    }
}

/// Mean inference loss over a sample set.
pub fn mean_loss(
    params: &NetworkParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<f64, NetError> {
    if inputs.is_empty() {
        return Err(NetError::NoSamples);
    }
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        total += mse(y, &params.infer(x)?)?;
    }
    Ok(total / inputs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Inference loss over the training set after each epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch Adam on the MSE loss. Sample order is reshuffled every epoch;
/// both the shuffle and the dropout masks derive from `cfg.seed`.
pub fn fit(
    mut params: NetworkParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NetError> {
    use rand::seq::SliceRandom;

    cfg.validate()?;
    if inputs.is_empty() {
        return Err(NetError::NoSamples);
    }
    if inputs.len() != targets.len() {
        return Err(NetError::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let mut order_rng = seed::rng(seed::splitmix64(cfg.seed));
    let mut dropout = Dropout::new(cfg.dropout_rate, seed::splitmix64(cfg.seed ^ 0xD0D0));
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.values_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let acts = params.forward(&inputs[i], Some(&mut dropout))?;
                params.accumulate_gradients(&acts, &targets[i], &mut grads)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.values_mut().for_each(|g| *g *= inv);
            adam_step(&mut params, &grads, &mut state, cfg);
        }
        loss_history.push(mean_loss(&params, inputs, targets)?);
    }
    Ok(TrainOutcome {
        params,
        loss_history,
    })
}
