//! MLP quality head.
//!
//! Three fully connected layers map a frame's feature vector to a score:
//! `D_in -> max(D_in/4, 8) -> max(D_in/16, 8) -> 1`, ReLU on the hidden
//! layers, identity on the output, inverted dropout on hidden activations
//! while training. A video's score is the mean of its frame scores.

mod io;
mod train;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nss::FeatureMode;

pub use io::{load_model, read_model, save_model, write_model, MAGIC, VERSION};
pub use train::{
    mean_l1, train, train_logged, Adam, AdamConfig, LabeledFeatureSet, LabeledRow, TrainConfig,
    DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LR,
};

pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const MIN_HIDDEN: usize = 8;

/// Floating-point type the network is evaluated in. Models are stored as
/// `f32`; `f64` instantiations exist for numerical checks.
pub trait Scalar: Float + Send + Sync + std::fmt::Debug + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// One affine layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v)),
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
    pub dropout: f64,
    pub seed: u64,
    pub feature_mode: FeatureMode,
    pub backbone: String,
    pub train_meta: Option<TrainMeta>,
}

/// The stored model type.
pub type MlpModel = Mlp<f32>;

/// Layer widths for an input of dimension `d_in`.
pub fn layer_dims(d_in: usize) -> [usize; 4] {
    [
        d_in,
        (d_in / 4).max(MIN_HIDDEN),
        (d_in / 16).max(MIN_HIDDEN),
        1,
    ]
}

/// He-uniform weights drawn from `seed`, zero biases.
pub fn mlp_init(input_dim: usize, seed: u64) -> Result<MlpModel> {
    Mlp::init(input_dim, seed)
}

/// Arithmetic mean of frame scores.
pub fn video_score(frame_scores: &[f64]) -> Result<f64> {
    if frame_scores.is_empty() {
        return Err(Error::EmptyInput("no frame scores to pool".into()));
    }
    Ok(frame_scores.iter().sum::<f64>() / frame_scores.len() as f64)
}

/// Per-parameter gradients, shaped like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn init(input_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig(
                "input dimension must be positive".into(),
            ));
        }
        let dims = layer_dims(input_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for w in &mut layer.weights {
                    *w = T::of(rng.random_range(-limit..limit));
                }
                layer
            })
            .collect();
        Ok(Mlp {
            layers,
            dropout: DEFAULT_DROPOUT,
            seed,
            feature_mode: FeatureMode::default(),
            backbone: String::new(),
            train_meta: None,
        })
    }

    /// Builds a model from explicit layers; consecutive shapes must chain
    /// and the last layer must have a single output.
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        let model = Mlp {
            layers,
            dropout: DEFAULT_DROPOUT,
            seed: 0,
            feature_mode: FeatureMode::default(),
            backbone: String::new(),
            train_meta: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_features(mut self, mode: FeatureMode, backbone: impl Into<String>) -> Self {
        self.feature_mode = mode;
        self.backbone = backbone.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ModelFormat("model has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs == 0
                || l.weights.len() != l.inputs * l.outputs
                || l.biases.len() != l.outputs
            {
                return Err(Error::ModelFormat(format!(
                    "layer {i} has inconsistent shapes"
                )));
            }
            if let Some(next) = self.layers.get(i + 1) {
                if next.inputs != l.outputs {
                    return Err(Error::ModelFormat(format!(
                        "layer {i} outputs {} values but layer {} takes {}",
                        l.outputs,
                        i + 1,
                        next.inputs
                    )));
                }
            }
        }
        if self.layers.last().map(|l| l.outputs) != Some(1) {
            return Err(Error::ModelFormat("output layer must have one unit".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::ModelFormat(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Checks that the model was trained for features of this shape.
    pub fn ensure_compatible(&self, dim: usize, mode: FeatureMode, backbone: &str) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::ModelFormat(format!(
                "model expects {}-dim features, got {dim}",
                self.input_dim()
            )));
        }
        if mode != self.feature_mode {
            return Err(Error::ModelFormat(format!(
                "model was trained on {} features, got {mode}",
                self.feature_mode
            )));
        }
        if !self.backbone.is_empty() && !backbone.is_empty() && backbone != self.backbone {
            return Err(Error::ModelFormat(format!(
                "model was trained on {} activations, got {backbone}",
                self.backbone
            )));
        }
        Ok(())
    }

    fn check_input(&self, v: &[T]) -> Result<()> {
        if v.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feature vector has {} values, model expects {}",
                v.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass. Deterministic and read-only.
    pub fn predict(&self, v: &[T]) -> Result<T> {
        self.check_input(v)?;
        let mut a = v.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut z);
            if i < last {
                z.iter_mut().for_each(|x| *x = x.max(T::zero()));
            }
            std::mem::swap(&mut a, &mut z);
        }
        Ok(a[0])
    }

    /// Forward pass; `training` enables inverted dropout drawn from `rng`.
    pub fn forward<R: Rng + ?Sized>(&self, v: &[T], training: bool, rng: &mut R) -> Result<T> {
        if !training {
            return self.predict(v);
        }
        self.check_input(v)?;
        Ok(self.trace(v, Some(rng)).output())
    }

    fn trace<R: Rng + ?Sized>(&self, v: &[T], mut rng: Option<&mut R>) -> Trace<T> {
        let keep = 1.0 - self.dropout;
        let scale = T::of(1.0 / keep);
        let last = self.layers.len() - 1;
        let mut activations = vec![v.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(last);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(activations.last().unwrap(), &mut z);
            if i < last {
                let mask: Vec<T> = match rng.as_deref_mut() {
                    Some(r) if self.dropout > 0.0 => (0..z.len())
                        .map(|_| {
                            if r.random::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect(),
                    _ => vec![T::one(); z.len()],
                };
                let a = z
                    .iter()
                    .zip(&mask)
                    .map(|(&x, &m)| x.max(T::zero()) * m)
                    .collect();
                masks.push(mask);
                pre.push(z);
                activations.push(a);
            } else {
                pre.push(z.clone());
                activations.push(z);
            }
        }
        Trace {
            activations,
            pre,
            masks,
        }
    }

    /// Mean L1 loss over a batch and its gradient. With `rng` the pass
    /// uses training-mode dropout; `|0|` has subgradient 0.
    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        inputs: &[&[T]],
        targets: &[T],
        mut rng: Option<&mut R>,
    ) -> Result<(T, Gradients<T>)> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs for {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let n = T::of(inputs.len() as f64);
        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        };
        let mut loss = T::zero();
        for (v, &t) in inputs.iter().zip(targets) {
            self.check_input(v)?;
            let trace = self.trace(v, rng.as_deref_mut());
            let residual = trace.output() - t;
            loss = loss + residual.abs();
            let sign = if residual > T::zero() {
                T::one()
            } else if residual < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            self.backprop(&trace, sign / n, &mut grads);
        }
        Ok((loss / n, grads))
    }

    fn backprop(&self, trace: &Trace<T>, d_out: T, grads: &mut Gradients<T>) {
        let mut delta = vec![d_out];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                g.biases[o] = g.biases[o] + d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &x) in row.iter_mut().zip(input) {
                    *w = *w + d * x;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![T::zero(); layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p = *p + d * w;
                }
            }
            let z = &trace.pre[i - 1];
            let mask = &trace.masks[i - 1];
            for ((p, &zv), &m) in prev.iter_mut().zip(z).zip(mask) {
                *p = if zv > T::zero() { *p * m } else { T::zero() };
            }
            delta = prev;
        }
    }

    /// Flattened parameters in layer order: weights then biases per layer.
    pub fn parameters(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.parameter_count()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            let (b, r) = r.split_at(l.biases.len());
            l.weights.copy_from_slice(w);
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    /// The same model evaluated in another precision.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.iter().map(|w| U::of(w.as_f64())).collect(),
                    biases: l.biases.iter().map(|b| U::of(b.as_f64())).collect(),
                })
                .collect(),
            dropout: self.dropout,
            seed: self.seed,
            feature_mode: self.feature_mode,
            backbone: self.backbone.clone(),
            train_meta: self.train_meta.clone(),
        }
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}

struct Trace<T> {
    /// Layer inputs, then the network output.
    activations: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    masks: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    fn output(&self) -> T {
        self.activations.last().unwrap()[0]
    }
}
