use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mlp, Scalar, TrainMeta};
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EPOCHS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: DEFAULT_LR,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..Default::default()
        }
    }

    /// `lr = 0` is accepted and leaves the weights untouched.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be >= 0, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch size and epochs must be >= 1".into(),
            ));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::InvalidConfig(
                "Adam needs beta in [0, 1) and eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, lr: f64, cfg: AdamConfig) -> Self {
        Adam {
            lr: T::of(lr),
            beta1: T::of(cfg.beta1),
            beta2: T::of(cfg.beta2),
            eps: T::of(cfg.eps),
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut T>, grads: &[T]) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub content_id: String,
    pub frame_index: usize,
    pub features: Vec<f32>,
    pub target: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatureSet {
    rows: Vec<LabeledRow>,
}

impl LabeledFeatureSet {
    pub fn new(rows: Vec<LabeledRow>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let dim = first.features.len();
            for r in &rows {
                if r.features.len() != dim {
                    return Err(Error::Shape(format!(
                        "row {}/{} has {} features, expected {dim}",
                        r.content_id,
                        r.frame_index,
                        r.features.len()
                    )));
                }
                if !r.target.is_finite() || r.features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::DataIntegrity(format!(
                        "row {}/{} has a non-finite value",
                        r.content_id, r.frame_index
                    )));
                }
            }
        }
        Ok(LabeledFeatureSet { rows })
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.rows.first().map(|r| r.features.len())
    }

    /// Rows whose content id satisfies `keep`, in original order.
    pub fn subset(&self, keep: impl Fn(&str) -> bool) -> LabeledFeatureSet {
        LabeledFeatureSet {
            rows: self
                .rows
                .iter()
                .filter(|r| keep(&r.content_id))
                .cloned()
                .collect(),
        }
    }
}

/// Mean absolute error of inference-mode predictions.
pub fn mean_l1<T: Scalar>(model: &Mlp<T>, data: &LabeledFeatureSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no rows to evaluate".into()));
    }
    let mut total = 0.0;
    for r in data.rows() {
        let v: Vec<T> = r.features.iter().map(|&x| T::of(x as f64)).collect();
        total += (model.predict(&v)?.as_f64() - r.target).abs();
    }
    Ok(total / data.len() as f64)
}

/// Minibatch Adam on mean L1 loss. Rows are shuffled globally every epoch;
/// the shuffle and dropout streams both derive from `cfg.seed`.
pub fn train<T: Scalar>(
    model: &Mlp<T>,
    data: &LabeledFeatureSet,
    cfg: &TrainConfig,
) -> Result<Mlp<T>> {
    train_logged(model, data, cfg).map(|(m, _)| m)
}

/// [`train`], also returning the sample-weighted mean training loss of
/// every epoch.
pub fn train_logged<T: Scalar>(
    model: &Mlp<T>,
    data: &LabeledFeatureSet,
    cfg: &TrainConfig,
) -> Result<(Mlp<T>, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let dim = data.dim().unwrap_or(0);
    if dim != model.input_dim() {
        return Err(Error::Shape(format!(
            "training features have {dim} values, model expects {}",
            model.input_dim()
        )));
    }

    let inputs: Vec<Vec<T>> = data
        .rows()
        .iter()
        .map(|r| r.features.iter().map(|&x| T::of(x as f64)).collect())
        .collect();
    let targets: Vec<T> = data.rows().iter().map(|r| T::of(r.target)).collect();

    let mut model = model.clone();
    let mut adam = Adam::new(model.parameter_count(), cfg.lr, cfg.adam);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    let mut epoch_loss = 0.0;
    let mut log = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[T]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ts: Vec<T> = batch.iter().map(|&i| targets[i]).collect();
            let (loss, grads) = model.loss_and_gradient(&xs, &ts, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            epoch_loss += loss.as_f64() * batch.len() as f64;
            let flat = grads.flatten();
            let params = model
                .layers
                .iter_mut()
                .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()));
            adam.step(params, &flat);
            step += 1;
        }
        log.push(epoch_loss / data.len() as f64);
    }
    model.train_meta = Some(TrainMeta {
        epochs_run: cfg.epochs,
        final_loss: epoch_loss / data.len() as f64,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
    });
    Ok((model, log))
}
