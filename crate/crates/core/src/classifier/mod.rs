//! The classifier backbone shared by every model in the crate.
//!
//! Target, complementary and conductor models, as well as every baseline,
//! are the same [`ClassifierSpec`] trained with different labels or class
//! weights. Only `output_classes` changes between them.

mod network;

pub use network::{flatten_grads, Layer, LayerGrad, Network};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{argmax, sgd_step, Prng, RealMatrix, SgdConfig};
use crate::persist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

/// Architecture of a fully connected classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub input_dim: usize,
    /// Empty means softmax regression.
    pub hidden_dims: Vec<usize>,
    pub output_classes: usize,
    pub activation: Activation,
}

impl ClassifierSpec {
    /// One hidden layer of 64 ReLU units.
    pub fn new(input_dim: usize, output_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![64],
            output_classes,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be positive: input {}, hidden {:?}",
                self.input_dim, self.hidden_dims
            )));
        }
        if self.output_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "output_classes must be >= 2, got {}",
                self.output_classes
            )));
        }
        Ok(())
    }

    /// `[input, hidden..., output]`
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.output_classes))
            .collect()
    }
}

/// Same spec with a different number of outputs, e.g. a `1 + |C|`-way conductor.
pub fn respec_output(spec: &ClassifierSpec, k: usize) -> Result<ClassifierSpec> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "output layer needs at least 2 classes, got {k}"
        )));
    }
    Ok(ClassifierSpec {
        output_classes: k,
        ..spec.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    /// Per-class loss weights; `None` weights every class 1.
    pub class_weights: Option<Vec<f64>>,
    /// Seeds weight initialization. Batch order comes from `sgd.shuffle_seed`.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(sgd: SgdConfig, seed: u64) -> Self {
        Self {
            sgd,
            class_weights: None,
            seed,
        }
    }

    pub fn with_class_weights(mut self, weights: Vec<f64>) -> Self {
        self.class_weights = Some(weights);
        self
    }

    /// Resolved weight vector for `k` classes.
    pub fn weights_for(&self, k: usize) -> Result<Vec<f64>> {
        match &self.class_weights {
            None => Ok(vec![1.0; k]),
            Some(w) if w.len() != k => Err(Error::Dimension(format!("{} class weights for {k} classes", w.len()))),
            Some(w) if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) => Err(Error::InvalidArgument(format!(
                "class weights must be positive, got {w:?}"
            ))),
            Some(w) => Ok(w.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// Weighted loss over the whole training set after the last epoch.
    pub final_loss: f64,
    pub epochs_run: usize,
    pub seed: u64,
    pub shuffle_seed: u64,
    pub class_weights: Vec<f64>,
    pub n_train: usize,
}

/// An immutable trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    spec: ClassifierSpec,
    network: Network,
    metadata: TrainingMetadata,
}

/// Mini-batch SGD with momentum on the class-weighted cross-entropy.
///
/// Samples are reshuffled every epoch; the last batch of an epoch may be
/// short. Identical inputs give bit-identical weights.
pub fn train(train: &Dataset, spec: &ClassifierSpec, config: &TrainConfig) -> Result<TrainedClassifier> {
    spec.validate()?;
    config.sgd.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if train.n_dims() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "dataset has {} features, spec expects {}",
            train.n_dims(),
            spec.input_dim
        )));
    }
    if let Some(&y) = train.labels().iter().find(|&&y| y >= spec.output_classes) {
        return Err(Error::Dimension(format!(
            "label {y} does not fit {} output classes",
            spec.output_classes
        )));
    }
    let weights = config.weights_for(spec.output_classes)?;

    let mut network = Network::init(spec, &mut Prng::new(config.seed).substream("init"));
    let mut shuffle_rng = Prng::new(config.sgd.shuffle_seed).substream("shuffle");
    let mut velocity: Vec<(Vec<f64>, Vec<f64>)> = network
        .layers
        .iter()
        .map(|l| (vec![0.0; l.weights.as_slice().len()], vec![0.0; l.bias.len()]))
        .collect();

    let n = train.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_labels = Vec::with_capacity(config.sgd.batch_size);
    for epoch in 0..config.sgd.epochs {
        shuffle_rng.shuffle(&mut order);
        for (batch, idx) in order.chunks(config.sgd.batch_size).enumerate() {
            let x = train.features().select_rows(idx);
            batch_labels.clear();
            batch_labels.extend(idx.iter().map(|&i| train.labels()[i]));
            let (loss, grads) = network.loss_and_gradients(&x, &batch_labels, &weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            for ((layer, grad), (vw, vb)) in network.layers.iter_mut().zip(&grads).zip(&mut velocity) {
                sgd_step(layer.weights.as_mut_slice(), vw, grad.weights.as_slice(), &config.sgd)?;
                sgd_step(&mut layer.bias, vb, &grad.bias, &config.sgd)?;
            }
            if network.layers.iter().any(|l| !l.weights.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
        }
    }

    let (final_loss, _) = network.loss_and_gradients(train.features(), train.labels(), &weights)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: config.sgd.epochs,
            batch: 0,
        });
    }
    Ok(TrainedClassifier {
        spec: spec.clone(),
        network,
        metadata: TrainingMetadata {
            final_loss,
            epochs_run: config.sgd.epochs,
            seed: config.seed,
            shuffle_seed: config.sgd.shuffle_seed,
            class_weights: weights,
            n_train: n,
        },
    })
}

#[derive(Serialize, Deserialize)]
struct ClassifierHeader {
    format_version: u32,
    kind: String,
    spec: ClassifierSpec,
    metadata: TrainingMetadata,
    /// `[fan_in, fan_out]` per layer; payload holds weights then bias for each.
    layer_shapes: Vec<[usize; 2]>,
}

impl TrainedClassifier {
    /// Assembles a classifier from explicit layers, checking shapes against `spec`.
    pub fn from_parts(spec: ClassifierSpec, layers: Vec<Layer>, metadata: TrainingMetadata) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if layers.len() != dims.len() - 1 {
            return Err(Error::Format(format!(
                "{} layers for spec with {} layers",
                layers.len(),
                dims.len() - 1
            )));
        }
        for (l, (layer, w)) in layers.iter().zip(dims.windows(2)).enumerate() {
            if layer.weights.shape() != (w[0], w[1]) || layer.bias.len() != w[1] {
                return Err(Error::Format(format!("layer {l} shape does not match spec")));
            }
        }
        Ok(Self {
            network: Network::from_layers(spec.activation, layers),
            spec,
            metadata,
        })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn metadata(&self) -> &TrainingMetadata {
        &self.metadata
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn num_classes(&self) -> usize {
        self.spec.output_classes
    }

    /// Class probabilities, one row per sample.
    pub fn predict_proba(&self, features: &RealMatrix) -> Result<RealMatrix> {
        self.network.predict_proba(features)
    }

    /// Most probable class per row, ties to the lower id.
    pub fn predict(&self, features: &RealMatrix) -> Result<Vec<usize>> {
        let probs = self.predict_proba(features)?;
        Ok(probs.iter_rows().map(argmax).collect())
    }

    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        let pred = self.predict(ds.features())?;
        let hits = pred.iter().zip(ds.labels()).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / ds.n_samples().max(1) as f64)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = ClassifierHeader {
            format_version: persist::FORMAT_VERSION,
            kind: "classifier".into(),
            spec: self.spec.clone(),
            metadata: self.metadata.clone(),
            layer_shapes: self
                .network
                .layers
                .iter()
                .map(|l| [l.weights.rows(), l.weights.cols()])
                .collect(),
        };
        let mut payload = Vec::with_capacity(self.network.param_count() * 8);
        for layer in &self.network.layers {
            persist::push_f64s(&mut payload, layer.weights.as_slice());
            persist::push_f64s(&mut payload, &layer.bias);
        }
        persist::encode(persist::CLASSIFIER_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut payload): (ClassifierHeader, _) = persist::decode(persist::CLASSIFIER_MAGIC, bytes)?;
        let mut layers = Vec::with_capacity(header.layer_shapes.len());
        for [rows, cols] in header.layer_shapes {
            let (w, rest) = persist::take_f64s(payload, rows * cols)?;
            let (b, rest) = persist::take_f64s(rest, cols)?;
            payload = rest;
            layers.push(Layer {
                weights: RealMatrix::from_vec(rows, cols, w)?,
                bias: b,
            });
        }
        if !payload.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", payload.len())));
        }
        Self::from_parts(header.spec, layers, header.metadata)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&persist::read_file(path.as_ref())?)
    }
}
