//! Embedding-bag softmax classifier: the P_model(emoji | message) provider.
//!
//! Forward pass: mean of the feature-bucket embeddings (weighted by
//! occurrence count), then `hidden_layers` × (affine + tanh), then an affine
//! map to class logits and a softmax.

mod container;
mod tensor;
mod train;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EmojiId;
use crate::featurizer::{featurize, FeatureVector, FeaturizerConfig, FeaturizerError};
use crate::scalar::Scalar;

pub use container::{load_model, model_version, save_model, MAGIC, VERSION};
pub use tensor::{quantize_row, Matrix, QuantizedMatrix, Weights};
pub use train::{initialize, train, train_examples, Gradients, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated container: {0}")]
    Truncated(String),
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("unsupported feature hash {0:?}")]
    UnsupportedHash(String),
    #[error("operation requires {expected:?} precision, model is {actual:?}")]
    InvalidPrecision { expected: Precision, actual: Precision },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error(transparent)]
    Featurizer(#[from] FeaturizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Float32,
    Int8Weights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArchitecture {
    pub embedding_dim: usize,
    pub hidden_layers: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

impl ModelArchitecture {
    pub fn new(n_classes: usize) -> Self {
        ModelArchitecture { embedding_dim: 64, hidden_layers: 1, hidden_dim: 128, n_classes }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Architecture(m.to_string()));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive");
        }
        if self.hidden_layers > 3 {
            return bad("hidden_layers must be in 0..=3");
        }
        if self.hidden_layers > 0 && self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if self.n_classes == 0 {
            return bad("n_classes must be positive");
        }
        Ok(())
    }

    /// Input width of every affine layer, in order, ending with the output layer.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut width = self.embedding_dim;
        for _ in 0..self.hidden_layers {
            shapes.push((self.hidden_dim, width));
            width = self.hidden_dim;
        }
        shapes.push((self.n_classes, width));
        shapes
    }

    pub fn parameter_count(&self, n_buckets: u32) -> usize {
        let embedding = n_buckets as usize * self.embedding_dim;
        embedding + self.layer_shapes().iter().map(|&(out, inp)| out * inp + out).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weight: Weights<F>,
    pub bias: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<F> {
    architecture: ModelArchitecture,
    featurizer: FeaturizerConfig,
    class_ids: Vec<EmojiId>,
    class_index: HashMap<EmojiId, usize>,
    embedding: Weights<F>,
    hidden: Vec<Layer<F>>,
    output: Layer<F>,
}

/// One ranked class and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEmoji<F> {
    pub emoji: EmojiId,
    pub class_id: usize,
    pub probability: F,
}

/// Classes by descending probability, ties by ascending class id.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub ranked: Vec<ScoredEmoji<F>>,
}

impl<F: Scalar> Prediction<F> {
    /// Ranks a full probability vector and keeps the top `k`.
    pub fn from_distribution(class_ids: &[EmojiId], probs: &[F], k: usize) -> Self {
        let order = rank_indices(probs, k);
        let ranked = order
            .into_iter()
            .map(|i| ScoredEmoji { emoji: class_ids[i].clone(), class_id: i, probability: probs[i] })
            .collect();
        Prediction { ranked }
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn top(&self) -> Option<&ScoredEmoji<F>> {
        self.ranked.first()
    }

    pub fn cast<G: Scalar>(&self) -> Prediction<G> {
        Prediction {
            ranked: self
                .ranked
                .iter()
                .map(|s| ScoredEmoji { emoji: s.emoji.clone(), class_id: s.class_id, probability: G::of(s.probability.as_f64()) })
                .collect(),
        }
    }
}

/// Indices of the `k` largest values, descending, ties by ascending index.
pub(crate) fn rank_indices<F: Scalar>(values: &[F], k: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| -> Ordering {
        values[*b].partial_cmp(&values[*a]).unwrap_or(Ordering::Equal).then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let k = k.min(values.len());
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    } else {
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Numerically stable softmax, in place. Every output is kept strictly
/// positive.
pub(crate) fn softmax_in_place<F: Scalar>(z: &mut [F]) {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let tiny = F::min_positive_value();
    for v in z.iter_mut() {
        // NaN must survive so training can detect divergence.
        let p = *v / sum;
        *v = if p < tiny { tiny } else { p };
    }
}

/// Intermediate activations of one forward pass.
pub(crate) struct Trace<F> {
    pub input: Vec<F>,
    pub activations: Vec<Vec<F>>,
    pub probs: Vec<F>,
}

impl<F: Scalar> ClassifierModel<F> {
    pub(crate) fn from_parts(
        architecture: ModelArchitecture,
        featurizer: FeaturizerConfig,
        class_ids: Vec<EmojiId>,
        embedding: Weights<F>,
        hidden: Vec<Layer<F>>,
        output: Layer<F>,
    ) -> Result<Self, ModelError> {
        architecture.validate()?;
        featurizer.validate()?;
        if class_ids.len() != architecture.n_classes {
            return Err(ModelError::Architecture(format!(
                "{} class ids for {} classes",
                class_ids.len(),
                architecture.n_classes
            )));
        }
        let class_index: HashMap<EmojiId, usize> = class_ids.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        if class_index.len() != class_ids.len() {
            return Err(ModelError::Architecture("duplicate class ids".into()));
        }
        if embedding.rows() != featurizer.n_buckets as usize || embedding.cols() != architecture.embedding_dim {
            return Err(ModelError::Architecture("embedding shape".into()));
        }
        let shapes = architecture.layer_shapes();
        let layers = hidden.iter().chain(std::iter::once(&output));
        if hidden.len() != architecture.hidden_layers {
            return Err(ModelError::Architecture("hidden layer count".into()));
        }
        for (layer, &(out, inp)) in layers.zip(&shapes) {
            if layer.weight.rows() != out || layer.weight.cols() != inp || layer.bias.len() != out {
                return Err(ModelError::Architecture(format!("layer shape, expected {out}x{inp}")));
            }
        }
        Ok(ClassifierModel { architecture, featurizer, class_ids, class_index, embedding, hidden, output })
    }

    pub fn architecture(&self) -> &ModelArchitecture {
        &self.architecture
    }

    pub fn featurizer(&self) -> &FeaturizerConfig {
        &self.featurizer
    }

    pub fn class_ids(&self) -> &[EmojiId] {
        &self.class_ids
    }

    pub fn class_id(&self, emoji: &EmojiId) -> Option<usize> {
        self.class_index.get(emoji).copied()
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn embedding(&self) -> &Weights<F> {
        &self.embedding
    }

    pub fn hidden_layers(&self) -> &[Layer<F>] {
        &self.hidden
    }

    pub fn output_layer(&self) -> &Layer<F> {
        &self.output
    }

    pub fn precision(&self) -> Precision {
        match self.embedding {
            Weights::Float(_) => Precision::Float32,
            Weights::Int8(_) => Precision::Int8Weights,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.architecture.parameter_count(self.featurizer.n_buckets)
    }

    pub(crate) fn forward_trace(&self, features: &FeatureVector) -> Trace<F> {
        let mut input = vec![F::zero(); self.architecture.embedding_dim];
        let total = features.total_count();
        if total > 0 {
            let inv = F::one() / F::of(f64::from(total));
            for (bucket, count) in features.iter() {
                self.embedding.add_scaled_row(bucket as usize, F::of(f64::from(count)) * inv, &mut input);
            }
        }
        let mut activations = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let prev = activations.last().unwrap_or(&input);
            let mut h = vec![F::zero(); layer.bias.len()];
            layer.weight.matvec(prev, &mut h);
            for (v, &b) in h.iter_mut().zip(&layer.bias) {
                *v = (*v + b).tanh();
            }
            activations.push(h);
        }
        let last = activations.last().unwrap_or(&input);
        let mut probs = vec![F::zero(); self.output.bias.len()];
        self.output.weight.matvec(last, &mut probs);
        for (v, &b) in probs.iter_mut().zip(&self.output.bias) {
            *v += b;
        }
        softmax_in_place(&mut probs);
        Trace { input, activations, probs }
    }

    pub fn predict_features(&self, features: &FeatureVector) -> Vec<F> {
        self.forward_trace(features).probs
    }

    /// Full probability distribution over all classes, indexed by class id.
    pub fn predict_proba(&self, text: &str) -> Vec<F> {
        self.predict_features(&featurize(&self.featurizer, text))
    }

    /// Top-`k` classes. `k` is clamped to the number of classes.
    pub fn predict(&self, text: &str, k: usize) -> Prediction<F> {
        let probs = self.predict_proba(text);
        Prediction::from_distribution(&self.class_ids, &probs, k)
    }

    /// Weight-only int8 copy of a float model; biases stay float.
    pub fn quantize(&self) -> Result<Self, ModelError> {
        let q = |w: &Weights<F>| -> Result<Weights<F>, ModelError> {
            match w {
                Weights::Float(m) => Ok(Weights::Int8(QuantizedMatrix::quantize(m))),
                Weights::Int8(_) => {
                    Err(ModelError::InvalidPrecision { expected: Precision::Float32, actual: Precision::Int8Weights })
                }
            }
        };
        let hidden = self
            .hidden
            .iter()
            .map(|l| Ok(Layer { weight: q(&l.weight)?, bias: l.bias.clone() }))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(ClassifierModel {
            architecture: self.architecture,
            featurizer: self.featurizer,
            class_ids: self.class_ids.clone(),
            class_index: self.class_index.clone(),
            embedding: q(&self.embedding)?,
            hidden,
            output: Layer { weight: q(&self.output.weight)?, bias: self.output.bias.clone() },
        })
    }

    /// Mutable views of every float parameter tensor, in container order.
    /// Empty for quantized models.
    pub fn parameters_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut out: Vec<(String, &mut [F])> = Vec::new();
        if let Weights::Float(m) = &mut self.embedding {
            out.push(("embedding".into(), m.data_mut()));
        }
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            if let Weights::Float(m) = &mut layer.weight {
                out.push((format!("hidden.{i}.weight"), m.data_mut()));
            }
            out.push((format!("hidden.{i}.bias"), layer.bias.as_mut_slice()));
        }
        if let Weights::Float(m) = &mut self.output.weight {
            out.push(("output.weight".into(), m.data_mut()));
        }
        out.push(("output.bias".into(), self.output.bias.as_mut_slice()));
        out
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Weights<F>, &mut [Layer<F>], &mut Layer<F>) {
        (&mut self.embedding, &mut self.hidden, &mut self.output)
    }
}

/// Size of a model as stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelSizeReport {
    pub bytes_on_disk: usize,
    pub parameter_count: usize,
    pub precision: Precision,
}

pub fn model_size_report<F: Scalar>(model: &ClassifierModel<F>) -> ModelSizeReport {
    ModelSizeReport {
        bytes_on_disk: container::container_size(model),
        parameter_count: model.parameter_count(),
        precision: model.precision(),
    }
}
