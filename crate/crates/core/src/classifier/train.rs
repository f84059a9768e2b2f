//! Minibatch SGD with decoupled weight decay and cross-entropy loss.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::{Matrix, Weights};
use super::{ClassifierModel, Layer, ModelArchitecture, ModelError};
use crate::corpus::{Corpus, EmojiId, EmojiVocabulary, LabeledExample};
use crate::featurizer::{featurize, FeatureVector, FeaturizerConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("label {0} is outside the vocabulary")]
    UnknownLabel(EmojiId),
    #[error("non-finite loss at epoch {epoch}, step {step}: {loss}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 2e-4, weight_decay: 0.01, batch_size: 256, epochs: 10, seed: 0 }
    }
}

impl TrainConfig {
    /// Settings for the small synthetic corpora used in tests and the CLI:
    /// plain SGD needs a far larger step than the default, and the decay is
    /// scaled down so the per-step shrink stays comparable.
    pub fn desk() -> Self {
        TrainConfig { learning_rate: 0.5, weight_decay: 1e-5, batch_size: 32, epochs: 5, seed: 0 }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::InvalidConfig("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Trains on a corpus; classes are the corpus vocabulary in id order.
pub fn train<F: Scalar>(
    corpus: &Corpus,
    arch: &ModelArchitecture,
    featurizer: &FeaturizerConfig,
    cfg: &TrainConfig,
) -> Result<ClassifierModel<F>, TrainError> {
    train_examples(corpus.examples(), corpus.vocabulary(), arch, featurizer, cfg)
}

/// Trains on explicit examples against a given class vocabulary.
pub fn train_examples<F: Scalar>(
    examples: &[LabeledExample],
    vocabulary: &EmojiVocabulary,
    arch: &ModelArchitecture,
    featurizer: &FeaturizerConfig,
    cfg: &TrainConfig,
) -> Result<ClassifierModel<F>, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    cfg.validate()?;
    if arch.n_classes != vocabulary.len() {
        return Err(TrainError::InvalidConfig(format!(
            "architecture has {} classes, vocabulary has {}",
            arch.n_classes,
            vocabulary.len()
        )));
    }
    let data = examples
        .iter()
        .map(|ex| {
            let class = vocabulary.class_id(ex.label()).ok_or_else(|| TrainError::UnknownLabel(ex.label().clone()))?;
            Ok((featurize(featurizer, ex.text()), class))
        })
        .collect::<Result<Vec<(FeatureVector, usize)>, TrainError>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model::<F>(arch, featurizer, vocabulary.classes().to_vec(), &mut rng)?;
    let mut trainer = Trainer::new(&model, cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&(FeatureVector, usize)> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = model.batch_gradients(&batch);
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            trainer.apply(&mut model, &grads);
        }
        log::info!("epoch {}: mean loss {:.5}", epoch + 1, epoch_loss / data.len() as f64);
    }
    trainer.finish(&mut model);
    Ok(model)
}

fn uniform_matrix<F: Scalar>(rows: usize, cols: usize, limit: f64, rng: &mut ChaCha8Rng) -> Matrix<F> {
    let data = (0..rows * cols).map(|_| F::of(rng.random_range(-limit..limit))).collect();
    Matrix::from_vec(rows, cols, data)
}

/// A freshly initialized, untrained model.
pub fn initialize<F: Scalar>(
    arch: &ModelArchitecture,
    featurizer: &FeaturizerConfig,
    class_ids: Vec<EmojiId>,
    seed: u64,
) -> Result<ClassifierModel<F>, ModelError> {
    init_model(arch, featurizer, class_ids, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn init_model<F: Scalar>(
    arch: &ModelArchitecture,
    featurizer: &FeaturizerConfig,
    class_ids: Vec<EmojiId>,
    rng: &mut ChaCha8Rng,
) -> Result<ClassifierModel<F>, ModelError> {
    arch.validate()?;
    featurizer.validate()?;
    let embedding = uniform_matrix(featurizer.n_buckets as usize, arch.embedding_dim, 0.1, rng);
    let mut layers: Vec<Layer<F>> = arch
        .layer_shapes()
        .into_iter()
        .map(|(out, inp)| {
            let limit = (6.0 / (out + inp) as f64).sqrt();
            Layer { weight: Weights::Float(uniform_matrix(out, inp, limit, rng)), bias: vec![F::zero(); out] }
        })
        .collect();
    let output = layers.pop().expect("output layer");
    ClassifierModel::from_parts(*arch, *featurizer, class_ids, Weights::Float(embedding), layers, output)
}

/// Loss gradients. Embedding gradients are sparse: only touched rows.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub embedding: HashMap<u32, Vec<F>>,
    pub hidden: Vec<(Vec<F>, Vec<F>)>,
    pub output: (Vec<F>, Vec<F>),
}

impl<F: Scalar> Gradients<F> {
    fn zeros(model: &ClassifierModel<F>) -> Self {
        let dense = |l: &Layer<F>| (vec![F::zero(); l.weight.rows() * l.weight.cols()], vec![F::zero(); l.bias.len()]);
        Gradients { embedding: HashMap::new(), hidden: model.hidden.iter().map(dense).collect(), output: dense(&model.output) }
    }

    /// Dense gradient tensors named and ordered like
    /// [`ClassifierModel::parameters_mut`].
    pub fn dense(&self, model: &ClassifierModel<F>) -> Vec<(String, Vec<F>)> {
        let dim = model.architecture.embedding_dim;
        let mut emb = vec![F::zero(); model.featurizer.n_buckets as usize * dim];
        for (&row, g) in &self.embedding {
            emb[row as usize * dim..(row as usize + 1) * dim].copy_from_slice(g);
        }
        let mut out = vec![("embedding".to_string(), emb)];
        for (i, (w, b)) in self.hidden.iter().enumerate() {
            out.push((format!("hidden.{i}.weight"), w.clone()));
            out.push((format!("hidden.{i}.bias"), b.clone()));
        }
        out.push(("output.weight".into(), self.output.0.clone()));
        out.push(("output.bias".into(), self.output.1.clone()));
        out
    }
}

impl<F: Scalar> ClassifierModel<F> {
    /// Mean cross-entropy over `batch`.
    pub fn loss(&self, batch: &[(FeatureVector, usize)]) -> F {
        let total: F = batch.iter().map(|(x, y)| -self.forward_trace(x).probs[*y].ln()).sum();
        total / F::of_usize(batch.len())
    }

    /// Mean cross-entropy over `batch` and its gradient with respect to
    /// every parameter. Requires float weights.
    pub fn loss_and_gradients(&self, batch: &[(FeatureVector, usize)]) -> (F, Gradients<F>) {
        let refs: Vec<&(FeatureVector, usize)> = batch.iter().collect();
        self.batch_gradients(&refs)
    }

    fn batch_gradients(&self, batch: &[&(FeatureVector, usize)]) -> (F, Gradients<F>) {
        let mut grads = Gradients::zeros(self);
        let scale = F::one() / F::of_usize(batch.len());
        let mut loss = F::zero();
        for (features, label) in batch {
            loss += self.accumulate_example(features, *label, scale, &mut grads);
        }
        (loss * scale, grads)
    }

    fn accumulate_example(&self, features: &FeatureVector, label: usize, scale: F, grads: &mut Gradients<F>) -> F {
        fn float<F: Scalar>(w: &Weights<F>) -> &Matrix<F> {
            w.as_float().expect("gradients require a float model")
        }
        let trace = self.forward_trace(features);
        let loss = -trace.probs[label].ln();

        let mut delta: Vec<F> = trace.probs.iter().map(|&p| p * scale).collect();
        delta[label] -= scale;

        let last = trace.activations.last().unwrap_or(&trace.input);
        let mut upstream = backprop_layer(float(&self.output.weight), &delta, last, &mut grads.output);

        for li in (0..self.hidden.len()).rev() {
            let h = &trace.activations[li];
            let da: Vec<F> = upstream.iter().zip(h).map(|(&g, &a)| g * (F::one() - a * a)).collect();
            let prev = if li == 0 { &trace.input } else { &trace.activations[li - 1] };
            upstream = backprop_layer(float(&self.hidden[li].weight), &da, prev, &mut grads.hidden[li]);
        }

        let total = features.total_count();
        if total > 0 {
            let inv = F::one() / F::of(f64::from(total));
            let dim = self.architecture.embedding_dim;
            for (bucket, count) in features.iter() {
                let w = F::of(f64::from(count)) * inv;
                let row = grads.embedding.entry(bucket).or_insert_with(|| vec![F::zero(); dim]);
                for (r, &g) in row.iter_mut().zip(&upstream) {
                    *r += w * g;
                }
            }
        }
        loss
    }
}

/// Accumulates the gradient of an affine layer and returns the gradient
/// with respect to its input.
fn backprop_layer<F: Scalar>(w: &Matrix<F>, delta: &[F], input: &[F], acc: &mut (Vec<F>, Vec<F>)) -> Vec<F> {
    let cols = w.cols();
    let mut d_input = vec![F::zero(); cols];
    for (r, &d) in delta.iter().enumerate() {
        if d == F::zero() {
            continue;
        }
        acc.1[r] += d;
        let g_row = &mut acc.0[r * cols..(r + 1) * cols];
        for (g, &x) in g_row.iter_mut().zip(input) {
            *g += d * x;
        }
        for (di, &wv) in d_input.iter_mut().zip(w.row(r)) {
            *di += d * wv;
        }
    }
    d_input
}

/// Applies updates; embedding weight decay is deferred per row and
/// applied in closed form when the row is next touched.
struct Trainer<F> {
    lr: F,
    decay: F,
    step: u32,
    row_step: Vec<u32>,
}

impl<F: Scalar> Trainer<F> {
    fn new(model: &ClassifierModel<F>, cfg: &TrainConfig) -> Self {
        Trainer {
            lr: F::of(cfg.learning_rate),
            decay: F::one() - F::of(cfg.learning_rate * cfg.weight_decay),
            step: 0,
            row_step: vec![0; model.featurizer.n_buckets as usize],
        }
    }

    fn apply(&mut self, model: &mut ClassifierModel<F>, grads: &Gradients<F>) {
        let (embedding, hidden, output) = model.parts_mut();
        let emb = embedding.as_float_mut().expect("training a float model");
        let mut rows: Vec<&u32> = grads.embedding.keys().collect();
        rows.sort_unstable();
        for &row in rows {
            let pending = self.step - self.row_step[row as usize];
            let catch_up = self.decay.powi(pending as i32);
            let g = &grads.embedding[&row];
            for (w, &gv) in emb.row_mut(row as usize).iter_mut().zip(g) {
                *w = *w * catch_up * self.decay - self.lr * gv;
            }
            self.row_step[row as usize] = self.step + 1;
        }
        for (layer, g) in hidden.iter_mut().zip(&grads.hidden) {
            self.apply_dense(layer, g);
        }
        self.apply_dense(output, &grads.output);
        self.step += 1;
    }

    fn apply_dense(&self, layer: &mut Layer<F>, g: &(Vec<F>, Vec<F>)) {
        let w = layer.weight.as_float_mut().expect("training a float model");
        for (wv, &gv) in w.data_mut().iter_mut().zip(&g.0) {
            *wv = *wv * self.decay - self.lr * gv;
        }
        for (b, &gv) in layer.bias.iter_mut().zip(&g.1) {
            *b -= self.lr * gv;
        }
    }

    fn finish(&mut self, model: &mut ClassifierModel<F>) {
        let (embedding, _, _) = model.parts_mut();
        let emb = embedding.as_float_mut().expect("training a float model");
        for (row, &last) in self.row_step.iter().enumerate() {
            let pending = self.step - last;
            if pending > 0 {
                let f = self.decay.powi(pending as i32);
                for w in emb.row_mut(row) {
                    *w *= f;
                }
            }
        }
    }
}
