//! Binary model container.
//!
//! Layout: `b"EMOJ"`, version byte `0x01`, little-endian `u32` metadata
//! length, UTF-8 JSON metadata, then raw little-endian tensor blobs in
//! directory order. Offsets in the directory are relative to the start of
//! the blob section. An int8 tensor is immediately followed by its
//! `<name>.scales` float32 vector.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::{Matrix, QuantizedMatrix, Weights};
use super::{ClassifierModel, Layer, ModelArchitecture, ModelError, Precision};
use crate::corpus::EmojiId;
use crate::featurizer::{FeaturizerConfig, HASH_NAME};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"EMOJ";
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 4 + 1 + 4;

#[derive(Debug, Serialize, Deserialize)]
struct FeaturizerMeta {
    n_buckets: u32,
    use_bigrams: bool,
    max_tokens: usize,
    hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F32,
    I8,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::I8 => 1,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: Dtype,
    offset: usize,
}

impl TensorEntry {
    fn nbytes(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.width()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    architecture: ModelArchitecture,
    featurizer: FeaturizerMeta,
    classes: Vec<EmojiId>,
    precision: Precision,
    tensors: Vec<TensorEntry>,
}

enum Blob<'a, F> {
    F32(&'a [F]),
    I8(&'a [i8]),
}

fn named_tensors<F: Scalar>(model: &ClassifierModel<F>) -> Vec<(String, Vec<usize>, Blob<'_, F>)> {
    let mut out = Vec::new();
    fn weights<'a, F: Scalar>(name: String, w: &'a Weights<F>, out: &mut Vec<(String, Vec<usize>, Blob<'a, F>)>) {
        let shape = vec![w.rows(), w.cols()];
        match w {
            Weights::Float(m) => out.push((name, shape, Blob::F32(m.data()))),
            Weights::Int8(q) => {
                let scales = format!("{name}.scales");
                out.push((name, shape, Blob::I8(q.values())));
                out.push((scales, vec![w.rows()], Blob::F32(q.scales())));
            }
        }
    }
    weights("embedding".into(), model.embedding(), &mut out);
    for (i, layer) in model.hidden_layers().iter().enumerate() {
        weights(format!("hidden.{i}.weight"), &layer.weight, &mut out);
        out.push((format!("hidden.{i}.bias"), vec![layer.bias.len()], Blob::F32(&layer.bias)));
    }
    weights("output.weight".into(), &model.output_layer().weight, &mut out);
    let bias = &model.output_layer().bias;
    out.push(("output.bias".into(), vec![bias.len()], Blob::F32(bias)));
    out
}

fn metadata_json<F: Scalar>(model: &ClassifierModel<F>) -> (Vec<u8>, usize) {
    let mut offset = 0;
    let mut tensors = Vec::new();
    for (name, shape, blob) in named_tensors(model) {
        let dtype = match blob {
            Blob::F32(_) => Dtype::F32,
            Blob::I8(_) => Dtype::I8,
        };
        let entry = TensorEntry { name, shape, dtype, offset };
        offset += entry.nbytes();
        tensors.push(entry);
    }
    let fz = model.featurizer();
    let meta = Metadata {
        architecture: *model.architecture(),
        featurizer: FeaturizerMeta {
            n_buckets: fz.n_buckets,
            use_bigrams: fz.use_bigrams,
            max_tokens: fz.max_tokens,
            hash: HASH_NAME.to_string(),
        },
        classes: model.class_ids().to_vec(),
        precision: model.precision(),
        tensors,
    };
    (serde_json::to_vec(&meta).expect("metadata serializes"), offset)
}

pub(crate) fn container_size<F: Scalar>(model: &ClassifierModel<F>) -> usize {
    let (meta, blobs) = metadata_json(model);
    HEADER_LEN + meta.len() + blobs
}

impl<F: Scalar> ClassifierModel<F> {
    /// Serializes to the container format. Float tensors are stored as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (meta, blob_len) = metadata_json(self);
        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + blob_len);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for (_, _, blob) in named_tensors(self) {
            match blob {
                Blob::F32(values) => {
                    for v in values {
                        out.extend_from_slice(&v.as_f32().to_le_bytes());
                    }
                }
                Blob::I8(values) => out.extend(values.iter().map(|&v| v as u8)),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(ModelError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(ModelError::Truncated("header".into()));
        }
        if bytes[4] != VERSION {
            return Err(ModelError::UnsupportedVersion(bytes[4]));
        }
        let meta_len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        let meta_end = HEADER_LEN + meta_len;
        if bytes.len() < meta_end {
            return Err(ModelError::Truncated("metadata block".into()));
        }
        let meta: Metadata =
            serde_json::from_slice(&bytes[HEADER_LEN..meta_end]).map_err(|e| ModelError::Metadata(e.to_string()))?;
        if meta.featurizer.hash != HASH_NAME {
            return Err(ModelError::UnsupportedHash(meta.featurizer.hash));
        }
        let blobs = &bytes[meta_end..];

        let mut reader = TensorReader { entries: &meta.tensors, next: 0, blobs };
        let want_int8 = meta.precision == Precision::Int8Weights;
        let embedding = reader.weights::<F>("embedding", want_int8)?;
        let mut hidden = Vec::with_capacity(meta.architecture.hidden_layers);
        for i in 0..meta.architecture.hidden_layers {
            let weight = reader.weights::<F>(&format!("hidden.{i}.weight"), want_int8)?;
            let bias = reader.vector::<F>(&format!("hidden.{i}.bias"))?;
            hidden.push(Layer { weight, bias });
        }
        let weight = reader.weights::<F>("output.weight", want_int8)?;
        let bias = reader.vector::<F>("output.bias")?;
        if reader.next != meta.tensors.len() {
            return Err(ModelError::Metadata("unexpected extra tensors".into()));
        }
        let featurizer = FeaturizerConfig {
            n_buckets: meta.featurizer.n_buckets,
            use_bigrams: meta.featurizer.use_bigrams,
            max_tokens: meta.featurizer.max_tokens,
        };
        ClassifierModel::from_parts(meta.architecture, featurizer, meta.classes, embedding, hidden, Layer { weight, bias })
    }
}

struct TensorReader<'a> {
    entries: &'a [TensorEntry],
    next: usize,
    blobs: &'a [u8],
}

impl<'a> TensorReader<'a> {
    fn take(&mut self, name: &str, dtype: Dtype) -> Result<(&'a TensorEntry, &'a [u8]), ModelError> {
        let entry = self
            .entries
            .get(self.next)
            .ok_or_else(|| ModelError::Metadata(format!("missing tensor {name}")))?;
        if entry.name != name || entry.dtype != dtype {
            return Err(ModelError::Metadata(format!("expected {name} ({dtype:?}), found {} ({:?})", entry.name, entry.dtype)));
        }
        self.next += 1;
        let end = entry.offset + entry.nbytes();
        if end > self.blobs.len() {
            return Err(ModelError::Truncated(format!("tensor {name} needs {end} bytes, blob has {}", self.blobs.len())));
        }
        Ok((entry, &self.blobs[entry.offset..end]))
    }

    fn floats<F: Scalar>(raw: &[u8]) -> Vec<F> {
        raw.chunks_exact(4)
            .map(|c| F::of(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
            .collect()
    }

    fn vector<F: Scalar>(&mut self, name: &str) -> Result<Vec<F>, ModelError> {
        let (_, raw) = self.take(name, Dtype::F32)?;
        Ok(Self::floats(raw))
    }

    fn weights<F: Scalar>(&mut self, name: &str, int8: bool) -> Result<Weights<F>, ModelError> {
        let shape_of = |e: &TensorEntry| -> Result<(usize, usize), ModelError> {
            match e.shape.as_slice() {
                [r, c] => Ok((*r, *c)),
                _ => Err(ModelError::Metadata(format!("{} must be 2-d", e.name))),
            }
        };
        if int8 {
            let (entry, raw) = self.take(name, Dtype::I8)?;
            let (rows, cols) = shape_of(entry)?;
            let values = raw.iter().map(|&b| b as i8).collect();
            let (scale_entry, raw_scales) = self.take(&format!("{name}.scales"), Dtype::F32)?;
            if scale_entry.shape != [rows] {
                return Err(ModelError::Metadata(format!("{name}.scales shape")));
            }
            Ok(Weights::Int8(QuantizedMatrix::from_parts(rows, cols, values, Self::floats(raw_scales))))
        } else {
            let (entry, raw) = self.take(name, Dtype::F32)?;
            let (rows, cols) = shape_of(entry)?;
            Ok(Weights::Float(Matrix::from_vec(rows, cols, Self::floats(raw))))
        }
    }
}

pub fn save_model<F: Scalar>(model: &ClassifierModel<F>, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_model<F: Scalar>(path: impl AsRef<Path>) -> Result<ClassifierModel<F>, ModelError> {
    ClassifierModel::from_bytes(&std::fs::read(path)?)
}

/// Content hash identifying a container: first 16 hex digits of SHA-256.
pub fn model_version(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
