//! Student classifier: an MLP over concatenated per-image features, trained
//! on probabilistic pseudo-labels with a noise-aware KL loss, plus the
//! ground-sample-distance patch-size rule for the vision backbone.

mod net;
mod train;

pub use net::{loss_gradient, noise_aware_loss, MlpGradients};
pub use train::{train_student, TrainedStudent};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassDistribution, FeatureStore};
use crate::fsutil::write_atomic;

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("layer_dims needs at least an input and an output entry")]
    TooFewLayers,
    #[error("output layer must have 2 units, got {0}")]
    BadOutputDim(usize),
    #[error("layer dimensions must be positive")]
    ZeroLayerDim,
    #[error("feature vectors have length {found}, input layer expects {expected}")]
    InputDimMismatch { expected: usize, found: usize },
    #[error("features and targets misaligned at row {index}: '{left}' vs '{right}'")]
    IdMisalignment {
        index: usize,
        left: String,
        right: String,
    },
    #[error("features have {left} locations, targets have {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("batch_size must be at least 1")]
    ZeroBatchSize,
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("learning rate must be positive and finite")]
    BadLearningRate,
    #[error("empty batch")]
    EmptyBatch,
    #[error("patch-size inputs must be positive and finite")]
    NonPositivePatchInput,
    #[error("patch size does not fit in u32")]
    PatchSizeOverflow,
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Network architecture: `layer_dims = [input, hidden..., 2]`. Hidden layers
/// use the rectifier; the output is a 2-way softmax. The default
/// architecture is the bare `[input, 2]` linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), StudentError> {
        if self.layer_dims.len() < 2 {
            return Err(StudentError::TooFewLayers);
        }
        if self.layer_dims.contains(&0) {
            return Err(StudentError::ZeroLayerDim);
        }
        let last = *self.layer_dims.last().expect("nonempty");
        if last != 2 {
            return Err(StudentError::BadOutputDim(last));
        }
        Ok(())
    }
}

fn default_learning_rate() -> f64 {
    1e-3
}

/// Minibatch Adam training setup with a seeded per-epoch shuffle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 30,
            batch_size: 128,
            learning_rate: default_learning_rate(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), StudentError> {
        if self.batch_size == 0 {
            return Err(StudentError::ZeroBatchSize);
        }
        if self.epochs == 0 {
            return Err(StudentError::ZeroEpochs);
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(StudentError::BadLearningRate);
        }
        Ok(())
    }
}

/// Network parameters, stored flat: for each layer, a row-major
/// `rows x cols` weight matrix followed by its bias vector, where `rows` is
/// the output width and `cols` the input width.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    flat: Vec<f64>,
}

pub(crate) struct LayerView<'a> {
    pub weights: &'a [f64],
    pub bias: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, deterministic in `config.seed`.
    pub fn init(config: &MlpConfig) -> Result<Self, StudentError> {
        use rand::{Rng, SeedableRng};
        config.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let mut flat = Vec::with_capacity(Self::flat_len(&config.layer_dims));
        for window in config.layer_dims.windows(2) {
            let (cols, rows) = (window[0], window[1]);
            let limit = (6.0 / (cols + rows) as f64).sqrt();
            for _ in 0..rows * cols {
                flat.push(rng.random_range(-limit..limit));
            }
            flat.extend(std::iter::repeat_n(0.0, rows));
        }
        Ok(MlpParams {
            layer_dims: config.layer_dims.clone(),
            flat,
        })
    }

    pub fn zeros(layer_dims: &[usize]) -> Self {
        MlpParams {
            layer_dims: layer_dims.to_vec(),
            flat: vec![0.0; Self::flat_len(layer_dims)],
        }
    }

    fn flat_len(layer_dims: &[usize]) -> usize {
        layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Raw parameter buffer in checkpoint layout (weights then bias, per
    /// layer); the gradient buffer mirrors it index for index.
    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub(crate) fn layer(&self, index: usize) -> LayerView<'_> {
        let mut offset = 0;
        for w in self.layer_dims.windows(2).take(index) {
            offset += w[0] * w[1] + w[1];
        }
        let cols = self.layer_dims[index];
        let rows = self.layer_dims[index + 1];
        LayerView {
            weights: &self.flat[offset..offset + rows * cols],
            bias: &self.flat[offset + rows * cols..offset + rows * cols + rows],
            rows,
            cols,
        }
    }

    /// Class distribution for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<ClassDistribution, StudentError> {
        if input.len() != self.input_dim() {
            return Err(StudentError::InputDimMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        let logits = self.logits(input);
        let probs = softmax2(logits);
        Ok(ClassDistribution::new(probs[0], probs[1]).expect("softmax is normalized"))
    }

    /// Raw output logits `(negative, positive)`.
    pub(crate) fn logits(&self, input: &[f64]) -> [f64; 2] {
        let mut activation = input.to_vec();
        for index in 0..self.n_layers() {
            let layer = self.layer(index);
            let mut next = vec![0.0; layer.rows];
            for (i, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
                let mut z = layer.bias[i];
                for (w, x) in row.iter().zip(&activation) {
                    z += w * x;
                }
                *out = z;
            }
            if index + 1 < self.n_layers() {
                for z in &mut next {
                    *z = z.max(0.0);
                }
            }
            activation = next;
        }
        [activation[0], activation[1]]
    }

    /// Distributions for every location in a feature store, in store order.
    pub fn forward_store(
        &self,
        store: &FeatureStore,
    ) -> Result<Vec<ClassDistribution>, StudentError> {
        let width = store.n_images() * store.dim();
        if width != self.input_dim() {
            return Err(StudentError::InputDimMismatch {
                expected: self.input_dim(),
                found: width,
            });
        }
        (0..store.len())
            .map(|k| {
                let features: Vec<f64> = store
                    .location_features(k)
                    .iter()
                    .map(|&v| v as f64)
                    .collect();
                self.forward(&features)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let layers: Vec<LayerDoc> = (0..self.n_layers())
            .map(|i| {
                let layer = self.layer(i);
                LayerDoc {
                    rows: layer.rows,
                    cols: layer.cols,
                    weights: layer.weights.to_vec(),
                    bias: layer.bias.to_vec(),
                }
            })
            .collect();
        serde_json::to_string(&CheckpointDoc {
            layer_dims: self.layer_dims.clone(),
            layers,
        })
        .expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, StudentError> {
        let fail = |message: String| StudentError::Checkpoint {
            path: origin.to_path_buf(),
            message,
        };
        let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
        let config = MlpConfig {
            layer_dims: doc.layer_dims.clone(),
            seed: 0,
        };
        config.validate().map_err(|e| fail(e.to_string()))?;
        if doc.layers.len() != doc.layer_dims.len() - 1 {
            return Err(fail(format!(
                "{} layers for {} layer_dims entries",
                doc.layers.len(),
                doc.layer_dims.len()
            )));
        }
        let mut flat = Vec::with_capacity(Self::flat_len(&doc.layer_dims));
        for (i, layer) in doc.layers.iter().enumerate() {
            let (cols, rows) = (doc.layer_dims[i], doc.layer_dims[i + 1]);
            if layer.rows != rows || layer.cols != cols {
                return Err(fail(format!(
                    "layer {i} is {}x{}, expected {rows}x{cols}",
                    layer.rows, layer.cols
                )));
            }
            if layer.weights.len() != rows * cols || layer.bias.len() != rows {
                return Err(fail(format!("layer {i} payload lengths are wrong")));
            }
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite parameter".into()));
        }
        Ok(MlpParams {
            layer_dims: doc.layer_dims,
            flat,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StudentError> {
        let path = path.as_ref();
        write_atomic(path, self.to_json().as_bytes()).map_err(|source| StudentError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StudentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| StudentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        MlpParams::from_json(&text, path)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    layer_dims: Vec<usize>,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Two-way softmax with max subtraction, stable for extreme logits.
pub(crate) fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let max = logits[0].max(logits[1]);
    let e0 = (logits[0] - max).exp();
    let e1 = (logits[1] - max).exp();
    let sum = e0 + e1;
    [e0 / sum, e1 / sum]
}

/// Patch edge length (pixels) that covers the same ground extent at `gsd_cm`
/// as `ref_patch_px` does at `ref_gsd_cm`. Rounds half away from zero and
/// never returns less than one pixel.
pub fn patch_size_for_gsd(
    gsd_cm: f64,
    ref_gsd_cm: f64,
    ref_patch_px: u32,
) -> Result<u32, StudentError> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(gsd_cm) || !positive(ref_gsd_cm) || ref_patch_px == 0 {
        return Err(StudentError::NonPositivePatchInput);
    }
    let exact = ref_patch_px as f64 * ref_gsd_cm / gsd_cm;
    let rounded = exact.round().max(1.0);
    if rounded > u32::MAX as f64 {
        return Err(StudentError::PatchSizeOverflow);
    }
    Ok(rounded as u32)
}
