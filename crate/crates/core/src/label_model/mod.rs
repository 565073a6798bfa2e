//! Generative label model over (votes, class) pairs.
//!
//! Each location's weak votes and latent class are scored by three factor
//! families: per-LF labeling propensity (vote is not an abstain), per-LF
//! accuracy (vote equals the latent class) and pairwise agreement for a
//! user-supplied set of LF pairs. Weights are fit by minimizing the negative
//! log marginal likelihood of the observed vote matrix with the class summed
//! out; the fitted conditional then yields probabilistic pseudo-labels.
//!
//! Inference is exact: the partition function and model expectations factorize
//! over connected components of the correlation graph, with each component
//! enumerated over its vote configurations.

mod featurize;
mod fit;
mod infer;
mod objective;
mod partition;

pub use featurize::featurize;
pub use fit::fit;
pub use infer::majority_vote;
pub use objective::{nll, nll_gradient};
pub use partition::{brute_force_partition, partition_function};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassDistribution, LabelMatrix, PseudoLabelSet, WeakLabel};
use crate::fsutil::write_atomic;

#[derive(Debug, Error)]
pub enum LabelModelError {
    #[error("no signal to fit: every vote in the matrix is an abstain")]
    NoSignal,
    #[error("label matrix has no rows")]
    EmptyMatrix,
    #[error(
        "correlation component of size {size} exceeds max_component_size {limit}; \
         raise max_component_size to enumerate it"
    )]
    ComponentTooLarge { size: usize, limit: usize },
    #[error("brute-force enumeration supports at most {limit} labeling functions, got {m}")]
    BruteForceTooLarge { m: usize, limit: usize },
    #[error("correlation pair ({j}, {d}) must satisfy j < d")]
    UnorderedCorrelationPair { j: usize, d: usize },
    #[error("duplicate correlation pair ({j}, {d})")]
    DuplicateCorrelationPair { j: usize, d: usize },
    #[error("correlation pair ({j}, {d}) is out of range for {m} labeling functions")]
    CorrelationPairOutOfRange { j: usize, d: usize, m: usize },
    #[error(
        "weight dimensions (lab={lab}, acc={acc}, corr={corr}) do not match \
         m={m} labeling functions with {pairs} correlation pairs"
    )]
    WeightDimensionMismatch {
        lab: usize,
        acc: usize,
        corr: usize,
        m: usize,
        pairs: usize,
    },
    #[error("label matrix has {matrix} columns but the model expects {model}")]
    ColumnCountMismatch { matrix: usize, model: usize },
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("learning rate must be positive and finite")]
    BadLearningRate,
    #[error("non-finite weight encountered")]
    NonFiniteWeight,
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// User-declared LF pairs whose agreement the model scores.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct CorrelationSet {
    pairs: Vec<(usize, usize)>,
}

impl CorrelationSet {
    pub fn empty() -> Self {
        CorrelationSet::default()
    }

    /// Pairs must be ordered (`j < d`) and unique.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self, LabelModelError> {
        for (idx, &(j, d)) in pairs.iter().enumerate() {
            if j >= d {
                return Err(LabelModelError::UnorderedCorrelationPair { j, d });
            }
            if pairs[..idx].contains(&(j, d)) {
                return Err(LabelModelError::DuplicateCorrelationPair { j, d });
            }
        }
        Ok(CorrelationSet { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub(crate) fn validate_for(&self, m: usize) -> Result<(), LabelModelError> {
        for &(j, d) in &self.pairs {
            if d >= m {
                return Err(LabelModelError::CorrelationPairOutOfRange { j, d, m });
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<(usize, usize)>> for CorrelationSet {
    type Error = LabelModelError;
    fn try_from(pairs: Vec<(usize, usize)>) -> Result<Self, Self::Error> {
        CorrelationSet::new(pairs)
    }
}

impl From<CorrelationSet> for Vec<(usize, usize)> {
    fn from(set: CorrelationSet) -> Self {
        set.pairs
    }
}

/// Learnable weights for the three factor families.
///
/// The flat layout used by the optimizer and by `featurize` is
/// `[lab_1..lab_m, acc_1..acc_m, corr_1..corr_|C|]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorWeights {
    pub w_lab: Vec<f64>,
    pub w_acc: Vec<f64>,
    pub w_corr: Vec<f64>,
}

impl FactorWeights {
    pub fn zeros(m: usize, n_corr: usize) -> Self {
        FactorWeights {
            w_lab: vec![0.0; m],
            w_acc: vec![0.0; m],
            w_corr: vec![0.0; n_corr],
        }
    }

    pub fn n_lfs(&self) -> usize {
        self.w_acc.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.w_lab.len() + self.w_acc.len() + self.w_corr.len());
        flat.extend_from_slice(&self.w_lab);
        flat.extend_from_slice(&self.w_acc);
        flat.extend_from_slice(&self.w_corr);
        flat
    }

    pub fn from_flat(flat: &[f64], m: usize, n_corr: usize) -> Self {
        assert_eq!(flat.len(), 2 * m + n_corr);
        FactorWeights {
            w_lab: flat[..m].to_vec(),
            w_acc: flat[m..2 * m].to_vec(),
            w_corr: flat[2 * m..].to_vec(),
        }
    }

    pub(crate) fn validate(&self, correlations: &CorrelationSet) -> Result<(), LabelModelError> {
        let m = self.w_lab.len();
        if self.w_acc.len() != m || self.w_corr.len() != correlations.len() {
            return Err(LabelModelError::WeightDimensionMismatch {
                lab: self.w_lab.len(),
                acc: self.w_acc.len(),
                corr: self.w_corr.len(),
                m,
                pairs: correlations.len(),
            });
        }
        correlations.validate_for(m)?;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.w_lab) || !finite(&self.w_acc) || !finite(&self.w_corr) {
            return Err(LabelModelError::NonFiniteWeight);
        }
        Ok(())
    }
}

/// Fitting configuration. The optimizer is Adam (beta1=0.9, beta2=0.999,
/// eps=1e-8), full batch, so fitting is deterministic; `seed` is carried for
/// interface stability but unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelModelConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub correlations: CorrelationSet,
    pub max_component_size: usize,
}

impl Default for LabelModelConfig {
    fn default() -> Self {
        LabelModelConfig {
            epochs: 100,
            learning_rate: 0.01,
            seed: 0,
            correlations: CorrelationSet::empty(),
            max_component_size: 12,
        }
    }
}

impl LabelModelConfig {
    pub fn validate(&self) -> Result<(), LabelModelError> {
        if self.epochs == 0 {
            return Err(LabelModelError::ZeroEpochs);
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(LabelModelError::BadLearningRate);
        }
        Ok(())
    }
}

/// A fitted label model ready to produce pseudo-labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLabelModel {
    pub lf_names: Vec<String>,
    pub weights: FactorWeights,
    pub correlations: CorrelationSet,
    pub final_nll: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    lf_names: Vec<String>,
    w_lab: Vec<f64>,
    w_acc: Vec<f64>,
    corr_pairs: Vec<(usize, usize)>,
    w_corr: Vec<f64>,
    final_nll: f64,
}

impl TrainedLabelModel {
    pub fn n_lfs(&self) -> usize {
        self.lf_names.len()
    }

    /// Posterior class distribution for one votes row.
    ///
    /// Labeling and agreement factors do not depend on the class, so they
    /// cancel in the conditional; only accuracy weights of non-abstaining LFs
    /// remain. Both probabilities are computed through the logistic function
    /// so that negating every accuracy weight swaps them bit-for-bit.
    pub fn predict_proba(&self, votes: &[WeakLabel]) -> ClassDistribution {
        assert_eq!(
            votes.len(),
            self.n_lfs(),
            "votes row length {} does not match model with {} labeling functions",
            votes.len(),
            self.n_lfs()
        );
        let mut score = 0.0;
        for (vote, w_acc) in votes.iter().zip(&self.weights.w_acc) {
            match vote {
                WeakLabel::Positive => score += w_acc,
                WeakLabel::Negative => score -= w_acc,
                WeakLabel::Abstain => {}
            }
        }
        let p_pos = sigmoid(score);
        let p_neg = sigmoid(-score);
        ClassDistribution::new(p_neg, p_pos).expect("sigmoid pair is normalized")
    }

    /// Pseudo-labels for every row of the matrix, in matrix order.
    pub fn predict_all(&self, matrix: &LabelMatrix) -> Result<PseudoLabelSet, LabelModelError> {
        if matrix.n_lfs() != self.n_lfs() {
            return Err(LabelModelError::ColumnCountMismatch {
                matrix: matrix.n_lfs(),
                model: self.n_lfs(),
            });
        }
        let distributions = matrix.rows().map(|row| self.predict_proba(row)).collect();
        Ok(PseudoLabelSet::new(matrix.location_ids().to_vec(), distributions)
            .expect("matrix rows align with ids"))
    }

    pub fn to_json(&self) -> String {
        let doc = CheckpointDoc {
            lf_names: self.lf_names.clone(),
            w_lab: self.weights.w_lab.clone(),
            w_acc: self.weights.w_acc.clone(),
            corr_pairs: self.correlations.pairs().to_vec(),
            w_corr: self.weights.w_corr.clone(),
            final_nll: self.final_nll,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, LabelModelError> {
        let doc: CheckpointDoc =
            serde_json::from_str(text).map_err(|e| LabelModelError::Checkpoint {
                path: origin.to_path_buf(),
                message: e.to_string(),
            })?;
        let correlations =
            CorrelationSet::new(doc.corr_pairs).map_err(|e| LabelModelError::Checkpoint {
                path: origin.to_path_buf(),
                message: e.to_string(),
            })?;
        let model = TrainedLabelModel {
            lf_names: doc.lf_names,
            weights: FactorWeights {
                w_lab: doc.w_lab,
                w_acc: doc.w_acc,
                w_corr: doc.w_corr,
            },
            correlations,
            final_nll: doc.final_nll,
        };
        if model.weights.n_lfs() != model.lf_names.len() {
            return Err(LabelModelError::Checkpoint {
                path: origin.to_path_buf(),
                message: format!(
                    "{} lf_names but {} accuracy weights",
                    model.lf_names.len(),
                    model.weights.n_lfs()
                ),
            });
        }
        model
            .weights
            .validate(&model.correlations)
            .map_err(|e| LabelModelError::Checkpoint {
                path: origin.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LabelModelError> {
        let path = path.as_ref();
        write_atomic(path, self.to_json().as_bytes()).map_err(|source| LabelModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LabelModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LabelModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        TrainedLabelModel::from_json(&text, path)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
