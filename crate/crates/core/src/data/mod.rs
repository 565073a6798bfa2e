//! Domain types shared across the pipeline plus readers/writers for every
//! on-disk artifact (JSONL manifests and annotations, CSV label matrices and
//! label tables, the binary feature store).
//!
//! Ordering is canonical everywhere: a manifest fixes the location order and
//! every downstream artifact (label matrix, pseudo-labels, features, ground
//! truth) aligns to it positionally.

mod annotations;
mod feature_store;
mod label_matrix;
mod manifest;
mod tables;

pub use annotations::read_annotations;
pub use feature_store::{read_feature_store, write_feature_store};
pub use label_matrix::{read_label_matrix, write_label_matrix};
pub use manifest::{read_manifest, write_manifest};
pub use tables::{
    read_ground_truth, read_pseudo_labels, write_ground_truth, write_pseudo_labels,
};

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the `p_neg + p_pos = 1` normalization invariant.
pub const DISTRIBUTION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}: {message}")]
    JsonLine { line: usize, message: String },
    #[error("inconsistent image count at line {line}: expected {expected} images, found {found}")]
    InconsistentImageCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate location_id '{id}'")]
    DuplicateLocationId { id: String },
    #[error("location id must be non-empty")]
    EmptyLocationId,
    #[error("location id '{id}' must not contain commas or newlines")]
    CsvUnsafeLocationId { id: String },
    #[error("record for '{id}' has no images")]
    NoImages { id: String },
    #[error("image '{path}' has non-positive gsd_cm {gsd}")]
    NonPositiveGsd { path: String, gsd: f64 },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("empty or missing header")]
    EmptyHeader,
    #[error("unexpected header '{found}'")]
    BadHeader { found: String },
    #[error("truncated header: expected 16 bytes, found {found}")]
    TruncatedHeader { found: usize },
    #[error("invalid vote token '{token}' at line {line}")]
    InvalidVoteToken { token: String, line: usize },
    #[error("invalid label token '{token}' at line {line}: expected 0 or 1")]
    InvalidLabelToken { token: String, line: usize },
    #[error("invalid number '{token}' at line {line}")]
    InvalidNumber { token: String, line: usize },
    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate labeling-function name '{name}'")]
    DuplicateLfName { name: String },
    #[error("labeling-function name '{name}' must be non-empty without commas or newlines")]
    InvalidLfName { name: String },
    #[error("bad magic bytes: expected 'EGF1'")]
    BadMagic,
    #[error("expected {expected} payload bytes, found {found}")]
    PayloadLength { expected: u64, found: u64 },
    #[error("sidecar lists {ids} location ids, header says {rows}")]
    IdCountMismatch { ids: usize, rows: usize },
    #[error("non-finite feature value at index {index}")]
    NonFiniteFeature { index: usize },
    #[error("location '{location}' labeler '{labeler}': score {score} outside 0-4")]
    ScoreOutOfRange {
        location: String,
        labeler: String,
        score: i64,
    },
    #[error("location '{location}' labeler '{labeler}': expected {expected} scores, found {found}")]
    ScoreCountMismatch {
        location: String,
        labeler: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid class distribution ({p_neg}, {p_pos}): probabilities must lie in [0,1] and sum to 1")]
    InvalidDistribution { p_neg: f64, p_pos: f64 },
    #[error("length mismatch: {left} ids vs {right} entries")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension overflow: {rows} x {images} x {dim} does not fit in memory bounds")]
    DimensionOverflow {
        rows: usize,
        images: usize,
        dim: usize,
    },
}

fn check_unique(ids: &[LocationId]) -> Result<(), DataError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id) {
            return Err(DataError::DuplicateLocationId { id: id.to_string() });
        }
    }
    Ok(())
}

/// Identifier of one agricultural location, unique within a dataset.
///
/// Ids must be CSV-safe (non-empty, no commas or newlines) so they can appear
/// verbatim in every tabular artifact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LocationId(String);

impl LocationId {
    pub fn new(id: impl Into<String>) -> Result<Self, DataError> {
        let id = id.into();
        if id.is_empty() {
            return Err(DataError::EmptyLocationId);
        }
        if id.contains(',') || id.contains('\n') || id.contains('\r') {
            return Err(DataError::CsvUnsafeLocationId { id });
        }
        Ok(LocationId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LocationId {
    type Error = DataError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        LocationId::new(value)
    }
}

impl From<LocationId> for String {
    fn from(id: LocationId) -> String {
        id.0
    }
}

impl std::fmt::Display for LocationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Reference to one remotely sensed image of a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRef {
    /// Path or URI of the image payload.
    pub path: String,
    /// Ground sample distance in centimeters per pixel; must be positive.
    pub gsd_cm: f64,
    pub year: i32,
}

/// One location together with its temporal image series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationRecord {
    pub location_id: LocationId,
    pub images: Vec<ImageRef>,
}

impl LocationRecord {
    fn validate(&self) -> Result<(), DataError> {
        if self.images.is_empty() {
            return Err(DataError::NoImages {
                id: self.location_id.to_string(),
            });
        }
        for image in &self.images {
            if !(image.gsd_cm.is_finite() && image.gsd_cm > 0.0) {
                return Err(DataError::NonPositiveGsd {
                    path: image.path.clone(),
                    gsd: image.gsd_cm,
                });
            }
        }
        Ok(())
    }
}

/// Ordered collection of locations; the canonical ordering for a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    records: Vec<LocationRecord>,
    n_images: usize,
}

impl DatasetManifest {
    /// Builds a manifest, enforcing id uniqueness and a uniform image count.
    pub fn new(records: Vec<LocationRecord>) -> Result<Self, DataError> {
        let first = records.first().ok_or(DataError::EmptyManifest)?;
        let n_images = first.images.len();
        let mut seen = HashSet::with_capacity(records.len());
        for (idx, record) in records.iter().enumerate() {
            record.validate()?;
            if record.images.len() != n_images {
                return Err(DataError::InconsistentImageCount {
                    line: idx + 1,
                    expected: n_images,
                    found: record.images.len(),
                });
            }
            if !seen.insert(record.location_id.clone()) {
                return Err(DataError::DuplicateLocationId {
                    id: record.location_id.to_string(),
                });
            }
        }
        Ok(DatasetManifest { records, n_images })
    }

    pub fn records(&self) -> &[LocationRecord] {
        &self.records
    }

    /// Images per location; uniform across records.
    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn location_ids(&self) -> Vec<LocationId> {
        self.records.iter().map(|r| r.location_id.clone()).collect()
    }
}

/// A weak vote from one labeling function: abstain or one of the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WeakLabel {
    Abstain,
    Negative,
    Positive,
}

impl WeakLabel {
    /// CSV cell encoding: `-1` abstain, `0` negative, `1` positive.
    pub fn to_token(self) -> &'static str {
        match self {
            WeakLabel::Abstain => "-1",
            WeakLabel::Negative => "0",
            WeakLabel::Positive => "1",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "-1" => Some(WeakLabel::Abstain),
            "0" => Some(WeakLabel::Negative),
            "1" => Some(WeakLabel::Positive),
            _ => None,
        }
    }

    pub fn is_abstain(self) -> bool {
        self == WeakLabel::Abstain
    }
}

/// A committed binary class; the positive class marks gully presence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Negative,
    Positive,
}

impl ClassLabel {
    pub fn to_token(self) -> &'static str {
        match self {
            ClassLabel::Negative => "0",
            ClassLabel::Positive => "1",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "0" => Some(ClassLabel::Negative),
            "1" => Some(ClassLabel::Positive),
            _ => None,
        }
    }

    pub fn to_weak(self) -> WeakLabel {
        match self {
            ClassLabel::Negative => WeakLabel::Negative,
            ClassLabel::Positive => WeakLabel::Positive,
        }
    }

    pub fn flipped(self) -> ClassLabel {
        match self {
            ClassLabel::Negative => ClassLabel::Positive,
            ClassLabel::Positive => ClassLabel::Negative,
        }
    }
}

impl From<ClassLabel> for WeakLabel {
    fn from(label: ClassLabel) -> WeakLabel {
        label.to_weak()
    }
}

/// K x m grid of weak votes, rows in manifest order, one column per
/// labeling function.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    location_ids: Vec<LocationId>,
    lf_names: Vec<String>,
    votes: Vec<WeakLabel>,
}

fn validate_lf_name(name: &str) -> Result<(), DataError> {
    if name.is_empty() || name.contains(',') || name.contains('\n') || name.contains('\r') {
        return Err(DataError::InvalidLfName {
            name: name.to_string(),
        });
    }
    Ok(())
}

impl LabelMatrix {
    /// Builds a matrix from row-major votes (`votes.len() == ids.len() * lf_names.len()`).
    pub fn new(
        location_ids: Vec<LocationId>,
        lf_names: Vec<String>,
        votes: Vec<WeakLabel>,
    ) -> Result<Self, DataError> {
        let expected = location_ids.len() * lf_names.len();
        if votes.len() != expected {
            return Err(DataError::LengthMismatch {
                left: expected,
                right: votes.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &lf_names {
            validate_lf_name(name)?;
            if !seen.insert(name.clone()) {
                return Err(DataError::DuplicateLfName { name: name.clone() });
            }
        }
        check_unique(&location_ids)?;
        Ok(LabelMatrix {
            location_ids,
            lf_names,
            votes,
        })
    }

    pub fn n_locations(&self) -> usize {
        self.location_ids.len()
    }

    pub fn n_lfs(&self) -> usize {
        self.lf_names.len()
    }

    pub fn location_ids(&self) -> &[LocationId] {
        &self.location_ids
    }

    pub fn lf_names(&self) -> &[String] {
        &self.lf_names
    }

    pub fn row(&self, k: usize) -> &[WeakLabel] {
        let m = self.lf_names.len();
        &self.votes[k * m..(k + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[WeakLabel]> + '_ {
        (0..self.location_ids.len()).map(|k| self.row(k))
    }

    pub fn column(&self, j: usize) -> Vec<WeakLabel> {
        let m = self.lf_names.len();
        self.votes.iter().skip(j).step_by(m).copied().collect()
    }

    pub fn lf_index(&self, name: &str) -> Option<usize> {
        self.lf_names.iter().position(|n| n == name)
    }
}

/// Probabilistic label over the two classes; always normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassDistribution {
    p_neg: f64,
    p_pos: f64,
}

impl ClassDistribution {
    pub fn new(p_neg: f64, p_pos: f64) -> Result<Self, DataError> {
        let in_range = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !in_range(p_neg) || !in_range(p_pos) || (p_neg + p_pos - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(DataError::InvalidDistribution { p_neg, p_pos });
        }
        Ok(ClassDistribution { p_neg, p_pos })
    }

    pub fn uniform() -> Self {
        ClassDistribution {
            p_neg: 0.5,
            p_pos: 0.5,
        }
    }

    /// One-hot mass on the given class.
    pub fn certain(label: ClassLabel) -> Self {
        match label {
            ClassLabel::Negative => ClassDistribution {
                p_neg: 1.0,
                p_pos: 0.0,
            },
            ClassLabel::Positive => ClassDistribution {
                p_neg: 0.0,
                p_pos: 1.0,
            },
        }
    }

    pub fn p_neg(&self) -> f64 {
        self.p_neg
    }

    pub fn p_pos(&self) -> f64 {
        self.p_pos
    }
}

/// Probabilistic pseudo-labels for a dataset, aligned to manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    location_ids: Vec<LocationId>,
    distributions: Vec<ClassDistribution>,
}

impl PseudoLabelSet {
    pub fn new(
        location_ids: Vec<LocationId>,
        distributions: Vec<ClassDistribution>,
    ) -> Result<Self, DataError> {
        if location_ids.len() != distributions.len() {
            return Err(DataError::LengthMismatch {
                left: location_ids.len(),
                right: distributions.len(),
            });
        }
        check_unique(&location_ids)?;
        Ok(PseudoLabelSet {
            location_ids,
            distributions,
        })
    }

    pub fn len(&self) -> usize {
        self.location_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.location_ids.is_empty()
    }

    pub fn location_ids(&self) -> &[LocationId] {
        &self.location_ids
    }

    pub fn distributions(&self) -> &[ClassDistribution] {
        &self.distributions
    }
}

/// Per-image 0-4 confidence scores from one labeler for one location.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertAnnotation {
    pub location_id: LocationId,
    pub labeler_id: String,
    pub scores: Vec<u8>,
}

impl ExpertAnnotation {
    pub fn new(
        location_id: LocationId,
        labeler_id: String,
        scores: Vec<i64>,
    ) -> Result<Self, DataError> {
        let mut checked = Vec::with_capacity(scores.len());
        for &score in &scores {
            if !(0..=4).contains(&score) {
                return Err(DataError::ScoreOutOfRange {
                    location: location_id.to_string(),
                    labeler: labeler_id.clone(),
                    score,
                });
            }
            checked.push(score as u8);
        }
        Ok(ExpertAnnotation {
            location_id,
            labeler_id,
            scores: checked,
        })
    }
}

/// Committed binary labels for an ordered list of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSet {
    location_ids: Vec<LocationId>,
    labels: Vec<ClassLabel>,
}

impl GroundTruthSet {
    pub fn new(
        location_ids: Vec<LocationId>,
        labels: Vec<ClassLabel>,
    ) -> Result<Self, DataError> {
        if location_ids.len() != labels.len() {
            return Err(DataError::LengthMismatch {
                left: location_ids.len(),
                right: labels.len(),
            });
        }
        check_unique(&location_ids)?;
        Ok(GroundTruthSet {
            location_ids,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.location_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.location_ids.is_empty()
    }

    pub fn location_ids(&self) -> &[LocationId] {
        &self.location_ids
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }
}

/// Precomputed per-image feature vectors standing in for the vision backbone.
///
/// Layout is location-major, image-second, feature-innermost; values are
/// 32-bit floats and must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    location_ids: Vec<LocationId>,
    n_images: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureStore {
    pub fn new(
        location_ids: Vec<LocationId>,
        n_images: usize,
        dim: usize,
        values: Vec<f32>,
    ) -> Result<Self, DataError> {
        let rows = location_ids.len();
        let expected = rows
            .checked_mul(n_images)
            .and_then(|x| x.checked_mul(dim))
            .ok_or(DataError::DimensionOverflow {
                rows,
                images: n_images,
                dim,
            })?;
        if values.len() != expected {
            return Err(DataError::LengthMismatch {
                left: expected,
                right: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteFeature { index });
        }
        check_unique(&location_ids)?;
        Ok(FeatureStore {
            location_ids,
            n_images,
            dim,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.location_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.location_ids.is_empty()
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn location_ids(&self) -> &[LocationId] {
        &self.location_ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Concatenated feature vector of one location (length `n_images * dim`).
    pub fn location_features(&self, k: usize) -> &[f32] {
        let stride = self.n_images * self.dim;
        &self.values[k * stride..(k + 1) * stride]
    }
}
