//! Aggregation of per-image expert confidence scores (0-4) into binary
//! ground-truth labels under four schemes.
//!
//! Score meanings: 0 certain negative, 1 almost certain negative, 2 unsure or
//! irrelevant, 3 almost certain positive, 4 certain positive. Every scheme
//! quantifies over all labelers of a location.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassLabel, DataError, DatasetManifest, ExpertAnnotation, GroundTruthSet, LocationId};

#[derive(Debug, Error)]
pub enum VotingError {
    #[error("location '{id}' has no annotations")]
    MissingAnnotations { id: String },
    #[error("location '{location}' labeler '{labeler}': {found} scores for a manifest with {expected} images")]
    ScoreCountMismatch {
        location: String,
        labeler: String,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VotingScheme {
    StrictPositive,
    LenientPositive,
    LenientNegative,
    StrictNegative,
}

impl VotingScheme {
    pub const ALL: [VotingScheme; 4] = [
        VotingScheme::StrictPositive,
        VotingScheme::LenientPositive,
        VotingScheme::LenientNegative,
        VotingScheme::StrictNegative,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VotingScheme::StrictPositive => "strict-positive",
            VotingScheme::LenientPositive => "lenient-positive",
            VotingScheme::LenientNegative => "lenient-negative",
            VotingScheme::StrictNegative => "strict-negative",
        }
    }
}

impl std::fmt::Display for VotingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for VotingScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VotingScheme::ALL
            .iter()
            .find(|scheme| scheme.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown voting scheme '{s}'"))
    }
}

/// All labelers' score lists for one location. Lists share one length and
/// there is at least one labeler.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationAnnotations {
    pub location_id: LocationId,
    pub per_labeler: Vec<Vec<u8>>,
}

impl LocationAnnotations {
    pub fn new(location_id: LocationId, per_labeler: Vec<Vec<u8>>) -> Result<Self, VotingError> {
        if per_labeler.is_empty() {
            return Err(VotingError::MissingAnnotations {
                id: location_id.to_string(),
            });
        }
        let expected = per_labeler[0].len();
        for scores in &per_labeler {
            if scores.len() != expected {
                return Err(VotingError::ScoreCountMismatch {
                    location: location_id.to_string(),
                    labeler: String::new(),
                    expected,
                    found: scores.len(),
                });
            }
        }
        Ok(LocationAnnotations {
            location_id,
            per_labeler,
        })
    }
}

/// Applies one voting scheme to one location.
///
/// StrictPositive additionally requires a second image scored above 2, so a
/// lone certain image is not enough; that is what separates it from
/// LenientPositive.
pub fn aggregate_location(ann: &LocationAnnotations, scheme: VotingScheme) -> ClassLabel {
    let positive = match scheme {
        VotingScheme::StrictPositive => ann.per_labeler.iter().all(|scores| {
            scores.contains(&4) && scores.iter().filter(|&&s| s > 2).count() >= 2
        }),
        VotingScheme::LenientPositive => ann
            .per_labeler
            .iter()
            .all(|scores| scores.contains(&4)),
        VotingScheme::LenientNegative => !ann
            .per_labeler
            .iter()
            .all(|scores| scores.iter().all(|&s| s <= 1)),
        VotingScheme::StrictNegative => !ann
            .per_labeler
            .iter()
            .all(|scores| scores.iter().all(|&s| s == 0)),
    };
    if positive {
        ClassLabel::Positive
    } else {
        ClassLabel::Negative
    }
}

/// Groups raw annotations by manifest location, preserving labeler
/// multiplicity and manifest order. Annotations for unknown locations are
/// ignored; a manifest location without annotations is an error, as is a
/// score list whose length differs from the manifest image count.
pub fn group_annotations(
    manifest: &DatasetManifest,
    annotations: &[ExpertAnnotation],
) -> Result<Vec<LocationAnnotations>, VotingError> {
    let n_images = manifest.n_images();
    for ann in annotations {
        if ann.scores.len() != n_images {
            return Err(VotingError::ScoreCountMismatch {
                location: ann.location_id.to_string(),
                labeler: ann.labeler_id.clone(),
                expected: n_images,
                found: ann.scores.len(),
            });
        }
    }
    manifest
        .records()
        .iter()
        .map(|record| {
            let per_labeler: Vec<Vec<u8>> = annotations
                .iter()
                .filter(|ann| ann.location_id == record.location_id)
                .map(|ann| ann.scores.clone())
                .collect();
            if per_labeler.is_empty() {
                return Err(VotingError::MissingAnnotations {
                    id: record.location_id.to_string(),
                });
            }
            LocationAnnotations::new(record.location_id.clone(), per_labeler)
        })
        .collect()
}

/// Ground truth for a whole manifest under one scheme, in manifest order.
pub fn build_ground_truth(
    manifest: &DatasetManifest,
    annotations: &[ExpertAnnotation],
    scheme: VotingScheme,
) -> Result<GroundTruthSet, VotingError> {
    let grouped = group_annotations(manifest, annotations)?;
    let labels = grouped
        .iter()
        .map(|ann| aggregate_location(ann, scheme))
        .collect();
    Ok(GroundTruthSet::new(manifest.location_ids(), labels)?)
}
