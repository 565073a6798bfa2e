//! Baseline vote aggregation and inference helpers.

use crate::data::{ClassLabel, GroundTruthSet, LabelMatrix, WeakLabel};

/// Per-row majority vote over non-abstaining LFs.
///
/// Ties and all-abstain rows resolve to Positive: a missed gully costs more
/// than a false alarm, so ambiguity leans positive throughout the pipeline.
pub fn majority_vote(matrix: &LabelMatrix) -> GroundTruthSet {
    let labels = matrix
        .rows()
        .map(|row| {
            let pos = row.iter().filter(|&&v| v == WeakLabel::Positive).count();
            let neg = row.iter().filter(|&&v| v == WeakLabel::Negative).count();
            if pos >= neg {
                ClassLabel::Positive
            } else {
                ClassLabel::Negative
            }
        })
        .collect();
    GroundTruthSet::new(matrix.location_ids().to_vec(), labels)
        .expect("one label per matrix row")
}
