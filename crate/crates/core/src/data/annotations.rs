//! Expert annotation JSONL: one object per line with `location_id`,
//! `labeler_id` and a fixed-length array of 0-4 confidence scores.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{DataError, ExpertAnnotation, LocationId};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnnotation {
    location_id: String,
    labeler_id: String,
    scores: Vec<i64>,
}

/// Reads every annotation in file order. Multiple labelers per location are
/// preserved as separate entries. Score lists must all have the same length
/// (the first line fixes it); equality with a manifest's image count is
/// checked where annotations meet a manifest.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<ExpertAnnotation>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut annotations = Vec::new();
    let mut expected_len = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAnnotation = serde_json::from_str(line).map_err(|e| DataError::JsonLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let location_id = LocationId::new(raw.location_id)?;
        let expected = *expected_len.get_or_insert(raw.scores.len());
        if raw.scores.len() != expected {
            return Err(DataError::ScoreCountMismatch {
                location: location_id.to_string(),
                labeler: raw.labeler_id,
                expected,
                found: raw.scores.len(),
            });
        }
        annotations.push(ExpertAnnotation::new(
            location_id,
            raw.labeler_id,
            raw.scores,
        )?);
    }
    Ok(annotations)
}
