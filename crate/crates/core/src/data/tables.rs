//! Simple per-location CSV tables: ground truth (`location_id,label`) and
//! pseudo-labels (`location_id,p_neg,p_pos`).
//!
//! Floats are written in Rust's shortest round-trip form, so read(write(x))
//! reproduces every bit.

use std::fs;
use std::path::Path;

use super::{ClassDistribution, ClassLabel, DataError, GroundTruthSet, LocationId, PseudoLabelSet};
use crate::fsutil::write_atomic;

const GT_HEADER: &str = "location_id,label";
const PSEUDO_HEADER: &str = "location_id,p_neg,p_pos";

fn split_rows(text: &str, header: &str, cells: usize) -> Result<Vec<Vec<String>>, DataError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == header => {}
        Some("") | None => return Err(DataError::EmptyHeader),
        Some(other) => {
            return Err(DataError::BadHeader {
                found: other.to_string(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<String> = line.split(',').map(str::to_string).collect();
        if parts.len() != cells {
            return Err(DataError::RaggedRow {
                line: idx + 1,
                expected: cells,
                found: parts.len(),
            });
        }
        rows.push(parts);
    }
    Ok(rows)
}

pub fn write_ground_truth(gt: &GroundTruthSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::from(GT_HEADER);
    out.push('\n');
    for (id, label) in gt.location_ids().iter().zip(gt.labels()) {
        out.push_str(id.as_str());
        out.push(',');
        out.push_str(label.to_token());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthSet, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (idx, row) in split_rows(&text, GT_HEADER, 2)?.into_iter().enumerate() {
        ids.push(LocationId::new(row[0].clone())?);
        labels.push(
            ClassLabel::from_token(&row[1]).ok_or_else(|| DataError::InvalidLabelToken {
                token: row[1].clone(),
                line: idx + 2,
            })?,
        );
    }
    GroundTruthSet::new(ids, labels)
}

pub fn write_pseudo_labels(
    labels: &PseudoLabelSet,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::from(PSEUDO_HEADER);
    out.push('\n');
    for (id, dist) in labels.location_ids().iter().zip(labels.distributions()) {
        out.push_str(&format!("{},{},{}\n", id, dist.p_neg(), dist.p_pos()));
    }
    write_atomic(path, out.as_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_pseudo_labels(path: impl AsRef<Path>) -> Result<PseudoLabelSet, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    let mut distributions = Vec::new();
    for (idx, row) in split_rows(&text, PSEUDO_HEADER, 3)?.into_iter().enumerate() {
        ids.push(LocationId::new(row[0].clone())?);
        let parse = |token: &str| {
            token.parse::<f64>().map_err(|_| DataError::InvalidNumber {
                token: token.to_string(),
                line: idx + 2,
            })
        };
        distributions.push(ClassDistribution::new(parse(&row[1])?, parse(&row[2])?)?);
    }
    PseudoLabelSet::new(ids, distributions)
}
