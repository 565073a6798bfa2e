//! Manifest JSONL: one `LocationRecord` object per line, file order is the
//! canonical dataset order.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::{DataError, DatasetManifest, LocationRecord};
use crate::fsutil::write_atomic;

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut records: Vec<LocationRecord> = Vec::new();
    let mut seen = HashSet::new();
    let mut n_images = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: LocationRecord =
            serde_json::from_str(line).map_err(|e| DataError::JsonLine {
                line: line_no,
                message: e.to_string(),
            })?;
        match n_images {
            None => n_images = Some(record.images.len()),
            Some(expected) if record.images.len() != expected => {
                return Err(DataError::InconsistentImageCount {
                    line: line_no,
                    expected,
                    found: record.images.len(),
                });
            }
            Some(_) => {}
        }
        if !seen.insert(record.location_id.clone()) {
            return Err(DataError::DuplicateLocationId {
                id: record.location_id.to_string(),
            });
        }
        records.push(record);
    }
    DatasetManifest::new(records)
}

pub fn write_manifest(
    manifest: &DatasetManifest,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::new();
    for record in manifest.records() {
        // LocationRecord serialization is infallible (plain data, no maps).
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}
