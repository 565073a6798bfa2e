//! Label matrix CSV: header `location_id,<lf_1>,...,<lf_m>`, one row per
//! location, cells `1` positive / `0` negative / `-1` abstain.

use std::fs;
use std::path::Path;

use super::{DataError, LabelMatrix, LocationId, WeakLabel};
use crate::fsutil::write_atomic;

pub fn read_label_matrix(path: impl AsRef<Path>) -> Result<LabelMatrix, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().filter(|l| !l.is_empty()).ok_or(DataError::EmptyHeader)?;
    let mut cells = header.split(',');
    if cells.next() != Some("location_id") {
        return Err(DataError::BadHeader {
            found: header.to_string(),
        });
    }
    let lf_names: Vec<String> = cells.map(str::to_string).collect();
    if lf_names.is_empty() {
        return Err(DataError::EmptyHeader);
    }
    let m = lf_names.len();

    let mut location_ids = Vec::new();
    let mut votes = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != m + 1 {
            return Err(DataError::RaggedRow {
                line: line_no,
                expected: m + 1,
                found: cells.len(),
            });
        }
        location_ids.push(LocationId::new(cells[0])?);
        for &cell in &cells[1..] {
            votes.push(WeakLabel::from_token(cell).ok_or_else(|| {
                DataError::InvalidVoteToken {
                    token: cell.to_string(),
                    line: line_no,
                }
            })?);
        }
    }
    LabelMatrix::new(location_ids, lf_names, votes)
}

pub fn write_label_matrix(matrix: &LabelMatrix, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::from("location_id");
    for name in matrix.lf_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (id, row) in matrix.location_ids().iter().zip(matrix.rows()) {
        out.push_str(id.as_str());
        for vote in row {
            out.push(',');
            out.push_str(vote.to_token());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}
