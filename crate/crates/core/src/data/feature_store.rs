//! Binary feature store.
//!
//! Layout: magic `EGF1`, then little-endian u32 K, N, D, then K*N*D
//! little-endian f32 values (location-major, image-second, feature-innermost).
//! A sidecar `<path>.ids` lists the K location ids, one per line, in order.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, FeatureStore, LocationId};
use crate::fsutil::write_atomic;

const MAGIC: &[u8; 4] = b"EGF1";
const HEADER_LEN: usize = 16;

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".ids");
    path.with_file_name(name)
}

pub fn write_feature_store(store: &FeatureStore, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };

    let mut bytes = Vec::with_capacity(HEADER_LEN + store.values().len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(store.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(store.n_images() as u32).to_le_bytes());
    bytes.extend_from_slice(&(store.dim() as u32).to_le_bytes());
    for value in store.values() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    write_atomic(path, &bytes).map_err(io_err)?;

    let mut ids = String::new();
    for id in store.location_ids() {
        ids.push_str(id.as_str());
        ids.push('\n');
    }
    let sidecar = sidecar_path(path);
    write_atomic(&sidecar, ids.as_bytes()).map_err(|source| DataError::Io {
        path: sidecar.clone(),
        source,
    })
}

pub fn read_feature_store(path: impl AsRef<Path>) -> Result<FeatureStore, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::TruncatedHeader { found: bytes.len() });
    }
    let read_u32 = |offset: usize| {
        u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
    };
    let rows = read_u32(4) as usize;
    let n_images = read_u32(8) as usize;
    let dim = read_u32(12) as usize;

    let count = rows
        .checked_mul(n_images)
        .and_then(|x| x.checked_mul(dim))
        .ok_or(DataError::DimensionOverflow {
            rows,
            images: n_images,
            dim,
        })?;
    let expected = count as u64 * 4;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found != expected {
        return Err(DataError::PayloadLength { expected, found });
    }

    let mut values = Vec::with_capacity(count);
    for (index, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !value.is_finite() {
            return Err(DataError::NonFiniteFeature { index });
        }
        values.push(value);
    }

    let sidecar = sidecar_path(path);
    let ids_text = fs::read_to_string(&sidecar).map_err(|source| DataError::Io {
        path: sidecar.clone(),
        source,
    })?;
    let location_ids: Vec<LocationId> = ids_text
        .lines()
        .map(LocationId::new)
        .collect::<Result<_, _>>()?;
    if location_ids.len() != rows {
        return Err(DataError::IdCountMismatch {
            ids: location_ids.len(),
            rows,
        });
    }
    FeatureStore::new(location_ids, n_images, dim, values)
}
