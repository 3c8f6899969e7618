//! Model checkpoints: a directory with `metadata.json` and one portable
//! binary file per named parameter.
//!
//! Binary layout per file, all little-endian: u32 rank (always 2), u32 rows,
//! u32 cols, then rows*cols f64 values. Exact storage keeps a reloaded
//! model bit-identical to the one that was trained.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint file {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("checkpoint metadata error in {path}: {message}")]
    Metadata { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io { path: path.display().to_string(), source }
}

/// Hex SHA-256 of a byte string; used to bind checkpoints to the vocabulary
/// they were trained with and to fingerprint configs in manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<(), CheckpointError> {
    let mut buf = Vec::with_capacity(12 + t.len() * 8);
    buf.extend_from_slice(&2u32.to_le_bytes());
    buf.extend_from_slice(&(t.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor, CheckpointError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    let malformed = |message: &str| CheckpointError::Malformed {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    if bytes.len() < 12 {
        return Err(malformed("file shorter than header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != 2 {
        return Err(malformed(&format!("unsupported rank {}", word(0))));
    }
    let rows = word(1) as usize;
    let cols = word(2) as usize;
    let expected = 12 + rows * cols * 8;
    if bytes.len() != expected {
        return Err(malformed(&format!("expected {expected} bytes for {rows}x{cols}, found {}", bytes.len())));
    }
    let data = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_vec(rows, cols, data))
}

/// Writes `metadata.json` plus one `.bin` per named parameter into `dir`,
/// creating it if needed. Overwrites previous contents deterministically.
pub fn save_params(
    dir: &Path,
    params: &[(&str, &Tensor)],
    metadata: &serde_json::Value,
) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let meta_path = dir.join("metadata.json");
    let json = serde_json::to_string_pretty(metadata).map_err(|e| CheckpointError::Metadata {
        path: meta_path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(&meta_path, json + "\n").map_err(|e| io_err(&meta_path, e))?;
    for (name, t) in params {
        write_tensor(&dir.join(format!("{name}.bin")), t)?;
    }
    Ok(())
}

/// Reads `metadata.json` from a checkpoint directory.
pub fn load_metadata(dir: &Path) -> Result<serde_json::Value, CheckpointError> {
    let path = dir.join("metadata.json");
    let raw = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&raw).map_err(|e| CheckpointError::Metadata {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads one named parameter and checks its shape.
pub fn load_param(dir: &Path, name: &str, rows: usize, cols: usize) -> Result<Tensor, CheckpointError> {
    let path = dir.join(format!("{name}.bin"));
    let t = read_tensor(&path)?;
    if t.shape() != (rows, cols) {
        return Err(CheckpointError::Malformed {
            path: path.display().to_string(),
            message: format!("expected shape {rows}x{cols}, found {:?}", t.shape()),
        });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_file_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let t = Tensor::from_vec(2, 3, vec![0.1, -2.5, 3.75, 0.0, 1e-8, -42.0]);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), (2, 3));
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let t = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        write_tensor(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_tensor(&path), Err(CheckpointError::Malformed { .. })));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        save_params(dir.path(), &[("w", &t)], &serde_json::json!({"kind": "test"})).unwrap();
        assert!(load_param(dir.path(), "w", 2, 2).is_ok());
        assert!(load_param(dir.path(), "w", 4, 1).is_err());
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
