//! Reader for the IDX binary layout the MNIST dataset ships in.
//!
//! Two files: images (magic `0x00000803`, then count, rows, cols as
//! big-endian u32 and one unsigned byte per pixel) and labels (magic
//! `0x00000801`, then count and one byte per label). Pixels are rescaled to
//! `[0, 1]`; the digit labels stay raw so a caller can pick any
//! digit-versus-rest split.

use std::path::{Path, PathBuf};
use thiserror::Error;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum MnistError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path} is not an IDX file of the expected kind (magic {found:#010x})")]
    BadMagic { path: PathBuf, found: u32 },
    #[error("{path} ends before the advertised data")]
    TruncatedFile { path: PathBuf },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistData {
    /// One row-major pixel vector per image, values in `[0, 1]`.
    pub features: Vec<Vec<f64>>,
    /// Raw digit labels `0..=9`, aligned with `features`.
    pub digits: Vec<u8>,
}

fn read_all(path: &Path) -> Result<Vec<u8>, MnistError> {
    std::fs::read(path).map_err(|e| MnistError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn header_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, MnistError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(MnistError::TruncatedFile { path: path.to_path_buf() });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<MnistData, MnistError> {
    let image_bytes = read_all(images)?;
    let magic = header_u32(&image_bytes, 0, images)?;
    if magic != IMAGE_MAGIC {
        return Err(MnistError::BadMagic { path: images.to_path_buf(), found: magic });
    }
    let count = header_u32(&image_bytes, 4, images)? as usize;
    let rows = header_u32(&image_bytes, 8, images)? as usize;
    let cols = header_u32(&image_bytes, 12, images)? as usize;
    let pixels = rows * cols;
    if image_bytes.len() < 16 + count * pixels {
        return Err(MnistError::TruncatedFile { path: images.to_path_buf() });
    }

    let label_bytes = read_all(labels)?;
    let magic = header_u32(&label_bytes, 0, labels)?;
    if magic != LABEL_MAGIC {
        return Err(MnistError::BadMagic { path: labels.to_path_buf(), found: magic });
    }
    let label_count = header_u32(&label_bytes, 4, labels)? as usize;
    if label_bytes.len() < 8 + label_count {
        return Err(MnistError::TruncatedFile { path: labels.to_path_buf() });
    }
    if count != label_count {
        return Err(MnistError::CountMismatch { images: count, labels: label_count });
    }

    let features = (0..count)
        .map(|i| {
            image_bytes[16 + i * pixels..16 + (i + 1) * pixels]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect();
    let digits = label_bytes[8..8 + count].to_vec();
    Ok(MnistData { features, digits })
}

/// Digit-versus-rest split: 1.0 for every digit in `positive`, else 0.0.
pub fn binary_labels(digits: &[u8], positive: &[u8]) -> Vec<f64> {
    digits
        .iter()
        .map(|d| if positive.contains(d) { 1.0 } else { 0.0 })
        .collect()
}
