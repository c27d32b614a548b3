//! IDX reader/writer (the MNIST distribution format). Files starting with the
//! gzip magic bytes are decompressed transparently.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::DataError;
use crate::linalg::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path).map_err(|e| DataError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| DataError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let out = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| DataError::io(path, e))?;
        enc.finish().map_err(|e| DataError::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, out).map_err(|e| DataError::io(path, e))
}

struct Header {
    dims: Vec<usize>,
    body: usize,
}

fn parse_header(bytes: &[u8], magic: u32, path: &Path) -> Result<Header, DataError> {
    let word = |i: usize| -> Result<u32, DataError> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| DataError::Truncated {
                path: path.display().to_string(),
                expected: 4 * i + 4,
                found: bytes.len(),
            })
    };
    let found = word(0)?;
    if found != magic {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: magic,
            found,
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (1..=ndims)
        .map(|i| word(i).map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let body = 4 * (ndims + 1);
    let need = body + dims.iter().product::<usize>();
    if bytes.len() < need {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected: need,
            found: bytes.len(),
        });
    }
    Ok(Header { dims, body })
}

/// Reads an image file into an `N × (rows·cols)` matrix of raw byte values.
pub fn load_idx_images(path: &Path) -> Result<Matrix, DataError> {
    let bytes = read_bytes(path)?;
    let h = parse_header(&bytes, IMAGES_MAGIC, path)?;
    let (n, d) = (h.dims[0], h.dims[1] * h.dims[2]);
    let data = bytes[h.body..h.body + n * d].iter().map(|&b| b as f64).collect();
    Ok(Matrix::new(n, d, data)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>, DataError> {
    let bytes = read_bytes(path)?;
    let h = parse_header(&bytes, LABELS_MAGIC, path)?;
    Ok(bytes[h.body..h.body + h.dims[0]]
        .iter()
        .map(|&b| b as usize)
        .collect())
}

/// Reads an image/label pair; the counts must agree.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(Matrix, Vec<usize>), DataError> {
    let x = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if x.rows() != y.len() {
        return Err(DataError::CountMismatch {
            images: x.rows(),
            labels: y.len(),
        });
    }
    Ok((x, y))
}

/// Writes `images.len() / (rows·cols)` images. A `.gz` suffix compresses.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<(), DataError> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(DataError::Format(format!(
            "{} pixels do not tile {rows}x{cols} images",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [
        IMAGES_MAGIC,
        (pixels.len() / per) as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    write_bytes(path, &out)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    write_bytes(path, &out)
}
