//! IDX ingestion (big-endian headers, unsigned byte payloads).

use std::path::Path;

use super::dataset::LabeledDataset;
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            detail: format!("truncated header while reading {what}"),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != expected {
        return Err(Error::Format {
            offset: 0,
            detail: format!("{}: magic {magic:#010x}, expected {expected:#010x}", path.display()),
        });
    }
    Ok(())
}

/// Images as rows of `rows·cols` pixels scaled by `1/255`.
pub fn read_images(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = read_file(path)?;
    check_magic(&bytes, IMAGES_MAGIC, path)?;
    let count = be_u32(&bytes, 4, "image count")? as usize;
    let rows = be_u32(&bytes, 8, "row count")? as usize;
    let cols = be_u32(&bytes, 12, "column count")? as usize;
    let dim = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < count * dim {
        return Err(Error::Format {
            offset: (16 + payload.len()) as u64,
            detail: format!("{}: truncated, expected {} pixel bytes", path.display(), count * dim),
        });
    }
    Ok(payload[..count * dim]
        .chunks_exact(dim.max(1))
        .take(count)
        .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    check_magic(&bytes, LABELS_MAGIC, path)?;
    let count = be_u32(&bytes, 4, "label count")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Format {
            offset: (8 + payload.len()) as u64,
            detail: format!("{}: truncated, expected {count} labels", path.display()),
        });
    }
    Ok(payload[..count].iter().map(|&l| usize::from(l)).collect())
}

/// Paired image and label files as one dataset.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let points = read_images(images)?;
    let labels_v = read_labels(labels)?;
    if points.len() != labels_v.len() {
        return Err(Error::Format {
            offset: 4,
            detail: format!("{} images but {} labels", points.len(), labels_v.len()),
        });
    }
    let classes = labels_v.iter().max().map_or(0, |m| m + 1);
    let dim = points.first().map_or(0, Vec::len);
    LabeledDataset::new(points, labels_v, classes.max(2), dim, format!("idx:{}", images.display()))
}

/// Encode images in IDX form; used for fixtures and round-trips.
pub fn encode_images(images: &[Vec<u8>], rows: u32, cols: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * (rows * cols) as usize);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
