//! IDX (MNIST) files: big-endian `u32` magic, `u32` dimension sizes, raw `u8` payload.

use std::fs;
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, source: &str, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(source, at as u64, format!("truncated before {what}")))
}

/// Returns `(dims, payload)` after checking the magic and payload length.
fn parse_header<'a>(bytes: &'a [u8], magic: u32, source: &str) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(bytes, 0, source, "magic number")?;
    if found != magic {
        return Err(Error::format(
            source,
            0,
            format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(be_u32(bytes, 4 + 4 * i, source, "dimension size")? as usize);
    }
    let start = 4 + 4 * rank;
    let expected: usize = dims.iter().product();
    let payload = &bytes[start..];
    if payload.len() != expected {
        let offset = start + payload.len().min(expected);
        return Err(Error::format(
            source,
            offset as u64,
            format!("payload has {} bytes, header promises {expected}", payload.len()),
        ));
    }
    Ok((dims, payload))
}

/// Decodes an image file and a label file held in memory.
///
/// Pixels are scaled by 1/255 and each image is flattened row-major. The class
/// count is one more than the largest label, and at least 2.
pub fn parse_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let (image_dims, pixels) = parse_header(images, IMAGES_MAGIC, "images")?;
    let (label_dims, label_bytes) = parse_header(labels, LABELS_MAGIC, "labels")?;
    let (n, rows, cols) = (image_dims[0], image_dims[1], image_dims[2]);
    if label_dims[0] != n {
        return Err(Error::format(
            "labels",
            4,
            format!("{} labels for {n} images", label_dims[0]),
        ));
    }
    let width = rows * cols;
    let features = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    Dataset::new(Tensor::matrix(n, width, features)?, labels, class_count, split)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels, split).map_err(|e| match e {
        Error::Format {
            source_name,
            offset,
            message,
        } => {
            let path = if source_name == "images" { images_path } else { labels_path };
            Error::Format {
                source_name: path.display().to_string(),
                offset,
                message,
            }
        }
        other => other,
    })
}
