//! IDX container (MNIST).
//!
//! Big-endian header: a `u32` magic (`2049` for label files, `2051` for image
//! files), one `u32` per dimension, then the raw unsigned bytes.

use std::path::Path;

use super::{Dataset, DatasetPair, Split};
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const LABEL_MAGIC: u32 = 2049;
pub const IMAGE_MAGIC: u32 = 2051;

const MNIST_CLASSES: usize = 10;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let chunk = self.take(4, what)?;
        Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::format(
                self.path,
                self.bytes.len() as u64,
                format!(
                    "truncated {what}: needed {len} bytes from offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            )),
        }
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let magic = self.u32("magic number")?;
        if magic != expected {
            return Err(Error::format(
                self.path,
                0,
                format!("magic number {magic}, expected {expected}"),
            ));
        }
        Ok(())
    }
}

/// Parses an IDX image file into a `count x (rows*cols)` matrix scaled to [0, 1].
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(IMAGE_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let dim = rows * cols;
    let pixels = r.take(count * dim, "pixel data")?;
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Matrix::from_vec(count, dim, data)
}

/// Parses an IDX label file.
pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(LABEL_MAGIC)?;
    let count = r.u32("label count")? as usize;
    let start = r.pos;
    let labels = r.take(count, "label data")?;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if (l as usize) < MNIST_CLASSES {
                Ok(l as usize)
            } else {
                Err(Error::format(
                    path,
                    (start + i) as u64,
                    format!("label {l} out of range"),
                ))
            }
        })
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let inputs = parse_idx_images(images_path, &read(images_path)?)?;
    let labels = parse_idx_labels(labels_path, &read(labels_path)?)?;
    if inputs.rows() != labels.len() {
        // The count field sits right after the magic number.
        return Err(Error::format(
            labels_path,
            4,
            format!(
                "{} labels for {} images in {}",
                labels.len(),
                inputs.rows(),
                images_path.display()
            ),
        ));
    }
    Dataset::new("mnist", split, inputs, labels, MNIST_CLASSES)
}

/// Loads the four standard MNIST files from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<DatasetPair> {
    let dir = dir.as_ref();
    Ok(DatasetPair {
        train: load_mnist_idx(
            dir.join("train-images-idx3-ubyte"),
            dir.join("train-labels-idx1-ubyte"),
            Split::Train,
        )?,
        test: load_mnist_idx(
            dir.join("t10k-images-idx3-ubyte"),
            dir.join("t10k-labels-idx1-ubyte"),
            Split::Test,
        )?,
    })
}

/// Serializes equally sized `rows x cols` images into IDX bytes.
pub fn encode_idx_images(images: &[Vec<u8>], rows: u32, cols: u32) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
