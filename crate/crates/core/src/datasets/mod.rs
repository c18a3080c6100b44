//! Datasets: MNIST IDX files, CIFAR-10 binary batches and synthetic clusters.
//!
//! Pixel bytes are scaled by 1/255 with no centering. Every dataset stores its
//! samples as rows of a single matrix.

mod checksum;
mod cifar;
mod idx;
mod synthetic;

pub use checksum::{sha256_file, verify_checksums, ChecksumReport, FileStatus};
pub use cifar::{load_cifar10, load_cifar10_dir, CIFAR_INPUT_DIM, CIFAR_RECORD_LEN};
pub use idx::{encode_idx_images, encode_idx_labels, load_mnist_dir, load_mnist_idx, parse_idx_images, parse_idx_labels, IMAGE_MAGIC, LABEL_MAGIC};
pub use synthetic::{make_synthetic, make_synthetic_from_means, synthetic_pair, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::tensor::{Matrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    /// One sample per row.
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, split: Split, inputs: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Dataset {
            name: name.into(),
            split,
            inputs,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn input(&self, i: usize) -> Vector {
        self.inputs.row_vector(i)
    }

    /// Gathers the given samples into a batch matrix and label list.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let dim = self.input_dim();
        let mut data = Vec::with_capacity(indices.len() * dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        let inputs = Matrix::from_vec(indices.len(), dim, data).expect("rows copied whole");
        (inputs, labels)
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let indices: Vec<usize> = (0..n).collect();
        let (inputs, labels) = self.batch(&indices);
        Dataset {
            name: self.name.clone(),
            split: self.split,
            inputs,
            labels,
            n_classes: self.n_classes,
        }
    }
}

/// Train and test splits of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}
