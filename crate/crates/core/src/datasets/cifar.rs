//! CIFAR-10 binary batches: fixed 3073-byte records, one label byte followed
//! by 3072 pixel bytes (red plane, green plane, blue plane, 32x32 each).

use std::path::{Path, PathBuf};

use super::{Dataset, DatasetPair, Split};
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const CIFAR_INPUT_DIM: usize = 3072;
pub const CIFAR_RECORD_LEN: usize = CIFAR_INPUT_DIM + 1;

fn parse_records(path: &Path, bytes: &[u8], data: &mut Vec<f64>, labels: &mut Vec<usize>) -> Result<()> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        let whole = bytes.len() / CIFAR_RECORD_LEN * CIFAR_RECORD_LEN;
        return Err(Error::format(
            path,
            whole as u64,
            format!(
                "file size {} is not a multiple of {CIFAR_RECORD_LEN}",
                bytes.len()
            ),
        ));
    }
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = record[0];
        if label > 9 {
            return Err(Error::format(
                path,
                (i * CIFAR_RECORD_LEN) as u64,
                format!("label {label} out of range"),
            ));
        }
        labels.push(label as usize);
        data.extend(record[1..].iter().map(|&p| f64::from(p) / 255.0));
    }
    Ok(())
}

/// Concatenates the records of every batch file, in the given order.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P], split: Split) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_records(path, &bytes, &mut data, &mut labels)?;
    }
    let inputs = Matrix::from_vec(labels.len(), CIFAR_INPUT_DIM, data)?;
    Dataset::new("cifar10", split, inputs, labels, 10)
}

/// Loads `data_batch_1..5.bin` and `test_batch.bin` from `dir`.
pub fn load_cifar10_dir(dir: impl AsRef<Path>) -> Result<DatasetPair> {
    let dir = dir.as_ref();
    let train: Vec<PathBuf> = (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .collect();
    Ok(DatasetPair {
        train: load_cifar10(&train, Split::Train)?,
        test: load_cifar10(&[dir.join("test_batch.bin")], Split::Test)?,
    })
}
