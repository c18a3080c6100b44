//! On-disk run artifacts.
//!
//! Layout: `<root>/<dataset>/<variant>/seed_<i>/` holding
//!
//! - `manifest.json`: dataset, algorithm, seed, full config, network layers,
//!   test accuracy, loss curve, format version
//! - `weights.faw`: tensor container, magic `FAW1`, tensors `W_1, b_1, ..., W_n, b_n`
//!   with each bias stored as an `out_dim x 1` column
//! - `feedback.fab`: tensor container, magic `FAB1`, the feedback matrices
//! - `predictions.json`: test-set predicted classes and true labels
//!
//! A container is the 4-byte magic, a little-endian `u32` tensor count, then
//! per tensor `u32` rows, `u32` cols and `rows * cols` little-endian `f64`
//! values in row-major order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunArtifact, Variant};
use crate::network::{NetworkSpec, NetworkState};
use crate::tensor::{Matrix, Vector};
use crate::trainers::{FeedbackState, TrainConfig};
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FAW1";
pub const FEEDBACK_MAGIC: &[u8; 4] = b"FAB1";
pub const FORMAT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.faw";
pub const FEEDBACK_FILE: &str = "feedback.fab";
pub const PREDICTIONS_FILE: &str = "predictions.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dataset: String,
    pub algorithm: Variant,
    pub seed: u64,
    pub config: TrainConfig,
    pub train_samples: usize,
    pub network: NetworkSpec,
    pub test_accuracy: f64,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

pub fn encode_container(magic: &[u8; 4], tensors: &[Matrix]) -> Vec<u8> {
    let payload: usize = tensors.iter().map(|t| 8 + 8 * t.as_slice().len()).sum();
    let mut out = Vec::with_capacity(8 + payload);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_container(path: &Path, magic: &[u8; 4], bytes: &[u8]) -> Result<Vec<Matrix>> {
    let mut pos = 0usize;
    let mut take = |len: usize, what: &str| -> Result<&[u8]> {
        let end = pos.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| {
            Error::format(path, pos as u64, format!("truncated {what}"))
        })?;
        let out = &bytes[pos..end];
        pos = end;
        Ok(out)
    };
    let found = take(4, "magic")?;
    if found != magic {
        return Err(Error::format(
            path,
            0,
            format!(
                "magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("four bytes")) as usize;
    let count = u32_at(take(4, "tensor count")?);
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rows = u32_at(take(4, "tensor rows")?);
        let cols = u32_at(take(4, "tensor cols")?);
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(path, 0, "tensor size overflows"))?;
        let raw = take(len, "tensor payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        tensors.push(Matrix::from_vec(rows, cols, data)?);
    }
    if pos != bytes.len() {
        return Err(Error::format(path, pos as u64, "trailing bytes after last tensor"));
    }
    Ok(tensors)
}

fn weight_tensors(state: &NetworkState) -> Vec<Matrix> {
    state
        .weights
        .iter()
        .zip(&state.biases)
        .flat_map(|(w, b)| {
            let col = Matrix::from_vec(b.len(), 1, b.as_slice().to_vec()).expect("column");
            [w.clone(), col]
        })
        .collect()
}

fn state_from_tensors(path: &Path, spec: &NetworkSpec, tensors: Vec<Matrix>) -> Result<NetworkState> {
    if tensors.len() != 2 * spec.len() {
        return Err(Error::format(
            path,
            4,
            format!(
                "manifest describes {} layers ({} tensors) but the container holds {} tensors",
                spec.len(),
                2 * spec.len(),
                tensors.len()
            ),
        ));
    }
    let mut weights = Vec::with_capacity(spec.len());
    let mut biases = Vec::with_capacity(spec.len());
    let mut it = tensors.into_iter();
    while let (Some(w), Some(b)) = (it.next(), it.next()) {
        if b.cols() != 1 {
            return Err(Error::format(path, 0, "bias tensor is not a column"));
        }
        weights.push(w);
        biases.push(Vector::new(b.into_vec()));
    }
    let state = NetworkState {
        spec: spec.clone(),
        weights,
        biases,
    };
    state.validate()?;
    Ok(state)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Directory of one run under `root`.
pub fn artifact_dir(root: &Path, dataset: &str, variant: Variant, seed: u64) -> PathBuf {
    root.join(dataset)
        .join(variant.name())
        .join(format!("seed_{seed}"))
}

/// Writes the artifact under `root` and returns its directory.
pub fn save_artifact(artifact: &RunArtifact, root: &Path) -> Result<PathBuf> {
    let dir = artifact_dir(root, &artifact.dataset, artifact.variant, artifact.seed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dataset: artifact.dataset.clone(),
        algorithm: artifact.variant,
        seed: artifact.seed,
        config: artifact.config,
        train_samples: artifact.train_samples,
        network: artifact.final_state.spec.clone(),
        test_accuracy: artifact.test_accuracy,
        loss_curve: artifact.loss_curve.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    write(&path, &to_json(&path, &manifest)?)?;

    write(
        &dir.join(WEIGHTS_FILE),
        &encode_container(WEIGHTS_MAGIC, &weight_tensors(&artifact.final_state)),
    )?;
    write(
        &dir.join(FEEDBACK_FILE),
        &encode_container(FEEDBACK_MAGIC, &artifact.feedback.matrices),
    )?;

    let predictions = Predictions {
        predictions: artifact.test_predictions.clone(),
        labels: artifact.test_labels.clone(),
    };
    let path = dir.join(PREDICTIONS_FILE);
    write(&path, &to_json(&path, &predictions)?)?;
    Ok(dir)
}

/// Reads an artifact directory written by [`save_artifact`].
pub fn load_artifact(dir: &Path) -> Result<RunArtifact> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = from_json(&manifest_path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &manifest_path,
            0,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }

    let weights_path = dir.join(WEIGHTS_FILE);
    let tensors = decode_container(&weights_path, WEIGHTS_MAGIC, &read(&weights_path)?)?;
    let final_state = state_from_tensors(&weights_path, &manifest.network, tensors)?;

    let feedback_path = dir.join(FEEDBACK_FILE);
    let feedback = FeedbackState {
        kind: manifest.algorithm.algorithm.feedback_kind(),
        matrices: decode_container(&feedback_path, FEEDBACK_MAGIC, &read(&feedback_path)?)?,
    };
    feedback
        .validate(&manifest.network)
        .map_err(|e| Error::format(&feedback_path, 0, e.to_string()))?;

    let predictions_path = dir.join(PREDICTIONS_FILE);
    let predictions: Predictions = from_json(&predictions_path)?;
    if predictions.predictions.len() != predictions.labels.len() {
        return Err(Error::format(
            &predictions_path,
            0,
            "prediction and label counts differ",
        ));
    }

    Ok(RunArtifact {
        dataset: manifest.dataset,
        variant: manifest.algorithm,
        seed: manifest.seed,
        config: manifest.config,
        train_samples: manifest.train_samples,
        final_state,
        feedback,
        test_predictions: predictions.predictions,
        test_labels: predictions.labels,
        test_accuracy: manifest.test_accuracy,
        loss_curve: manifest.loss_curve,
    })
}

/// Every artifact directory below `root`, sorted by dataset, variant
/// (reporting order) and seed. Only directories holding a manifest count.
pub fn find_artifacts(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(String, Variant, u64, PathBuf)> = Vec::new();
    for dataset in subdirs(root)? {
        for variant_dir in subdirs(&dataset)? {
            let Some(variant) = file_name(&variant_dir).and_then(|n| n.parse::<Variant>().ok()) else {
                continue;
            };
            for seed_dir in subdirs(&variant_dir)? {
                let seed = file_name(&seed_dir)
                    .and_then(|n| n.strip_prefix("seed_").map(str::to_owned))
                    .and_then(|s| s.parse::<u64>().ok());
                if let Some(seed) = seed {
                    if seed_dir.join(MANIFEST_FILE).is_file() {
                        let ds = file_name(&dataset).unwrap_or_default();
                        found.push((ds, variant, seed, seed_dir));
                    }
                }
            }
        }
    }
    found.sort_by(|a, b| (&a.0, a.1, a.2).cmp(&(&b.0, b.1, b.2)));
    Ok(found.into_iter().map(|f| f.3).collect())
}

fn file_name(p: &Path) -> Option<String> {
    p.file_name().map(|n| n.to_string_lossy().into_owned())
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}
