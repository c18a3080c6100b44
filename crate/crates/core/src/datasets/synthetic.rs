use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetPair, Split};
use crate::rng::{self, streams};
use crate::tensor::{Matrix, Vector};
use crate::{Error, Result};

/// Gaussian class clusters: one mean per class with coordinates drawn from
/// `N(0, mean_scale^2)`, unit-variance samples around it, labels assigned
/// round-robin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub mean_scale: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_samples: 600,
            input_dim: 20,
            n_classes: 10,
            seed: 0,
            mean_scale: 1.0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.input_dim == 0 || self.n_classes == 0 {
            return Err(Error::InvalidConfig(
                "synthetic sample count, input dim and class count must be positive".into(),
            ));
        }
        if !(self.mean_scale.is_finite() && self.mean_scale >= 0.0) {
            return Err(Error::InvalidConfig("mean_scale must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn class_means(&self) -> Vec<Vector> {
        let mut rng = rng::substream(self.seed, streams::SYNTHETIC_MEANS);
        (0..self.n_classes)
            .map(|_| {
                Vector::new(
                    (0..self.input_dim)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            self.mean_scale * z
                        })
                        .collect::<Vec<f64>>(),
                )
            })
            .collect()
    }
}

fn split_label(split: Split) -> String {
    match split {
        Split::Train => format!("{}/train", streams::SYNTHETIC_SAMPLES),
        Split::Test => format!("{}/test", streams::SYNTHETIC_SAMPLES),
    }
}

/// Samples `n_samples` points around fixed class means.
pub fn make_synthetic_from_means(n_samples: usize, means: &[Vector], seed: u64, split: Split) -> Result<Dataset> {
    let dim = means.first().map(Vector::len).unwrap_or(0);
    if means.is_empty() || dim == 0 || means.iter().any(|m| m.len() != dim) {
        return Err(Error::InvalidArgument(
            "class means must be non-empty and share one dimension".into(),
        ));
    }
    let mut rng = rng::substream(seed, &split_label(split));
    let mut data = Vec::with_capacity(n_samples * dim);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % means.len();
        for &mu in means[class].iter() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(mu + noise);
        }
        labels.push(class);
    }
    let inputs = Matrix::from_vec(n_samples, dim, data)?;
    Dataset::new("synthetic", split, inputs, labels, means.len())
}

/// Training split described by `spec`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    make_synthetic_from_means(spec.n_samples, &spec.class_means(), spec.seed, Split::Train)
}

/// Training split from `spec` plus an independent test split of `n_test`
/// samples around the same means.
pub fn synthetic_pair(spec: &SyntheticSpec, n_test: usize) -> Result<DatasetPair> {
    spec.validate()?;
    let means = spec.class_means();
    Ok(DatasetPair {
        train: make_synthetic_from_means(spec.n_samples, &means, spec.seed, Split::Train)?,
        test: make_synthetic_from_means(n_test, &means, spec.seed, Split::Test)?,
    })
}
