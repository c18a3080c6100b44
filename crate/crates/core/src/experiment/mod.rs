//! Seeded training runs, suites of runs, and their on-disk artifacts.
//!
//! For a given seed every algorithm starts from the same initial weights;
//! only the feedback matrices and the update rule differ between runs.

mod artifact;

pub use artifact::{
    artifact_dir, decode_container, encode_container, find_artifacts, load_artifact, save_artifact, Manifest,
    Predictions, FEEDBACK_FILE, FEEDBACK_MAGIC, FORMAT_VERSION, MANIFEST_FILE, PREDICTIONS_FILE, WEIGHTS_FILE,
    WEIGHTS_MAGIC,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{load_cifar10_dir, load_mnist_dir, synthetic_pair, DatasetPair, SyntheticSpec};
use crate::network::{NetworkSpec, NetworkState};
use crate::trainers::{predict_classes, Algorithm, FeedbackState, OptimizerKind, TrainConfig, Trainer};
use crate::{Error, Result};

/// An algorithm paired with an optimizer. Plain runs are named after the
/// algorithm (`dfa`); Adam runs get a suffix (`bp-adam`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub algorithm: Algorithm,
    pub optimizer: OptimizerKind,
}

impl Variant {
    pub const fn plain(algorithm: Algorithm) -> Self {
        Variant {
            algorithm,
            optimizer: OptimizerKind::None,
        }
    }

    pub const fn adam(algorithm: Algorithm) -> Self {
        Variant {
            algorithm,
            optimizer: OptimizerKind::Adam,
        }
    }

    /// The five plain algorithms in reporting order.
    pub fn all() -> Vec<Variant> {
        Algorithm::ALL.iter().map(|&a| Variant::plain(a)).collect()
    }

    pub fn name(self) -> String {
        match self.optimizer {
            OptimizerKind::None => self.algorithm.name().to_string(),
            OptimizerKind::Adam => format!("{}-adam", self.algorithm.name()),
        }
    }

    /// Column header used in reports.
    pub fn label(self) -> String {
        match self.optimizer {
            OptimizerKind::None => self.algorithm.label().to_string(),
            OptimizerKind::Adam => format!("{}+Adam", self.algorithm.label()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.strip_suffix("-adam").or_else(|| lower.strip_suffix("+adam")) {
            Some(alg) => Ok(Variant::adam(alg.parse()?)),
            None => Ok(Variant::plain(lower.parse()?)),
        }
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

/// Synthetic suite data: 600 training and 200 test samples, 20 features, 10 classes.
pub const SYNTHETIC_TEST_SAMPLES: usize = 200;

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Synthetic => "synthetic",
        }
    }

    /// Directory under the data root holding the raw files.
    pub fn data_subdir(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar-10-batches-bin",
            DatasetKind::Synthetic => "",
        }
    }

    pub fn network_spec(self) -> NetworkSpec {
        match self {
            DatasetKind::Mnist => NetworkSpec::mnist(),
            DatasetKind::Cifar10 => NetworkSpec::cifar10(),
            DatasetKind::Synthetic => {
                NetworkSpec::mlp(20, &[32, 16], 10).expect("static architecture is valid")
            }
        }
    }

    /// Loads both splits. The data root is ignored for synthetic data; a
    /// training subset keeps the first `n` samples.
    pub fn load(self, data_root: &Path, train_subset: Option<usize>) -> Result<DatasetPair> {
        let mut pair = match self {
            DatasetKind::Mnist => load_mnist_dir(data_root.join(self.data_subdir()))?,
            DatasetKind::Cifar10 => load_cifar10_dir(data_root.join(self.data_subdir()))?,
            DatasetKind::Synthetic => synthetic_pair(&SyntheticSpec::default(), SYNTHETIC_TEST_SAMPLES)?,
        };
        if let Some(n) = train_subset {
            if n == 0 {
                return Err(Error::InvalidConfig("training subset must be non-empty".into()));
            }
            pair.train = pair.train.take(n);
        }
        Ok(pair)
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [DatasetKind::Mnist, DatasetKind::Cifar10, DatasetKind::Synthetic]
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("cifar-10") && *d == DatasetKind::Cifar10))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset '{s}'")))
    }
}

/// Everything one trained model leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub dataset: String,
    pub variant: Variant,
    pub seed: u64,
    pub config: TrainConfig,
    pub train_samples: usize,
    pub final_state: NetworkState,
    pub feedback: FeedbackState,
    pub test_predictions: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub test_accuracy: f64,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

impl RunArtifact {
    pub fn algorithm(&self) -> Algorithm {
        self.variant.algorithm
    }
}

/// Fraction of positions where `predictions` and `labels` agree.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty test set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Trains one model and evaluates it on the test split. The algorithm,
/// optimizer and seed all come from `config`. Test predictions are taken
/// after the final epoch.
pub fn run_single(data: &DatasetPair, spec: &NetworkSpec, config: &TrainConfig) -> Result<RunArtifact> {
    if data.train.input_dim() != spec.input_dim() || data.test.input_dim() != spec.input_dim() {
        return Err(Error::InvalidConfig(format!(
            "network expects {} inputs, data has {}",
            spec.input_dim(),
            data.train.input_dim()
        )));
    }
    if data.train.n_classes != spec.output_dim() {
        return Err(Error::InvalidConfig(format!(
            "network has {} outputs, data has {} classes",
            spec.output_dim(),
            data.train.n_classes
        )));
    }
    let variant = Variant {
        algorithm: config.algorithm,
        optimizer: config.optimizer,
    };
    let mut trainer = Trainer::new(spec, *config)?;
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let loss = trainer.train_epoch(&data.train)?.mean_loss;
        log::debug!("{variant} seed {}: epoch {epoch} loss {loss:.6}", config.seed);
        loss_curve.push(loss);
    }
    let test_predictions = predict_classes(&trainer.state, &data.test.inputs)?;
    let test_accuracy = accuracy(&test_predictions, &data.test.labels)?;
    Ok(RunArtifact {
        dataset: data.train.name.clone(),
        variant,
        seed: config.seed,
        config: *config,
        train_samples: data.train.len(),
        final_state: trainer.state,
        feedback: trainer.feedback,
        test_predictions,
        test_labels: data.test.labels.clone(),
        test_accuracy,
        loss_curve,
    })
}

/// A grid of runs: every seed crossed with every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    pub dataset: DatasetKind,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Variant>,
    /// Shared hyperparameters; `algorithm`, `optimizer` and `seed` are
    /// replaced per run.
    pub config: TrainConfig,
    /// Per-variant learning rates that replace `config.learning_rate`.
    pub learning_rates: BTreeMap<Variant, f64>,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            dataset: DatasetKind::Mnist,
            seeds: (1..=10).collect(),
            algorithms: Variant::all(),
            config: TrainConfig::default(),
            learning_rates: BTreeMap::new(),
        }
    }
}

impl SuiteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("a suite needs at least one seed and one algorithm".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        let mut algs = self.algorithms.clone();
        algs.sort_unstable();
        algs.dedup();
        if seeds.len() != self.seeds.len() || algs.len() != self.algorithms.len() {
            return Err(Error::InvalidConfig("suite seeds and algorithms must be distinct".into()));
        }
        self.config.validate()?;
        for job in self.jobs() {
            job.validate()?;
        }
        Ok(())
    }

    /// Per-run configs in seed-major, algorithm-minor order.
    pub fn jobs(&self) -> Vec<TrainConfig> {
        self.seeds
            .iter()
            .flat_map(|&seed| {
                self.algorithms.iter().map(move |&v| TrainConfig {
                    algorithm: v.algorithm,
                    optimizer: v.optimizer,
                    seed,
                    learning_rate: self.learning_rates.get(&v).copied().unwrap_or(self.config.learning_rate),
                    ..self.config
                })
            })
            .collect()
    }
}

fn run_job<T>(
    data: &DatasetPair,
    spec: &NetworkSpec,
    config: &TrainConfig,
    sink: &(impl Fn(RunArtifact) -> Result<T> + Sync),
) -> Result<T> {
    run_single(data, spec, config)
        .and_then(sink)
        .map_err(|e| Error::Run {
            seed: config.seed,
            algorithm: Variant {
                algorithm: config.algorithm,
                optimizer: config.optimizer,
            }
            .name(),
            source: Box::new(e),
        })
}

/// Runs the suite, handing each finished artifact to `sink`. Runs execute on
/// a pool of `threads` workers (`None` uses every core); results come back
/// in seed-major, algorithm-minor order regardless.
pub fn run_suite_with<T: Send>(
    suite: &SuiteSpec,
    data: &DatasetPair,
    network: &NetworkSpec,
    threads: Option<usize>,
    sink: impl Fn(RunArtifact) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    suite.validate()?;
    let jobs = suite.jobs();
    if threads == Some(1) {
        return jobs.iter().map(|c| run_job(data, network, c, &sink)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|c| run_job(data, network, c, &sink)).collect())
}

pub fn run_suite(
    suite: &SuiteSpec,
    data: &DatasetPair,
    network: &NetworkSpec,
    threads: Option<usize>,
) -> Result<Vec<RunArtifact>> {
    run_suite_with(suite, data, network, threads, Ok)
}

/// One line of a suite summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub algorithm: Variant,
    pub seed: u64,
    pub test_accuracy: f64,
    pub final_loss: Option<f64>,
    pub path: PathBuf,
}

/// Runs the suite and saves every artifact under `out` as soon as it
/// finishes, so at most one trained model per worker is held in memory.
/// Summary paths are relative to `out`.
pub fn run_suite_to_dir(
    suite: &SuiteSpec,
    data: &DatasetPair,
    network: &NetworkSpec,
    threads: Option<usize>,
    out: &Path,
    on_done: impl Fn(&RunSummary) + Sync,
) -> Result<Vec<RunSummary>> {
    run_suite_with(suite, data, network, threads, |artifact| {
        let dir = save_artifact(&artifact, out)?;
        let summary = RunSummary {
            dataset: artifact.dataset,
            algorithm: artifact.variant,
            seed: artifact.seed,
            test_accuracy: artifact.test_accuracy,
            final_loss: artifact.loss_curve.last().copied(),
            path: dir.strip_prefix(out).map(Path::to_path_buf).unwrap_or(dir),
        };
        on_done(&summary);
        Ok(summary)
    })
}

/// Loads every artifact below `root` (see [`find_artifacts`] for ordering).
pub fn load_all(root: &Path) -> Result<Vec<RunArtifact>> {
    find_artifacts(root)?.iter().map(|d| load_artifact(d)).collect()
}
