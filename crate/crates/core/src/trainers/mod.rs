//! Training: the five backward rules, feedback matrices, per-layer learning
//! rate factors, parameter updates and the epoch loop.

mod backward;
mod feedback;
mod optimizer;
mod schedule;

pub use backward::{backward, bp_backward, dfa_backward, fa_backward, LayerDeltas};
pub use feedback::{init_feedback, sign_transpose, usfa_sync_feedback, FeedbackKind, FeedbackState};
pub use optimizer::{apply_update, AdamParams, OptimizerKind, OptimizerState};
pub use schedule::wdfa_lr_factors;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::network::{self, init_network, NetworkSpec, NetworkState};
use crate::rng::{self, streams, StreamRng};
use crate::tensor::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Backpropagation.
    Bp,
    /// Direct feedback alignment.
    Dfa,
    /// Direct feedback alignment with per-layer learning-rate factors.
    Wdfa,
    /// Feedback alignment with fixed random feedback.
    Fa,
    /// Feedback alignment with feedback `sign(W^T)` refreshed after every update.
    Usfa,
}

impl Algorithm {
    /// Every algorithm, in reporting order.
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Bp,
        Algorithm::Dfa,
        Algorithm::Wdfa,
        Algorithm::Fa,
        Algorithm::Usfa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Dfa => "dfa",
            Algorithm::Wdfa => "wdfa",
            Algorithm::Fa => "fa",
            Algorithm::Usfa => "usfa",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Bp => "BP",
            Algorithm::Dfa => "DFA",
            Algorithm::Wdfa => "WDFA",
            Algorithm::Fa => "FA",
            Algorithm::Usfa => "USFA",
        }
    }

    pub fn feedback_kind(self) -> FeedbackKind {
        match self {
            Algorithm::Bp => FeedbackKind::None,
            Algorithm::Fa | Algorithm::Usfa => FeedbackKind::Layerwise,
            Algorithm::Dfa | Algorithm::Wdfa => FeedbackKind::Direct,
        }
    }

    /// Per-layer learning-rate multipliers: the weighted schedule for WDFA,
    /// ones otherwise.
    pub fn lr_factors(self, n_layers: usize) -> Result<Vec<f64>> {
        match self {
            Algorithm::Wdfa => wdfa_lr_factors(n_layers),
            _ => Ok(vec![1.0; n_layers]),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Bp,
            learning_rate: 1e-4,
            epochs: 60,
            batch_size: 64,
            weight_decay: 1e-5,
            optimizer: OptimizerKind::None,
            adam: AdamParams::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate or zero epochs are accepted as degenerate runs.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::InvalidConfig("Adam needs betas in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// Mean per-sample training loss, measured before each batch's update.
    pub mean_loss: f64,
}

/// Runs one epoch of mini-batch training in place.
///
/// Sample order is reshuffled from `rng`; each batch's deltas are averaged
/// over its samples before the update. Uniform-sign feedback is re-derived
/// from the weights before the first batch and after every update.
pub fn train_epoch(
    state: &mut NetworkState,
    feedback: &mut FeedbackState,
    optimizer: &mut OptimizerState,
    dataset: &Dataset,
    config: &TrainConfig,
    rng: &mut StreamRng,
) -> Result<EpochMetrics> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    config.validate()?;
    let algorithm = config.algorithm;
    let lr_factors = algorithm.lr_factors(state.num_layers())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);

    if algorithm == Algorithm::Usfa {
        *feedback = usfa_sync_feedback(state);
    }
    let mut total_loss = 0.0;
    for chunk in order.chunks(config.batch_size) {
        let (x, labels) = dataset.batch(chunk);
        let cache = state.forward_batch(&x)?;
        let (loss, out_delta) = network::batch_loss_and_delta(&cache, &labels)?;
        total_loss += loss;
        let deltas = backward(algorithm, state, feedback, &cache, &out_delta)?;
        apply_update(state, &deltas, config, optimizer, &lr_factors)?;
        if algorithm == Algorithm::Usfa {
            *feedback = usfa_sync_feedback(state);
        }
    }
    Ok(EpochMetrics {
        mean_loss: total_loss / dataset.len() as f64,
    })
}

const EVAL_CHUNK: usize = 1000;

/// Mean per-sample loss over a dataset.
pub fn evaluate_loss(state: &NetworkState, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut total = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, labels) = dataset.batch(chunk);
        let cache = state.forward_batch(&x)?;
        total += network::batch_loss_and_delta(&cache, &labels)?.0;
    }
    Ok(total / dataset.len() as f64)
}

/// Argmax class for every row of `inputs`.
pub fn predict_classes(state: &NetworkState, inputs: &Matrix) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(inputs.rows());
    let mut start = 0;
    while start < inputs.rows() {
        let end = (start + EVAL_CHUNK).min(inputs.rows());
        let rows: Vec<&[f64]> = (start..end).map(|r| inputs.row(r)).collect();
        let y = state.predict_batch(&Matrix::from_rows(&rows)?)?;
        out.extend((0..y.rows()).map(|r| network::predict_class(y.row(r))));
        start = end;
    }
    Ok(out)
}

/// Everything one training run mutates, initialized from a config.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub state: NetworkState,
    pub feedback: FeedbackState,
    pub optimizer: OptimizerState,
    rng: StreamRng,
}

impl Trainer {
    /// Weights come from the weight substream of `config.seed`, so every
    /// algorithm starts from the same parameters for a given seed.
    pub fn new(spec: &NetworkSpec, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = init_network(spec, config.seed);
        let feedback = match config.algorithm {
            Algorithm::Usfa => usfa_sync_feedback(&state),
            alg => init_feedback(spec, alg, config.seed),
        };
        let optimizer = OptimizerState::new(config.optimizer, &state);
        Ok(Trainer {
            config,
            state,
            feedback,
            optimizer,
            rng: rng::substream(config.seed, streams::SHUFFLE),
        })
    }

    pub fn train_epoch(&mut self, dataset: &Dataset) -> Result<EpochMetrics> {
        train_epoch(
            &mut self.state,
            &mut self.feedback,
            &mut self.optimizer,
            dataset,
            &self.config,
            &mut self.rng,
        )
    }

    /// Trains for `config.epochs` epochs and returns the per-epoch mean loss.
    pub fn fit(&mut self, dataset: &Dataset) -> Result<Vec<f64>> {
        (0..self.config.epochs)
            .map(|_| self.train_epoch(dataset).map(|m| m.mean_loss))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_synthetic, SyntheticSpec};

    fn small_data() -> Dataset {
        make_synthetic(&SyntheticSpec {
            n_samples: 50,
            input_dim: 6,
            n_classes: 3,
            seed: 4,
            mean_scale: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert_eq!("DFA".parse::<Algorithm>().unwrap(), Algorithm::Dfa);
        assert!("sgd".parse::<Algorithm>().is_err());
    }

    #[test]
    fn lr_factors_only_weighted_for_wdfa() {
        assert_eq!(Algorithm::Dfa.lr_factors(4).unwrap(), vec![1.0; 4]);
        assert_eq!(Algorithm::Wdfa.lr_factors(4).unwrap(), wdfa_lr_factors(4).unwrap());
    }

    #[test]
    fn zero_learning_rate_leaves_state_unchanged() {
        let data = small_data();
        let spec = NetworkSpec::mlp(6, &[5, 4], 3).unwrap();
        for alg in Algorithm::ALL {
            for optimizer in [OptimizerKind::None, OptimizerKind::Adam] {
                let config = TrainConfig {
                    algorithm: alg,
                    learning_rate: 0.0,
                    batch_size: 8,
                    optimizer,
                    ..TrainConfig::default()
                };
                let mut t = Trainer::new(&spec, config).unwrap();
                let before = t.state.clone();
                t.train_epoch(&data).unwrap();
                assert_eq!(t.state, before, "{alg:?} {optimizer:?}");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = small_data();
        let spec = NetworkSpec::mlp(6, &[5, 4], 3).unwrap();
        for alg in Algorithm::ALL {
            let config = TrainConfig {
                algorithm: alg,
                learning_rate: 0.05,
                epochs: 2,
                batch_size: 7,
                ..TrainConfig::default()
            };
            let mut a = Trainer::new(&spec, config).unwrap();
            let mut b = Trainer::new(&spec, config).unwrap();
            assert_eq!(a.fit(&data).unwrap(), b.fit(&data).unwrap());
            assert_eq!(a.state, b.state);
        }
    }

    #[test]
    fn fixed_feedback_is_never_mutated_and_usfa_tracks_weights() {
        let data = small_data();
        let spec = NetworkSpec::mlp(6, &[5, 4], 3).unwrap();
        for alg in [Algorithm::Fa, Algorithm::Dfa, Algorithm::Wdfa] {
            let config = TrainConfig {
                algorithm: alg,
                learning_rate: 0.1,
                epochs: 2,
                batch_size: 5,
                ..TrainConfig::default()
            };
            let mut t = Trainer::new(&spec, config).unwrap();
            let initial = t.feedback.clone();
            t.fit(&data).unwrap();
            assert_eq!(t.feedback, initial, "{alg:?}");
        }
        let config = TrainConfig {
            algorithm: Algorithm::Usfa,
            learning_rate: 0.1,
            epochs: 2,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(&spec, config).unwrap();
        assert_eq!(t.feedback, usfa_sync_feedback(&t.state));
        t.fit(&data).unwrap();
        assert_eq!(t.feedback, usfa_sync_feedback(&t.state));
    }

    #[test]
    fn rejects_empty_dataset_and_bad_config() {
        let spec = NetworkSpec::mlp(6, &[5], 3).unwrap();
        let mut t = Trainer::new(&spec, TrainConfig::default()).unwrap();
        let empty = small_data().take(0);
        assert!(t.train_epoch(&empty).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(&spec, bad).is_err());
        let bad = TrainConfig {
            learning_rate: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn predict_classes_matches_per_sample_forward() {
        let data = small_data();
        let spec = NetworkSpec::mlp(6, &[5], 3).unwrap();
        let state = init_network(&spec, 2);
        let preds = predict_classes(&state, &data.inputs).unwrap();
        for (i, &p) in preds.iter().enumerate() {
            let cache = state.forward(&data.input(i)).unwrap();
            assert_eq!(p, network::predict_class(cache.output().row(0)));
        }
    }
}
