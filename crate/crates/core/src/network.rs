//! Multilayer perceptron definition, seeded initialization and forward pass.
//!
//! Layer `i` computes `z_i = W_i y_{i-1} + b_i` and `y_i = act(z_i)`, with
//! `W_i` stored as `out_dim x in_dim`. Batched passes keep one sample per row,
//! so a batch of inputs is a `batch x in_dim` matrix and the pre-activation is
//! `Y_{i-1} W_i^T + b_i`.
//!
//! The output layer is a sigmoid trained with per-class binary cross-entropy
//! summed over the classes, for which `dL/dz_n = y - t`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, streams};
use crate::tensor::{Matrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    pub fn apply(self, z: &Vector) -> Vector {
        z.map(|x| self.eval(x))
    }

    pub fn apply_derivative(self, z: &Vector) -> Vector {
        z.map(|x| self.derivative(x))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayerSpec>", into = "Vec<LayerSpec>")]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(Error::InvalidConfig(format!("layer {i} has a zero dimension")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(NetworkSpec { layers })
    }

    /// Tanh hidden layers followed by a sigmoid output layer.
    pub fn mlp(input_dim: usize, hidden: &[usize], n_classes: usize) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(n_classes);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                in_dim: w[0],
                out_dim: w[1],
                activation: if i == last {
                    Activation::Sigmoid
                } else {
                    Activation::Tanh
                },
            })
            .collect();
        Self::new(layers)
    }

    /// 784-768-256-128-10 for flattened 28x28 MNIST digits.
    pub fn mnist() -> Self {
        Self::mlp(784, &[768, 256, 128], 10).expect("static architecture is valid")
    }

    /// 3072-768-256-128-10 for flattened 3x32x32 CIFAR-10 images.
    pub fn cifar10() -> Self {
        Self::mlp(3072, &[768, 256, 128], 10).expect("static architecture is valid")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }
}

impl TryFrom<Vec<LayerSpec>> for NetworkSpec {
    type Error = Error;
    fn try_from(layers: Vec<LayerSpec>) -> Result<Self> {
        NetworkSpec::new(layers)
    }
}

impl From<NetworkSpec> for Vec<LayerSpec> {
    fn from(spec: NetworkSpec) -> Self {
        spec.layers
    }
}

/// Trainable parameters of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

/// Pre-activations and activations of every layer for a batch of inputs.
///
/// `activations[0]` is the input batch; `activations[i]` and
/// `pre_activations[i - 1]` belong to layer `i` (1-based).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre_activations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }

    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds the input")
    }

    pub fn output_logits(&self) -> &Matrix {
        self.pre_activations.last().expect("network has a layer")
    }
}

/// Draws every `W_i` i.i.d. from `Uniform(-1/sqrt(in_dim), 1/sqrt(in_dim))`
/// using the weight substream of `seed`, layer by layer in row-major order.
/// Biases start at zero.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> NetworkState {
    let mut rng = rng::substream(seed, streams::WEIGHTS);
    let weights = spec
        .layers()
        .iter()
        .map(|l| uniform_matrix(&mut rng, l.out_dim, l.in_dim, l.in_dim))
        .collect();
    let biases = spec.layers().iter().map(|l| Vector::zeros(l.out_dim)).collect();
    NetworkState {
        spec: spec.clone(),
        weights,
        biases,
    }
}

/// `rows x cols` matrix with entries from `Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}

impl NetworkState {
    /// All-zero parameters, mostly useful in tests.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkState {
            spec: spec.clone(),
            weights: spec
                .layers()
                .iter()
                .map(|l| Matrix::zeros(l.out_dim, l.in_dim))
                .collect(),
            biases: spec.layers().iter().map(|l| Vector::zeros(l.out_dim)).collect(),
        }
    }

    /// Checks that parameter shapes match the spec.
    pub fn validate(&self) -> Result<()> {
        let n = self.spec.len();
        if self.weights.len() != n || self.biases.len() != n {
            return Err(Error::InvalidArgument(format!(
                "state holds {} weights and {} biases for a {n}-layer spec",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (i, l) in self.spec.layers().iter().enumerate() {
            if self.weights[i].shape() != (l.out_dim, l.in_dim) {
                return Err(Error::ShapeMismatch {
                    op: "network weights",
                    left: self.weights[i].shape(),
                    right: (l.out_dim, l.in_dim),
                });
            }
            if self.biases[i].len() != l.out_dim {
                return Err(Error::ShapeMismatch {
                    op: "network biases",
                    left: (self.biases[i].len(), 1),
                    right: (l.out_dim, 1),
                });
            }
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass for a single input vector (a batch of one).
    pub fn forward(&self, x: &Vector) -> Result<ForwardCache> {
        self.forward_batch(&x.to_row_matrix())
    }

    /// Forward pass for a `batch x input_dim` matrix.
    pub fn forward_batch(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.cols() != self.spec.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: x.shape(),
                right: (x.rows(), self.spec.input_dim()),
            });
        }
        let n = self.num_layers();
        let mut pre_activations = Vec::with_capacity(n);
        let mut activations = Vec::with_capacity(n + 1);
        activations.push(x.clone());
        for (i, layer) in self.spec.layers().iter().enumerate() {
            let z = activations[i]
                .matmul_transpose_rhs(&self.weights[i])?
                .add_row_vector(&self.biases[i])?;
            let y = z.map(|v| layer.activation.eval(v));
            pre_activations.push(z);
            activations.push(y);
        }
        Ok(ForwardCache {
            pre_activations,
            activations,
        })
    }

    /// Output-layer activations for a batch, skipping the cache.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.clone();
        for (i, layer) in self.spec.layers().iter().enumerate() {
            y = y
                .matmul_transpose_rhs(&self.weights[i])?
                .add_row_vector(&self.biases[i])?
                .map(|v| layer.activation.eval(v));
        }
        Ok(y)
    }
}

fn check_one_hot(target: &Vector) -> Result<usize> {
    let mut hot = None;
    for (k, &t) in target.iter().enumerate() {
        if t == 1.0 {
            if hot.is_some() {
                return Err(Error::InvalidArgument("target has more than one hot entry".into()));
            }
            hot = Some(k);
        } else if t != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "target entry {k} is {t}, expected 0 or 1"
            )));
        }
    }
    hot.ok_or_else(|| Error::InvalidArgument("target has no hot entry".into()))
}

/// Per-class binary cross-entropy `-sum_k [t_k ln y_k + (1 - t_k) ln(1 - y_k)]`
/// and the output error `dL/dz_n = y - t`.
///
/// Outputs must lie in `[0, 1]`; at an exact fit the loss is zero.
pub fn loss_and_output_delta(y_out: &Vector, target: &Vector) -> Result<(f64, Vector)> {
    if y_out.len() != target.len() {
        return Err(Error::ShapeMismatch {
            op: "loss_and_output_delta",
            left: (y_out.len(), 1),
            right: (target.len(), 1),
        });
    }
    check_one_hot(target)?;
    if let Some(bad) = y_out.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::InvalidArgument(format!("output {bad} is outside [0, 1]")));
    }
    let loss = y_out
        .iter()
        .zip(target.iter())
        .map(|(&y, &t)| if t == 1.0 { -y.ln() } else { -(1.0 - y).ln() })
        .sum::<f64>();
    let delta = y_out.axpy_scale(target, -1.0)?;
    Ok((loss, delta))
}

/// Batched loss computed from the output logits.
///
/// Returns the summed loss over the batch and the `batch x classes` output
/// error `Y - T`.
pub fn batch_loss_and_delta(cache: &ForwardCache, labels: &[usize]) -> Result<(f64, Matrix)> {
    let logits = cache.output_logits();
    let y = cache.output();
    if labels.len() != logits.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    let mut delta = y.clone();
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        for (k, &z) in logits.row(r).iter().enumerate() {
            loss += if k == label { softplus(-z) } else { softplus(z) };
        }
        let d = delta.get(r, label) - 1.0;
        delta.set(r, label, d);
    }
    Ok((loss, delta))
}

/// Index of the largest output; ties go to the lowest index.
pub fn predict_class(y_out: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in y_out.iter().enumerate() {
        if v > y_out[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(label: usize, n_classes: usize) -> Vector {
    let mut v = Vector::zeros(n_classes);
    v[label] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::mlp(4, &[3], 2).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let spec = tiny_spec();
        assert_eq!(init_network(&spec, 7), init_network(&spec, 7));
        assert_ne!(init_network(&spec, 7).weights, init_network(&spec, 8).weights);
    }

    #[test]
    fn mnist_shapes_and_range() {
        let spec = NetworkSpec::mnist();
        let state = init_network(&spec, 1);
        let shapes: Vec<_> = state.weights.iter().map(Matrix::shape).collect();
        assert_eq!(shapes, vec![(768, 784), (256, 768), (128, 256), (10, 128)]);
        let bound = 1.0 / 784f64.sqrt();
        assert!(state.weights[0].as_slice().iter().all(|w| w.abs() < bound));
        assert!(state.biases.iter().all(|b| b.iter().all(|&x| x == 0.0)));
        state.validate().unwrap();
    }

    #[test]
    fn spec_validation() {
        let l = |i, o| LayerSpec {
            in_dim: i,
            out_dim: o,
            activation: Activation::Tanh,
        };
        assert!(NetworkSpec::new(vec![]).is_err());
        assert!(NetworkSpec::new(vec![l(3, 0)]).is_err());
        assert!(NetworkSpec::new(vec![l(3, 4), l(5, 2)]).is_err());
        assert!(NetworkSpec::new(vec![l(3, 4), l(4, 2)]).is_ok());
        let spec = NetworkSpec::cifar10();
        assert_eq!(spec.input_dim(), 3072);
        assert_eq!(spec.layers().last().unwrap().activation, Activation::Sigmoid);
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Tanh.eval(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.eval(0.0), 0.5);
        assert_eq!(Activation::Tanh.eval(1e6), 1.0);
        assert_eq!(Activation::Sigmoid.eval(1e6), 1.0);
        assert_eq!(Activation::Sigmoid.eval(-1e6), 0.0);
        assert_eq!(Activation::Tanh.derivative(0.0), 1.0);
        assert_eq!(Activation::Sigmoid.derivative(0.0), 0.25);
        let z = Vector::new(vec![0.0, 1e6]);
        assert_eq!(Activation::Tanh.apply(&z), Vector::new(vec![0.0, 1.0]));
        assert_eq!(
            Activation::Sigmoid.apply_derivative(&Vector::new(vec![0.0])),
            Vector::new(vec![0.25])
        );
    }

    #[test]
    fn activation_derivative_matches_finite_difference() {
        for act in [Activation::Tanh, Activation::Sigmoid] {
            for z in [-2.0, -0.5, 0.3, 1.7] {
                let fd = central_diff(|x| act.eval(x), z, 1e-5);
                assert!(
                    (fd - act.derivative(z)).abs() < 1e-8,
                    "{act:?} at {z}: {fd} vs {}",
                    act.derivative(z)
                );
            }
        }
    }

    #[test]
    fn forward_with_zero_parameters() {
        let spec = NetworkSpec::mnist();
        let cache = NetworkState::zeros(&spec).forward(&Vector::filled(784, 0.3)).unwrap();
        for z in &cache.pre_activations {
            assert!(z.as_slice().iter().all(|&v| v == 0.0));
        }
        for y in &cache.activations[1..4] {
            assert!(y.as_slice().iter().all(|&v| v == 0.0));
        }
        assert_eq!(cache.output().as_slice(), &[0.5; 10]);
    }

    #[test]
    fn forward_single_layer() {
        let spec = NetworkSpec::new(vec![LayerSpec {
            in_dim: 2,
            out_dim: 1,
            activation: Activation::Tanh,
        }])
        .unwrap();
        let state = NetworkState {
            spec,
            weights: vec![Matrix::from_rows(&[[1.0, 1.0]]).unwrap()],
            biases: vec![Vector::zeros(1)],
        };
        let cache = state.forward(&Vector::zeros(2)).unwrap();
        assert_eq!(cache.output().as_slice(), &[0.0]);
        assert_eq!(cache.activations[0].as_slice(), &[0.0, 0.0]);
        assert!(state.forward(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn forward_cache_invariant_and_output_range() {
        let spec = NetworkSpec::mnist();
        let state = init_network(&spec, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = Vector::new((0..784).map(|_| rng.random::<f64>()).collect());
        let cache = state.forward(&x).unwrap();
        assert_eq!(cache.activations[0].as_slice(), x.as_slice());
        for (i, layer) in spec.layers().iter().enumerate() {
            let expected = cache.pre_activations[i].map(|v| layer.activation.eval(v));
            assert_eq!(cache.activations[i + 1], expected);
        }
        assert_eq!(cache.output().cols(), 10);
        assert!(cache.output().as_slice().iter().all(|&y| y > 0.0 && y < 1.0));
        let direct = state.predict_batch(&x.to_row_matrix()).unwrap();
        assert_eq!(&direct, cache.output());
    }

    #[test]
    fn loss_at_symmetry_point() {
        let y = Vector::filled(10, 0.5);
        let t = one_hot(3, 10);
        let (loss, delta) = loss_and_output_delta(&y, &t).unwrap();
        assert!((loss - 10.0 * 2f64.ln()).abs() < 1e-12);
        assert!((loss - 6.9315).abs() < 1e-4);
        assert_eq!(delta, y.axpy_scale(&t, -1.0).unwrap());
    }

    #[test]
    fn loss_exact_fit_is_zero() {
        let t = one_hot(1, 3);
        let (loss, delta) = loss_and_output_delta(&t, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(delta, Vector::zeros(3));
    }

    #[test]
    fn loss_rejects_bad_targets() {
        let y = Vector::filled(3, 0.5);
        assert!(loss_and_output_delta(&y, &Vector::new(vec![1.0, 1.0, 0.0])).is_err());
        assert!(loss_and_output_delta(&y, &Vector::new(vec![0.5, 0.5, 0.0])).is_err());
        assert!(loss_and_output_delta(&y, &Vector::zeros(3)).is_err());
        assert!(loss_and_output_delta(&y, &one_hot(0, 4)).is_err());
        assert!(loss_and_output_delta(&Vector::filled(3, 1.5), &one_hot(0, 3)).is_err());
    }

    #[test]
    fn output_delta_matches_finite_difference_through_sigmoid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let z: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = one_hot(rng.random_range(0..10), 10);
            let loss_at = |z: &[f64]| {
                let y = Activation::Sigmoid.apply(&Vector::new(z.to_vec()));
                loss_and_output_delta(&y, &t).unwrap().0
            };
            let y = Activation::Sigmoid.apply(&Vector::new(z.clone()));
            let (_, delta) = loss_and_output_delta(&y, &t).unwrap();
            for k in 0..10 {
                let h = 1e-6;
                let mut zp = z.clone();
                zp[k] += h;
                let mut zm = z.clone();
                zm[k] -= h;
                let fd = (loss_at(&zp) - loss_at(&zm)) / (2.0 * h);
                assert!((fd - delta[k]).abs() < 1e-8, "{fd} vs {}", delta[k]);
            }
        }
    }

    #[test]
    fn batch_loss_agrees_with_vector_loss() {
        let spec = tiny_spec();
        let state = init_network(&spec, 5);
        let x = Matrix::from_rows(&[[0.1, 0.2, -0.3, 0.4], [1.0, -1.0, 0.5, 0.0]]).unwrap();
        let cache = state.forward_batch(&x).unwrap();
        let labels = [1, 0];
        let (loss, delta) = batch_loss_and_delta(&cache, &labels).unwrap();
        let mut expected = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let (l, d) =
                loss_and_output_delta(&cache.output().row_vector(r), &one_hot(label, 2)).unwrap();
            expected += l;
            assert_eq!(d.as_slice(), delta.row(r));
        }
        assert!((loss - expected).abs() < 1e-12);
        assert!(batch_loss_and_delta(&cache, &[1]).is_err());
        assert!(batch_loss_and_delta(&cache, &[1, 2]).is_err());
    }

    #[test]
    fn batch_loss_stays_finite_when_saturated() {
        let spec = NetworkSpec::new(vec![LayerSpec {
            in_dim: 1,
            out_dim: 2,
            activation: Activation::Sigmoid,
        }])
        .unwrap();
        let state = NetworkState {
            spec,
            weights: vec![Matrix::from_rows(&[[100.0], [-100.0]]).unwrap()],
            biases: vec![Vector::zeros(2)],
        };
        let cache = state.forward(&Vector::new(vec![1.0])).unwrap();
        let (loss, _) = batch_loss_and_delta(&cache, &[1]).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 200.0).abs() < 1e-9);
    }

    #[test]
    fn predict_class_cases() {
        assert_eq!(predict_class(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(predict_class(&[0.4; 5]), 0);
        assert_eq!(predict_class(&[0.2, 0.7, 0.7]), 1);
    }

    proptest! {
        #[test]
        fn argmax_shift_invariant(
            v in proptest::collection::vec(-10.0f64..10.0, 1..12),
            c in -5.0f64..5.0,
        ) {
            // Dyadic values keep the shifted comparisons exact.
            let v: Vec<f64> = v.iter().map(|x| (x * 64.0).round() / 64.0).collect();
            let c = (c * 64.0).round() / 64.0;
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert_eq!(predict_class(&v), predict_class(&shifted));
        }

        #[test]
        fn loss_is_non_negative(
            y in proptest::collection::vec(0.0f64..=1.0, 10),
            label in 0usize..10,
        ) {
            let (loss, _) = loss_and_output_delta(&Vector::new(y), &one_hot(label, 10)).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}
