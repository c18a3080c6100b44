#![allow(dead_code)]

use feedalign::network::{batch_loss_and_delta, init_network, NetworkSpec, NetworkState};
use feedalign::tensor::Matrix;
use feedalign::trainers::bp_backward;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Network with uniform weights and nonzero biases, plus a batch to feed it.
pub fn random_problem(spec: &NetworkSpec, batch: usize, seed: u64) -> (NetworkState, Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init_network(spec, seed);
    for w in &mut state.weights {
        w.as_mut_slice().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    for b in &mut state.biases {
        b.as_mut_slice().iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
    }
    let data: Vec<f64> = (0..batch * spec.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Matrix::from_vec(batch, spec.input_dim(), data).unwrap();
    let labels = (0..batch).map(|_| rng.random_range(0..spec.output_dim())).collect();
    (state, x, labels)
}

/// Mean per-sample loss of `state` on a batch.
pub fn mean_loss(state: &NetworkState, x: &Matrix, labels: &[usize]) -> f64 {
    let cache = state.forward_batch(x).unwrap();
    batch_loss_and_delta(&cache, labels).unwrap().0 / x.rows() as f64
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative error between BP's `-dW`, `-db` and central differences
/// of the mean batch loss.
pub fn max_gradient_error(state: &NetworkState, x: &Matrix, labels: &[usize], h: f64) -> f64 {
    let cache = state.forward_batch(x).unwrap();
    let (_, out_delta) = batch_loss_and_delta(&cache, labels).unwrap();
    let deltas = bp_backward(state, &cache, &out_delta).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..state.num_layers() {
        for i in 0..state.weights[k].as_slice().len() {
            let mut plus = state.clone();
            plus.weights[k].as_mut_slice()[i] += h;
            let mut minus = state.clone();
            minus.weights[k].as_mut_slice()[i] -= h;
            let numeric = (mean_loss(&plus, x, labels) - mean_loss(&minus, x, labels)) / (2.0 * h);
            worst = worst.max(rel_err(-deltas.dw[k].as_slice()[i], numeric));
        }
        for i in 0..state.biases[k].len() {
            let mut plus = state.clone();
            plus.biases[k].as_mut_slice()[i] += h;
            let mut minus = state.clone();
            minus.biases[k].as_mut_slice()[i] -= h;
            let numeric = (mean_loss(&plus, x, labels) - mean_loss(&minus, x, labels)) / (2.0 * h);
            worst = worst.max(rel_err(-deltas.db[k].as_slice()[i], numeric));
        }
    }
    worst
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
