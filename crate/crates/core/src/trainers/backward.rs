//! Backward passes.
//!
//! Every rule shares the output layer: `dW_n = -e_n y_{n-1}^T`, `db_n = -e_n`
//! with `e_n = dL/dz_n`. They differ in how a hidden layer `i` receives its
//! error before the `* act'(z_i)` gate:
//!
//! - backpropagation: `W_{i+1}^T e_{i+1}`
//! - feedback alignment (plain and uniform-sign): `B_{i+1} e_{i+1}`
//! - direct feedback alignment: `B_i e_n`
//!
//! Deltas carry the leading minus sign, so an update adds `lr * dW`. Batched
//! inputs produce deltas averaged over the batch rows.

use super::feedback::{FeedbackKind, FeedbackState};
use super::Algorithm;
use crate::network::{ForwardCache, NetworkState};
use crate::tensor::{Matrix, Vector};
use crate::{Error, Result};

/// Per-layer parameter deltas, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDeltas {
    pub dw: Vec<Matrix>,
    pub db: Vec<Vector>,
}

impl LayerDeltas {
    pub fn zeros_like(state: &NetworkState) -> Self {
        LayerDeltas {
            dw: state
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            db: state.biases.iter().map(|b| Vector::zeros(b.len())).collect(),
        }
    }
}

pub fn bp_backward(state: &NetworkState, cache: &ForwardCache, out_delta: &Matrix) -> Result<LayerDeltas> {
    backward_with(state, cache, out_delta, |k, next_error| {
        next_error.matmul(&state.weights[k + 1])
    })
}

pub fn fa_backward(
    state: &NetworkState,
    feedback: &FeedbackState,
    cache: &ForwardCache,
    out_delta: &Matrix,
) -> Result<LayerDeltas> {
    check_feedback(state, feedback, FeedbackKind::Layerwise)?;
    backward_with(state, cache, out_delta, |k, next_error| {
        next_error.matmul_transpose_rhs(&feedback.matrices[k])
    })
}

pub fn dfa_backward(
    state: &NetworkState,
    feedback: &FeedbackState,
    cache: &ForwardCache,
    out_delta: &Matrix,
) -> Result<LayerDeltas> {
    check_feedback(state, feedback, FeedbackKind::Direct)?;
    backward_with(state, cache, out_delta, |k, _| {
        out_delta.matmul_transpose_rhs(&feedback.matrices[k])
    })
}

/// Dispatches to the backward rule of `algorithm`.
///
/// The weighted DFA variant shares the DFA deltas; its per-layer weighting is
/// applied by the update step.
pub fn backward(
    algorithm: Algorithm,
    state: &NetworkState,
    feedback: &FeedbackState,
    cache: &ForwardCache,
    out_delta: &Matrix,
) -> Result<LayerDeltas> {
    match algorithm {
        Algorithm::Bp => {
            check_feedback(state, feedback, FeedbackKind::None)?;
            bp_backward(state, cache, out_delta)
        }
        Algorithm::Fa | Algorithm::Usfa => fa_backward(state, feedback, cache, out_delta),
        Algorithm::Dfa | Algorithm::Wdfa => dfa_backward(state, feedback, cache, out_delta),
    }
}

fn check_feedback(state: &NetworkState, feedback: &FeedbackState, kind: FeedbackKind) -> Result<()> {
    if feedback.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "expected {kind:?} feedback, got {:?}",
            feedback.kind
        )));
    }
    feedback.validate(&state.spec)
}

/// Shared skeleton: `propagate(k, e_{k+1})` returns the error arriving at
/// hidden layer `k` (0-based) before the activation gate.
fn backward_with(
    state: &NetworkState,
    cache: &ForwardCache,
    out_delta: &Matrix,
    propagate: impl Fn(usize, &Matrix) -> Result<Matrix>,
) -> Result<LayerDeltas> {
    let n = state.num_layers();
    let batch = cache.batch_size();
    if cache.pre_activations.len() != n || cache.activations.len() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "forward cache holds {} layers, network has {n}",
            cache.pre_activations.len()
        )));
    }
    let expected = (batch, state.spec.output_dim());
    if out_delta.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "output delta",
            left: out_delta.shape(),
            right: expected,
        });
    }

    let mut errors: Vec<Matrix> = Vec::with_capacity(n);
    errors.push(out_delta.clone());
    for k in (0..n - 1).rev() {
        let arriving = propagate(k, errors.last().expect("seeded with the output error"))?;
        let act = state.spec.layers()[k].activation;
        let gate = cache.pre_activations[k].map(|z| act.derivative(z));
        errors.push(arriving.hadamard(&gate)?);
    }
    errors.reverse();

    let scale = -1.0 / batch as f64;
    let mut dw = Vec::with_capacity(n);
    let mut db = Vec::with_capacity(n);
    for (k, e) in errors.iter().enumerate() {
        dw.push(e.transpose_matmul(&cache.activations[k])?.scale(scale));
        db.push(e.sum_rows().map(|x| x * scale));
    }
    Ok(LayerDeltas { dw, db })
}
