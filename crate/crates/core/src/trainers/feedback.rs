//! Fixed random feedback matrices used by the alignment algorithms.

use super::Algorithm;
use crate::network::{uniform_matrix, NetworkSpec, NetworkState};
use crate::rng::{self, streams};
use crate::tensor::Matrix;
use crate::{Error, Result};

/// How the feedback matrices are wired into the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    /// No feedback matrices; the backward pass uses the forward weights.
    None,
    /// One matrix per layer boundary standing in for `W_{i+1}^T`. Entry `j`
    /// pairs with layer `j + 1` (0-based) and has shape `in_dim x out_dim`.
    Layerwise,
    /// One matrix per hidden layer projecting the output error straight
    /// into that layer. Entry `j` has shape `out_dim_j x out_dim_last`.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackState {
    pub kind: FeedbackKind,
    pub matrices: Vec<Matrix>,
}

impl FeedbackState {
    pub fn empty() -> Self {
        FeedbackState {
            kind: FeedbackKind::None,
            matrices: Vec::new(),
        }
    }

    /// Shapes the matrices must have for `spec`.
    pub fn expected_shapes(kind: FeedbackKind, spec: &NetworkSpec) -> Vec<(usize, usize)> {
        let layers = spec.layers();
        match kind {
            FeedbackKind::None => Vec::new(),
            FeedbackKind::Layerwise => layers[1..].iter().map(|l| (l.in_dim, l.out_dim)).collect(),
            FeedbackKind::Direct => layers[..layers.len() - 1]
                .iter()
                .map(|l| (l.out_dim, spec.output_dim()))
                .collect(),
        }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = Self::expected_shapes(self.kind, spec);
        if expected.len() != self.matrices.len() {
            return Err(Error::InvalidArgument(format!(
                "{:?} feedback needs {} matrices, got {}",
                self.kind,
                expected.len(),
                self.matrices.len()
            )));
        }
        for (b, shape) in self.matrices.iter().zip(expected) {
            if b.shape() != shape {
                return Err(Error::ShapeMismatch {
                    op: "feedback matrix",
                    left: b.shape(),
                    right: shape,
                });
            }
        }
        Ok(())
    }
}

/// Draws the feedback matrices for `algorithm` from the feedback substream.
///
/// Entries are `Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` where `fan_in` is
/// the number of columns, the length of the error vector the matrix consumes.
/// The uniform-sign variant gets random matrices here too; training replaces
/// them with `sign(W^T)` before the first update.
pub fn init_feedback(spec: &NetworkSpec, algorithm: Algorithm, seed: u64) -> FeedbackState {
    let kind = algorithm.feedback_kind();
    let mut rng = rng::substream(seed, streams::FEEDBACK);
    let matrices = FeedbackState::expected_shapes(kind, spec)
        .into_iter()
        .map(|(rows, cols)| uniform_matrix(&mut rng, rows, cols, cols))
        .collect();
    FeedbackState { kind, matrices }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Elementwise `sign(w^T)`, with `sign(0) = 0`.
pub fn sign_transpose(w: &Matrix) -> Matrix {
    w.transpose().map(sign)
}

/// Layerwise feedback `B_{i} = sign(W_{i}^T)` for every layer after the first.
pub fn usfa_sync_feedback(state: &NetworkState) -> FeedbackState {
    FeedbackState {
        kind: FeedbackKind::Layerwise,
        matrices: state.weights[1..].iter().map(sign_transpose).collect(),
    }
}
