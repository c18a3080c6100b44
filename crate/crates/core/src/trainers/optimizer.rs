//! Parameter updates: plain gradient steps with weight decay, or Adam.

use serde::{Deserialize, Serialize};

use super::backward::LayerDeltas;
use super::TrainConfig;
use crate::network::NetworkState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    None,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates; unused (empty) for plain updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub first_moment: LayerDeltas,
    pub second_moment: LayerDeltas,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, state: &NetworkState) -> Self {
        let zeros = match kind {
            OptimizerKind::None => LayerDeltas {
                dw: Vec::new(),
                db: Vec::new(),
            },
            OptimizerKind::Adam => LayerDeltas::zeros_like(state),
        };
        OptimizerState {
            kind,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }
}

/// Applies one update in place.
///
/// Plain: `W <- (1 - lr*wd) W + lr*f_i dW` and `b <- b + lr*f_i db`.
/// Adam: the gradient is `-dW`; the bias-corrected step is scaled by
/// `lr*f_i` and weight decay `(1 - lr*wd)` acts on the pre-step weights.
/// Biases are never decayed.
pub fn apply_update(
    state: &mut NetworkState,
    deltas: &LayerDeltas,
    config: &TrainConfig,
    optimizer: &mut OptimizerState,
    lr_factors: &[f64],
) -> Result<()> {
    let n = state.num_layers();
    if deltas.dw.len() != n || deltas.db.len() != n || lr_factors.len() != n {
        return Err(Error::InvalidArgument(format!(
            "update for {n} layers got {} weight deltas, {} bias deltas and {} lr factors",
            deltas.dw.len(),
            deltas.db.len(),
            lr_factors.len()
        )));
    }
    for k in 0..n {
        if deltas.dw[k].shape() != state.weights[k].shape() {
            return Err(Error::ShapeMismatch {
                op: "apply_update",
                left: state.weights[k].shape(),
                right: deltas.dw[k].shape(),
            });
        }
        if deltas.db[k].len() != state.biases[k].len() {
            return Err(Error::ShapeMismatch {
                op: "apply_update",
                left: (state.biases[k].len(), 1),
                right: (deltas.db[k].len(), 1),
            });
        }
    }
    if optimizer.kind != config.optimizer {
        return Err(Error::InvalidArgument(format!(
            "optimizer state is {:?} but config asks for {:?}",
            optimizer.kind, config.optimizer
        )));
    }
    if optimizer.kind == OptimizerKind::Adam {
        let moments = [&optimizer.first_moment, &optimizer.second_moment];
        let fits = moments.iter().all(|m| {
            m.dw.len() == n
                && m.db.len() == n
                && (0..n).all(|k| {
                    m.dw[k].shape() == state.weights[k].shape() && m.db[k].len() == state.biases[k].len()
                })
        });
        if !fits {
            return Err(Error::InvalidArgument(
                "Adam moments do not match the network shapes".into(),
            ));
        }
    }

    let lr = config.learning_rate;
    let decay = 1.0 - lr * config.weight_decay;
    match optimizer.kind {
        OptimizerKind::None => {
            for (k, factor) in lr_factors.iter().enumerate() {
                let step = lr * factor;
                for (w, d) in state.weights[k]
                    .as_mut_slice()
                    .iter_mut()
                    .zip(deltas.dw[k].as_slice())
                {
                    *w = decay * *w + step * d;
                }
                for (b, d) in state.biases[k]
                    .as_mut_slice()
                    .iter_mut()
                    .zip(deltas.db[k].as_slice())
                {
                    *b += step * d;
                }
            }
        }
        OptimizerKind::Adam => {
            let p = config.adam;
            optimizer.step_count += 1;
            let t = optimizer.step_count as i32;
            let c1 = 1.0 - p.beta1.powi(t);
            let c2 = 1.0 - p.beta2.powi(t);
            for (k, factor) in lr_factors.iter().enumerate() {
                let step = lr * factor;
                adam_step(
                    state.weights[k].as_mut_slice(),
                    deltas.dw[k].as_slice(),
                    optimizer.first_moment.dw[k].as_mut_slice(),
                    optimizer.second_moment.dw[k].as_mut_slice(),
                    (p, c1, c2, step, decay),
                );
                adam_step(
                    state.biases[k].as_mut_slice(),
                    deltas.db[k].as_slice(),
                    optimizer.first_moment.db[k].as_mut_slice(),
                    optimizer.second_moment.db[k].as_mut_slice(),
                    (p, c1, c2, step, 1.0),
                );
            }
        }
    }
    Ok(())
}

fn adam_step(
    params: &mut [f64],
    deltas: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    (p, c1, c2, step, decay): (AdamParams, f64, f64, f64, f64),
) {
    for i in 0..params.len() {
        let g = -deltas[i];
        m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
        v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] = decay * params[i] - step * m_hat / (v_hat.sqrt() + p.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, Activation, LayerSpec, NetworkSpec};
    use crate::tensor::{Matrix, Vector};
    use crate::trainers::Algorithm;

    fn single(dw: Matrix, db: Vector) -> LayerDeltas {
        LayerDeltas {
            dw: vec![dw],
            db: vec![db],
        }
    }

    fn scalar_state(w: f64) -> NetworkState {
        let spec = NetworkSpec::new(vec![LayerSpec {
            in_dim: 1,
            out_dim: 1,
            activation: Activation::Sigmoid,
        }])
        .unwrap();
        NetworkState {
            spec,
            weights: vec![Matrix::from_vec(1, 1, vec![w]).unwrap()],
            biases: vec![Vector::zeros(1)],
        }
    }

    fn config(lr: f64, decay: f64, optimizer: OptimizerKind) -> TrainConfig {
        TrainConfig {
            algorithm: Algorithm::Bp,
            learning_rate: lr,
            weight_decay: decay,
            optimizer,
            ..TrainConfig::default()
        }
    }

    fn scalar_deltas(dw: f64) -> LayerDeltas {
        single(Matrix::from_vec(1, 1, vec![dw]).unwrap(), Vector::zeros(1))
    }

    #[test]
    fn zero_deltas_leave_state_unchanged() {
        let spec = NetworkSpec::mlp(3, &[4], 2).unwrap();
        let mut state = init_network(&spec, 1);
        let before = state.clone();
        let cfg = config(0.1, 0.0, OptimizerKind::None);
        let mut opt = OptimizerState::new(OptimizerKind::None, &state);
        let deltas = LayerDeltas::zeros_like(&state);
        apply_update(&mut state, &deltas, &cfg, &mut opt, &[1.0, 1.0]).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn plain_step() {
        let mut state = scalar_state(1.0);
        let cfg = config(0.1, 0.0, OptimizerKind::None);
        let mut opt = OptimizerState::new(OptimizerKind::None, &state);
        apply_update(&mut state, &scalar_deltas(-1.0), &cfg, &mut opt, &[1.0]).unwrap();
        assert!((state.weights[0].get(0, 0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn plain_step_with_decay_and_factor() {
        let mut state = scalar_state(2.0);
        state.biases[0][0] = 1.0;
        let cfg = config(0.1, 0.5, OptimizerKind::None);
        let mut opt = OptimizerState::new(OptimizerKind::None, &state);
        let deltas = single(
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Vector::new(vec![1.0]),
        );
        apply_update(&mut state, &deltas, &cfg, &mut opt, &[2.0]).unwrap();
        // (1 - 0.05) * 2 + 0.1 * 2 * 1
        assert!((state.weights[0].get(0, 0) - 2.1).abs() < 1e-15);
        // biases skip decay
        assert!((state.biases[0][0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.25, 1e-3] {
            let mut state = scalar_state(0.5);
            let cfg = config(1e-3, 0.0, OptimizerKind::Adam);
            let mut opt = OptimizerState::new(OptimizerKind::Adam, &state);
            // gradient g corresponds to delta -g
            apply_update(&mut state, &scalar_deltas(-g), &cfg, &mut opt, &[1.0]).unwrap();
            let moved = state.weights[0].get(0, 0) - 0.5;
            let expected = -1e-3 * g.signum();
            assert!((moved - expected).abs() < 1e-6, "g={g}: {moved}");
            assert_eq!(opt.step_count, 1);
        }
    }

    #[test]
    fn adam_moments_start_at_zero() {
        let spec = NetworkSpec::mlp(3, &[4], 2).unwrap();
        let state = init_network(&spec, 1);
        let opt = OptimizerState::new(OptimizerKind::Adam, &state);
        assert_eq!(opt.step_count, 0);
        assert_eq!(opt.first_moment, LayerDeltas::zeros_like(&state));
        assert_eq!(opt.second_moment, LayerDeltas::zeros_like(&state));
    }

    #[test]
    fn rejects_shape_mismatch_without_mutating() {
        let spec = NetworkSpec::mlp(3, &[4], 2).unwrap();
        let mut state = init_network(&spec, 1);
        let before = state.clone();
        let cfg = config(0.1, 0.0, OptimizerKind::None);
        let mut opt = OptimizerState::new(OptimizerKind::None, &state);
        let mut deltas = LayerDeltas::zeros_like(&state);
        deltas.dw[1] = Matrix::zeros(3, 3);
        assert!(apply_update(&mut state, &deltas, &cfg, &mut opt, &[1.0, 1.0]).is_err());
        assert!(apply_update(&mut state, &LayerDeltas::zeros_like(&before), &cfg, &mut opt, &[1.0]).is_err());
        assert_eq!(state, before);
    }
}
