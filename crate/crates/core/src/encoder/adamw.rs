use super::mlp::EncoderParams;
use super::train::TrainConfig;
use crate::error::{Error, Result};

/// First and second moment estimates mirroring [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub first: EncoderParams,
    pub second: EncoderParams,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &EncoderParams) -> Self {
        OptimState { first: params.zeros_like(), second: params.zeros_like(), step: 0 }
    }
}

/// One Adam step with decoupled weight decay:
/// `w <- w * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adamw_step(
    params: &mut EncoderParams,
    state: &mut OptimState,
    grads: &EncoderParams,
    cfg: &TrainConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first) || !params.same_shape(&state.second) {
        return Err(Error::data("parameter, gradient and optimizer state shapes differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;

    let tensors =
        params.tensors_mut().zip(grads.tensors()).zip(state.first.tensors_mut()).zip(state.second.tensors_mut());
    for (((w, g), m), v) in tensors {
        for i in 0..w.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] = w[i] * decay - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
