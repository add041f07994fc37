//! Adam with bias correction over a flat list of parameter tensors.

use super::{TrainConfig, TrainError};
use crate::tensor::Tensor;

/// First and second moment accumulators, one pair per parameter tensor,
/// plus the shared step counter.
pub struct OptimizerState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    /// Zero-initialized state shaped after `params`.
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros = |p: &&Tensor| Tensor::zeros(p.shape().to_vec());
        Self {
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update over all parameters, in place.
///
/// `params`, `grads`, and `state` must be index-aligned with matching
/// shapes; the state must have been built from the same parameter list.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::Config(format!(
            "optimizer saw {} parameters, {} gradients, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(TrainError::Config(format!(
                "parameter {} has shape {:?} but gradient {:?} and state {:?}",
                i,
                p.shape(),
                g.shape(),
                state.m[i].shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, grad) in grads.iter().enumerate() {
        let m = state.m[i].data_mut();
        for (mv, &gv) in m.iter_mut().zip(grad.data()) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
        }
        let v = state.v[i].data_mut();
        for (vv, &gv) in v.iter_mut().zip(grad.data()) {
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((pv, &mv), &vv) in params[i].data_mut().iter_mut().zip(m).zip(v) {
            *pv -= cfg.learning_rate * (mv / bc1) / ((vv / bc2).sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
