use crate::error::{Error, Result};
use crate::models::ModelParams;

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState {
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

/// `v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v`
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &[Option<&[f64]>],
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let names: Vec<String> = params.named().iter().map(|(n, _)| n.clone()).collect();
    if grads.len() != names.len() {
        return Err(Error::contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            names.len()
        )));
    }
    if state.velocity.is_empty() {
        state.velocity = params.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
    }
    for (i, (param, name)) in params.tensors_mut().zip(&names).enumerate() {
        let grad = grads[i].ok_or_else(|| Error::contract(format!("no gradient for {name}")))?;
        let v = &mut state.velocity[i];
        if grad.len() != param.len() || v.len() != param.len() {
            return Err(Error::contract(format!("gradient of {name} has the wrong length")));
        }
        for ((p, vi), &gi) in param.data_mut().iter_mut().zip(v.iter_mut()).zip(grad) {
            *vi = momentum * *vi + gi + weight_decay * *p;
            *p -= lr * *vi;
        }
    }
    Ok(())
}
