use crate::error::{Error, Result};

/// Bias-corrected first and second moment estimates over a flat parameter
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        AdamState { learning_rate, beta1, beta2, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One ADAM update of `params` in place. Entries with `trainable[i] = false`
/// are left untouched.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], trainable: Option<&[bool]>) -> Result<()> {
    if params.len() != state.len() || grads.len() != state.len() {
        return Err(Error::dim(format!(
            "ADAM state of {} entries, {} params, {} grads",
            state.len(),
            params.len(),
            grads.len()
        )));
    }
    if let Some(t) = trainable {
        if t.len() != state.len() {
            return Err(Error::dim("trainable mask length differs from parameters"));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        if trainable.is_some_and(|t| !t[i]) {
            continue;
        }
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
