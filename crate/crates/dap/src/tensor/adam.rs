//! Adam with bias correction over a `ParamStore`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::ParamStore;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            moments: BTreeMap::new(),
        }
    }
}

/// One Adam update over every parameter. Gradients are consumed (cleared).
pub fn adam_step(params: &ParamStore, state: &mut AdamState) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for (name, tensor) in params.iter() {
        let grad = tensor
            .take_grad()
            .ok_or_else(|| Error::State(format!("missing gradient for parameter {name}")))?;
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
        if m.len() != grad.len() {
            return Err(Error::State(format!(
                "moment shape mismatch for parameter {name}"
            )));
        }
        let mut data = tensor.to_vec();
        for i in 0..grad.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            data[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
        tensor.set_data(data);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::param(&[2], vec![1.0, 2.0]));
        params.get("w").accumulate_grad(&[0.0, 0.0]);
        let mut state = AdamState::new(0.1);
        adam_step(&params, &mut state).unwrap();
        assert_eq!(params.get("w").to_vec(), vec![1.0, 2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn missing_grad_is_state_error() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::param(&[1], vec![1.0]));
        let mut state = AdamState::new(0.1);
        assert!(matches!(
            adam_step(&params, &mut state),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn matches_scalar_reference_trace() {
        // hand-rolled Adam on a single scalar with constant gradient
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let g = 0.3;
        let mut x_ref = 1.5;
        let (mut m, mut v) = (0.0, 0.0);
        let mut ref_trace = Vec::new();
        for t in 1..=5 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - f64::powi(b1, t));
            let vhat = v / (1.0 - f64::powi(b2, t));
            x_ref -= lr * mhat / (vhat.sqrt() + eps);
            ref_trace.push(x_ref);
        }

        let mut params = ParamStore::new();
        params.insert("x", Tensor::param(&[1], vec![1.5]));
        let mut state = AdamState::new(lr);
        for want in ref_trace {
            params.get("x").accumulate_grad(&[g]);
            adam_step(&params, &mut state).unwrap();
            assert!((params.get("x").to_vec()[0] - want).abs() < 1e-15);
            assert!(params.get("x").grad().is_none(), "grads cleared after step");
        }
    }
}
