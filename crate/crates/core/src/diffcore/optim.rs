// SPDX-License-Identifier: MIT OR Apache-2.0

use super::tensor::Tensor;

/// Plain gradient descent: `p -= lr * g`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        debug_assert_eq!(p.shape(), g.shape());
        for (v, d) in p.data_mut().iter_mut().zip(g.data()) {
            *v -= lr * d;
        }
    }
}

/// Moment buffers for [`adam_step`].
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.second = state.first.clone();
    }
    state.step += 1;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.first[k], &mut state.second[k]);
        for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * d;
            v[i] = beta2 * v[i] + (1.0 - beta2) * d * d;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Adam with its hyperparameters bundled.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: AdamState,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: AdamState::default(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        adam_step(
            params,
            grads,
            &mut self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        );
    }
}
