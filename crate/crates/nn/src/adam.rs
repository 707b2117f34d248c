use crate::layers::Param;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Param<T>], lr: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Tensor<T>]) {
        adam_step(params, grads, self)
    }
}

pub fn adam_step<T: Scalar>(params: &mut [Param<T>], grads: &[Tensor<T>], state: &mut AdamState<T>) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    assert_eq!(params.len(), state.m.len(), "moment buffers match parameters");
    state.step += 1;
    let t = state.step as i32;
    let c = T::from_f64_lossy;
    let (b1, b2) = (c(state.beta1), c(state.beta2));
    let (one_b1, one_b2) = (c(1.0 - state.beta1), c(1.0 - state.beta2));
    let corr1 = c(1.0 - state.beta1.powi(t));
    let corr2 = c(1.0 - state.beta2.powi(t));
    let (lr, eps) = (c(state.lr), c(state.epsilon));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.value.shape(), g.shape(), "gradient shape for {}", p.name);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            let mhat = *mi / corr1;
            let vhat = *vi / corr2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
