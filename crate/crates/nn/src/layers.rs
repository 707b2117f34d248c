//! Parameter storage and the conv(+ReLU) layer plumbing shared by both nets.

use std::hash::{Hash, Hasher};

use lsd2_core::Rng;

use crate::error::Result;
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Static description of one convolution layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub relu: bool,
}

impl ConvSpec {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, k: usize, relu: bool) -> Self {
        ConvSpec {
            name: name.into(),
            cin,
            cout,
            k,
            relu,
        }
    }
}

/// Weight and bias for every layer, in layer order: entry `2i` is the weight
/// of layer `i`, entry `2i + 1` its bias. Weights are uniform in
/// `±sqrt(6 / fan_in)` for ReLU layers and `±sqrt(1 / fan_in)` for the
/// output layer; biases start at zero.
pub fn init_params<T: Scalar>(specs: &[ConvSpec], seed: u64) -> Vec<Param<T>> {
    let mut rng = Rng::stream(seed, 0);
    let mut out = Vec::with_capacity(2 * specs.len());
    for s in specs {
        let fan_in = (s.cin * s.k * s.k) as f64;
        let bound = if s.relu { (6.0 / fan_in).sqrt() } else { (1.0 / fan_in).sqrt() };
        let w = Tensor::from_fn([s.cout, s.cin, s.k, s.k], |_| {
            T::from_f64_lossy(rng.uniform(-bound, bound))
        });
        out.push(Param {
            name: format!("{}.weight", s.name),
            value: w,
        });
        out.push(Param {
            name: format!("{}.bias", s.name),
            value: Tensor::zeros([s.cout, 1, 1, 1]),
        });
    }
    out
}

pub fn zero_grads<T: Scalar>(params: &[Param<T>]) -> Vec<Tensor<T>> {
    params.iter().map(|p| Tensor::zeros(p.value.shape())).collect()
}

pub(crate) struct ConvTape<T> {
    x: Tensor<T>,
    y: Tensor<T>,
    relu: bool,
}

impl<T: Scalar> ConvTape<T> {
    /// Feeds the ReLU on/off pattern into `h`.
    pub(crate) fn hash_pattern(&self, h: &mut impl Hasher) {
        if self.relu {
            for v in self.y.data() {
                (*v > T::zero()).hash(h);
            }
        }
    }
}

pub(crate) fn conv_forward<T: Scalar>(
    params: &[Param<T>],
    spec: &ConvSpec,
    idx: usize,
    x: Tensor<T>,
) -> Result<(Tensor<T>, ConvTape<T>)> {
    let mut y = ops::conv2d(&x, &params[2 * idx].value, &params[2 * idx + 1].value)?;
    if spec.relu {
        y = ops::relu(&y);
    }
    let tape = ConvTape {
        x,
        y: y.clone(),
        relu: spec.relu,
    };
    Ok((y, tape))
}

/// Accumulates the layer's parameter gradients into `grads` and returns the
/// input gradient if requested.
pub(crate) fn conv_backward<T: Scalar>(
    params: &[Param<T>],
    spec: &ConvSpec,
    idx: usize,
    tape: &ConvTape<T>,
    dy: Tensor<T>,
    grads: &mut [Tensor<T>],
    need_dx: bool,
) -> Result<Option<Tensor<T>>> {
    let dy = if spec.relu { ops::relu_backward(&tape.y, &dy) } else { dy };
    let g = ops::conv2d_backward(&tape.x, &params[2 * idx].value, &params[2 * idx + 1].value, &dy, need_dx)?;
    grads[2 * idx].add_assign(&g.dw);
    grads[2 * idx + 1].add_assign(&g.db);
    Ok(g.dx)
}
