//! Encoder/decoder with skip connections.
//!
//! Level `l` works with `base * 2^l` features: two 3x3 conv+ReLU, then 2x2
//! max pooling. The bottleneck has two more conv+ReLU layers. Each decoder
//! level upsamples (nearest), applies a 3x3 conv+ReLU, concatenates the
//! encoder features of that level and runs two 3x3 conv+ReLU. A linear 1x1
//! conv produces the output channels.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{self, conv_backward, conv_forward, ConvSpec, ConvTape, Param};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub depth: usize,
    pub base_features: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 6,
            out_channels: 3,
            depth: 3,
            base_features: 32,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_features == 0 {
            return Err(Error::Config("U-Net channel counts must be positive".into()));
        }
        if self.depth > 8 {
            return Err(Error::Config(format!("U-Net depth {} is too large", self.depth)));
        }
        Ok(())
    }

    fn features(&self, level: usize) -> usize {
        self.base_features << level
    }

    pub fn layers(&self) -> Vec<ConvSpec> {
        let d = self.depth;
        let mut v = Vec::new();
        for l in 0..d {
            let cin = if l == 0 { self.in_channels } else { self.features(l - 1) };
            let f = self.features(l);
            v.push(ConvSpec::new(format!("enc{l}.conv1"), cin, f, 3, true));
            v.push(ConvSpec::new(format!("enc{l}.conv2"), f, f, 3, true));
        }
        let cin = if d == 0 { self.in_channels } else { self.features(d - 1) };
        let f = self.features(d);
        v.push(ConvSpec::new("mid.conv1", cin, f, 3, true));
        v.push(ConvSpec::new("mid.conv2", f, f, 3, true));
        for l in (0..d).rev() {
            let f = self.features(l);
            v.push(ConvSpec::new(format!("dec{l}.up"), self.features(l + 1), f, 3, true));
            v.push(ConvSpec::new(format!("dec{l}.conv1"), 2 * f, f, 3, true));
            v.push(ConvSpec::new(format!("dec{l}.conv2"), f, f, 3, true));
        }
        v.push(ConvSpec::new("out", self.features(0), self.out_channels, 1, false));
        v
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UNet<T> {
    config: UNetConfig,
    specs: Vec<ConvSpec>,
    params: Vec<Param<T>>,
}

/// Intermediate values kept for the backward pass.
pub struct UNetTape<T> {
    convs: Vec<ConvTape<T>>,
    pools: Vec<([usize; 4], Vec<usize>)>,
}

impl<T: Scalar> UNetTape<T> {
    /// Identifies the linear region of the network at this input: ReLU
    /// masks and max-pool selections.
    pub fn region_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.convs {
            c.hash_pattern(&mut h);
        }
        for (_, arg) in &self.pools {
            arg.hash(&mut h);
        }
        h.finish()
    }
}

impl<T: Scalar> UNet<T> {
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let specs = config.layers();
        let params = layers::init_params(&specs, seed);
        Ok(UNet { config, specs, params })
    }

    pub fn from_params(config: UNetConfig, params: Vec<Param<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.layers();
        check_params(&specs, &params)?;
        Ok(UNet { config, specs, params })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Zeroes the weights and bias of the output layer.
    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.value.data_mut().fill(T::zero());
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let m = self.config.size_multiple();
        if x.channels() != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "U-Net expects {} input channels, got {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        if x.height() % m != 0 || x.width() % m != 0 || x.height() == 0 || x.width() == 0 {
            return Err(Error::Dimension(format!(
                "U-Net input {}x{} is not divisible by {m}",
                x.width(),
                x.height()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_tape(x).map(|(y, _)| y)
    }

    pub fn forward_tape(&self, x: &Tensor<T>) -> Result<(Tensor<T>, UNetTape<T>)> {
        self.check_input(x)?;
        let d = self.config.depth;
        let mut tape = UNetTape {
            convs: Vec::with_capacity(self.specs.len()),
            pools: Vec::with_capacity(d),
        };
        let mut idx = 0;
        let mut conv = |h: Tensor<T>, tape: &mut UNetTape<T>| -> Result<Tensor<T>> {
            let (y, t) = conv_forward(&self.params, &self.specs[idx], idx, h)?;
            tape.convs.push(t);
            idx += 1;
            Ok(y)
        };
        let mut h = x.clone();
        let mut skips = Vec::with_capacity(d);
        for _ in 0..d {
            h = conv(h, &mut tape)?;
            h = conv(h, &mut tape)?;
            let (pooled, arg) = ops::maxpool2x2(&h)?;
            tape.pools.push((h.shape(), arg));
            skips.push(h);
            h = pooled;
        }
        h = conv(h, &mut tape)?;
        h = conv(h, &mut tape)?;
        for _ in 0..d {
            let up = conv(ops::upsample2x(&h), &mut tape)?;
            let skip = skips.pop().expect("one skip per level");
            h = conv(ops::concat(&skip, &up)?, &mut tape)?;
            h = conv(h, &mut tape)?;
        }
        let y = conv(h, &mut tape)?;
        Ok((y, tape))
    }

    /// Parameter gradients (aligned with [`UNet::params`]) and, if
    /// `need_dx`, the input gradient.
    pub fn backward(
        &self,
        tape: &UNetTape<T>,
        dy: Tensor<T>,
        need_dx: bool,
    ) -> Result<(Vec<Tensor<T>>, Option<Tensor<T>>)> {
        let d = self.config.depth;
        let mut grads = layers::zero_grads(&self.params);
        let mut idx = self.specs.len();
        let mut back = |g: Tensor<T>, grads: &mut Vec<Tensor<T>>, dx: bool| -> Result<Option<Tensor<T>>> {
            idx -= 1;
            conv_backward(&self.params, &self.specs[idx], idx, &tape.convs[idx], g, grads, dx)
        };
        let mut g = back(dy, &mut grads, true)?.expect("dx requested");
        let mut skip_grads = Vec::with_capacity(d);
        for l in 0..d {
            g = back(g, &mut grads, true)?.expect("dx requested");
            let gcat = back(g, &mut grads, true)?.expect("dx requested");
            let (gskip, gup) = ops::concat_backward(&gcat, self.config.features(l));
            skip_grads.push(gskip);
            let gu = back(gup, &mut grads, true)?.expect("dx requested");
            g = ops::upsample2x_backward(&gu)?;
        }
        g = back(g, &mut grads, true)?.expect("dx requested");
        let mut dx = back(g, &mut grads, d > 0 || need_dx)?;
        for l in (0..d).rev() {
            let (shape, arg) = &tape.pools[l];
            let mut gl = ops::maxpool2x2_backward(*shape, arg, &dx.take().expect("dx requested"));
            gl.add_assign(&skip_grads[l]);
            let gl = back(gl, &mut grads, true)?.expect("dx requested");
            dx = back(gl, &mut grads, l > 0 || need_dx)?;
        }
        Ok((grads, dx))
    }
}

pub(crate) fn check_params<T: Scalar>(specs: &[ConvSpec], params: &[Param<T>]) -> Result<()> {
    if params.len() != 2 * specs.len() {
        return Err(Error::Config(format!(
            "expected {} parameter tensors, got {}",
            2 * specs.len(),
            params.len()
        )));
    }
    for (i, s) in specs.iter().enumerate() {
        let expect = [
            (format!("{}.weight", s.name), [s.cout, s.cin, s.k, s.k]),
            (format!("{}.bias", s.name), [s.cout, 1, 1, 1]),
        ];
        for (j, (name, shape)) in expect.into_iter().enumerate() {
            let p = &params[2 * i + j];
            if p.name != name || p.value.shape() != shape {
                return Err(Error::Config(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
    }
    Ok(())
}
