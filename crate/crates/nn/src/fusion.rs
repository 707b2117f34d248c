//! Seven-layer fully convolutional weight-map predictor for exposure fusion.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{self, conv_backward, conv_forward, ConvSpec, ConvTape, Param};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::unet::check_params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionNetConfig {
    pub in_channels: usize,
    /// Widths of the six hidden 3x3 layers.
    pub features: [usize; 6],
}

impl Default for FusionNetConfig {
    fn default() -> Self {
        FusionNetConfig {
            in_channels: 6,
            features: [16, 16, 32, 32, 16, 16],
        }
    }
}

impl FusionNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.features.contains(&0) {
            return Err(Error::Config("fusion network widths must be positive".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<ConvSpec> {
        let mut v = Vec::with_capacity(7);
        let mut cin = self.in_channels;
        for (i, &f) in self.features.iter().enumerate() {
            v.push(ConvSpec::new(format!("conv{}", i + 1), cin, f, 3, true));
            cin = f;
        }
        v.push(ConvSpec::new("out", cin, 1, 1, false));
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionNet<T> {
    config: FusionNetConfig,
    specs: Vec<ConvSpec>,
    params: Vec<Param<T>>,
}

pub struct FusionTape<T> {
    convs: Vec<ConvTape<T>>,
    weight: Tensor<T>,
}

impl<T: Scalar> FusionTape<T> {
    /// Identifies the ReLU activation pattern at this input.
    pub fn region_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.convs {
            c.hash_pattern(&mut h);
        }
        h.finish()
    }
}

impl<T: Scalar> FusionNet<T> {
    pub fn new(config: FusionNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let specs = config.layers();
        let params = layers::init_params(&specs, seed);
        Ok(FusionNet { config, specs, params })
    }

    pub fn from_params(config: FusionNetConfig, params: Vec<Param<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.layers();
        check_params(&specs, &params)?;
        Ok(FusionNet { config, specs, params })
    }

    pub fn config(&self) -> &FusionNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.value.data_mut().fill(T::zero());
        }
    }

    /// Weight map in `[0, 1]`, shape `[n, 1, h, w]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_tape(x).map(|(w, _)| w)
    }

    pub fn forward_tape(&self, x: &Tensor<T>) -> Result<(Tensor<T>, FusionTape<T>)> {
        if x.channels() != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "fusion network expects {} input channels, got {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        let mut convs = Vec::with_capacity(self.specs.len());
        let mut h = x.clone();
        for (i, spec) in self.specs.iter().enumerate() {
            let (y, t) = conv_forward(&self.params, spec, i, h)?;
            convs.push(t);
            h = y;
        }
        let weight = ops::sigmoid(&h);
        Ok((weight.clone(), FusionTape { convs, weight }))
    }

    /// Gradients given the gradient of the loss with respect to the weight map.
    pub fn backward(
        &self,
        tape: &FusionTape<T>,
        dweight: Tensor<T>,
        need_dx: bool,
    ) -> Result<(Vec<Tensor<T>>, Option<Tensor<T>>)> {
        let mut grads = layers::zero_grads(&self.params);
        let mut g = Some(ops::sigmoid_backward(&tape.weight, &dweight));
        for i in (0..self.specs.len()).rev() {
            let dy = g.take().expect("dx requested");
            g = conv_backward(
                &self.params,
                &self.specs[i],
                i,
                &tape.convs[i],
                dy,
                &mut grads,
                i > 0 || need_dx,
            )?;
        }
        Ok((grads, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_range() {
        let net = FusionNet::<f32>::new(FusionNetConfig::default(), 3).unwrap();
        let x = Tensor::from_fn([1, 6, 9, 7], |i| ((i * 31 % 17) as f32) / 17.0);
        let w = net.forward(&x).unwrap();
        assert_eq!(w.shape(), [1, 1, 9, 7]);
        assert!(w.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(net.params().len(), 14);
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let mut net = FusionNet::<f32>::new(FusionNetConfig::default(), 3).unwrap();
        net.zero_output_layer();
        let x = Tensor::from_fn([1, 6, 8, 8], |i| (i as f32).sin());
        assert!(net.forward(&x).unwrap().data().iter().all(|&v| v == 0.5));
    }
}
