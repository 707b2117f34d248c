//! Model wrapper shared by training, inference and checkpoints.

use lsd2_core::{Image, CHANNELS};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionNet, FusionNetConfig};
use crate::layers::Param;
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::unet::{UNet, UNetConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lsd2,
    Fusion,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lsd2 => "lsd2",
            ModelKind::Fusion => "fusion",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Lsd2 => 0,
            ModelKind::Fusion => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Lsd2),
            1 => Some(ModelKind::Fusion),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ModelConfig {
    Lsd2(UNetConfig),
    Fusion(FusionNetConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Lsd2(_) => ModelKind::Lsd2,
            ModelConfig::Fusion(_) => ModelKind::Fusion,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model<T> {
    Lsd2(UNet<T>),
    Fusion(FusionNet<T>),
}

/// One training example as network tensors (batch size 1).
#[derive(Clone, Debug)]
pub struct TrainSample<T> {
    /// Short and long exposure stacked along channels.
    pub input: Tensor<T>,
    pub short: Tensor<T>,
    pub long: Tensor<T>,
    pub target: Tensor<T>,
}

impl<T: Scalar> TrainSample<T> {
    pub fn from_images(short: &Image, long: &Image, target: &Image) -> Result<Self> {
        short.same_dims(long)?;
        short.same_dims(target)?;
        let short = image_to_tensor(short);
        let long = image_to_tensor(long);
        Ok(TrainSample {
            input: ops::concat(&short, &long)?,
            short,
            long,
            target: image_to_tensor(target),
        })
    }
}

/// Interleaved RGB image to a `[1, 3, h, w]` tensor.
pub fn image_to_tensor<T: Scalar>(img: &Image) -> Tensor<T> {
    let (w, h) = img.dims();
    let plane = w * h;
    let src = img.data();
    Tensor::from_fn([1, CHANNELS, h, w], |i| {
        let (c, p) = (i / plane, i % plane);
        T::from_f32(src[p * CHANNELS + c]).unwrap()
    })
}

/// First batch item of a 3-channel tensor as an image, clamped to `[0, 1]`.
pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>) -> Result<Image> {
    if t.channels() != CHANNELS {
        return Err(Error::Dimension(format!(
            "expected a {CHANNELS}-channel tensor, got {}",
            t.channels()
        )));
    }
    let (w, h) = (t.width(), t.height());
    let plane = w * h;
    let item = t.item(0);
    let data = (0..plane * CHANNELS)
        .map(|i| {
            let v = item[(i % CHANNELS) * plane + i / CHANNELS].to_f32().unwrap();
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(Image::new(w, h, data)?)
}

fn stacked<T: Scalar>(short: &Image, long: &Image) -> Result<Tensor<T>> {
    short.same_dims(long)?;
    ops::concat(&image_to_tensor(short), &image_to_tensor(long))
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Extends `img` to `width` x `height` by mirroring at the right and bottom
/// edges.
pub fn pad_reflect(img: &Image, width: usize, height: usize) -> Image {
    let (w, h) = img.dims();
    Image::from_fn(width, height, |x, y, c| img.get(reflect(x, w), reflect(y, h), c))
}

/// Restored image from a short/long pair. Inputs whose size is not a
/// multiple of `2^depth` are reflect-padded and the output cropped back; the
/// raw network output is clamped to `[0, 1]`.
pub fn unet_forward<T: Scalar>(net: &UNet<T>, short: &Image, long: &Image) -> Result<Image> {
    short.same_dims(long)?;
    let m = net.config().size_multiple();
    let (w, h) = short.dims();
    let (pw, ph) = (w.div_ceil(m) * m, h.div_ceil(m) * m);
    if (pw, ph) == (w, h) {
        return tensor_to_image(&net.forward(&stacked(short, long)?)?);
    }
    let x = stacked::<T>(&pad_reflect(short, pw, ph), &pad_reflect(long, pw, ph))?;
    Ok(tensor_to_image(&net.forward(&x)?)?.crop(0, 0, w, h)?)
}

/// Predicted weight map, `[1, 1, h, w]`.
pub fn fusion_forward<T: Scalar>(net: &FusionNet<T>, short: &Image, long: &Image) -> Result<Tensor<T>> {
    net.forward(&stacked(short, long)?)
}

/// Blends two images with a `[1, 1, h, w]` weight map.
pub fn fuse_images<T: Scalar>(weight: &Tensor<T>, short: &Image, long: &Image) -> Result<Image> {
    short.same_dims(long)?;
    tensor_to_image(&ops::fuse(weight, &image_to_tensor(short), &image_to_tensor(long))?)
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Lsd2(c) => Model::Lsd2(UNet::new(c, seed)?),
            ModelConfig::Fusion(c) => Model::Fusion(FusionNet::new(c, seed)?),
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<Param<T>>) -> Result<Self> {
        Ok(match config {
            ModelConfig::Lsd2(c) => Model::Lsd2(UNet::from_params(c, params)?),
            ModelConfig::Fusion(c) => Model::Fusion(FusionNet::from_params(c, params)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Lsd2(n) => ModelConfig::Lsd2(*n.config()),
            Model::Fusion(n) => ModelConfig::Fusion(*n.config()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.config().kind()
    }

    pub fn params(&self) -> &[Param<T>] {
        match self {
            Model::Lsd2(n) => n.params(),
            Model::Fusion(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        match self {
            Model::Lsd2(n) => n.params_mut(),
            Model::Fusion(n) => n.params_mut(),
        }
    }

    /// Network output that the loss compares against the target: the U-Net
    /// output (unclamped) or the fused image.
    pub fn output(&self, s: &TrainSample<T>) -> Result<Tensor<T>> {
        match self {
            Model::Lsd2(n) => n.forward(&s.input),
            Model::Fusion(n) => ops::fuse(&n.forward(&s.input)?, &s.short, &s.long),
        }
    }

    pub fn loss(&self, s: &TrainSample<T>) -> Result<T> {
        Ok(ops::l2_loss(&self.output(s)?, &s.target)?.0)
    }

    /// L2 loss of one sample and the parameter gradients.
    pub fn loss_and_grads(&self, s: &TrainSample<T>) -> Result<(T, Vec<Tensor<T>>)> {
        match self {
            Model::Lsd2(n) => {
                let (y, tape) = n.forward_tape(&s.input)?;
                let (loss, dy) = ops::l2_loss(&y, &s.target)?;
                Ok((loss, n.backward(&tape, dy, false)?.0))
            }
            Model::Fusion(n) => {
                let (w, tape) = n.forward_tape(&s.input)?;
                let fused = ops::fuse(&w, &s.short, &s.long)?;
                let (loss, dy) = ops::l2_loss(&fused, &s.target)?;
                let dw = ops::fuse_backward(&w, &s.short, &s.long, &dy)?;
                Ok((loss, n.backward(&tape, dw, false)?.0))
            }
        }
    }

    /// Inference on an image pair, output clamped to `[0, 1]`.
    pub fn predict(&self, short: &Image, long: &Image) -> Result<Image> {
        match self {
            Model::Lsd2(n) => unet_forward(n, short, long),
            Model::Fusion(n) => fuse_images(&fusion_forward(n, short, long)?, short, long),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_tensor_round_trip() {
        let img = Image::from_fn(5, 4, |x, y, c| (x + 2 * y + 7 * c) as f32 / 40.0);
        let t: Tensor<f32> = image_to_tensor(&img);
        assert_eq!(t.shape(), [1, 3, 4, 5]);
        assert_eq!(t.at(0, 2, 1, 3), img.get(3, 1, 2));
        assert_eq!(tensor_to_image(&t).unwrap(), img);
    }

    #[test]
    fn reflect_padding_mirrors_without_edge_repeat() {
        assert_eq!((0..8).map(|i| reflect(i, 3)).collect::<Vec<_>>(), vec![0, 1, 2, 1, 0, 1, 2, 1]);
        let img = Image::from_fn(3, 2, |x, y, c| (x + 10 * y + 100 * c) as f32 / 400.0);
        let p = pad_reflect(&img, 5, 4);
        assert_eq!(p.get(3, 0, 1), img.get(1, 0, 1));
        assert_eq!(p.get(0, 2, 0), img.get(0, 0, 0));
        assert_eq!(p.crop(0, 0, 3, 2).unwrap(), img);
    }

    #[test]
    fn unet_inference_handles_any_size() {
        let net = UNet::<f32>::new(
            UNetConfig {
                depth: 2,
                base_features: 4,
                ..UNetConfig::default()
            },
            1,
        )
        .unwrap();
        let s = Image::from_fn(10, 7, |x, y, _| ((x * y) % 5) as f32 / 5.0);
        let out = unet_forward(&net, &s, &s).unwrap();
        assert_eq!(out.dims(), (10, 7));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn fuse_images_is_convex() {
        let s = Image::from_fn(6, 6, |x, _, _| x as f32 / 6.0);
        let l = Image::from_fn(6, 6, |_, y, _| y as f32 / 6.0);
        let w = Tensor::<f32>::from_fn([1, 1, 6, 6], |i| (i as f32 * 0.29).sin().abs());
        let f = fuse_images(&w, &s, &l).unwrap();
        for ((&a, &b), &o) in s.data().iter().zip(l.data()).zip(f.data()) {
            assert!(o >= a.min(b) - 1e-7 && o <= a.max(b) + 1e-7);
        }
    }

    #[test]
    fn config_serializes_with_arch_tag() {
        let c = ModelConfig::Fusion(FusionNetConfig::default());
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"arch\":\"fusion\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
