//! Linear-light RGB raster and the scalar intensity transforms used by the
//! synthesis pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Number of color channels carried by every [`Image`].
pub const CHANNELS: usize = 3;

/// Default display gamma of the source material.
pub const DEFAULT_GAMMA: f32 = 2.2;

/// Interleaved RGB raster (`(y * width + x) * 3 + c`) of finite, non-negative
/// 32-bit intensities. Values above 1 are allowed until a clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        let expected = width * height * CHANNELS;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "{width}x{height}x{CHANNELS} image needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "value {} at index {i} is not a finite non-negative intensity",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(value.is_finite() && value >= 0.0);
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![value; width * height * CHANNELS],
        }
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    let v = f(x, y, c);
                    assert!(v.is_finite() && v >= 0.0, "from_fn produced {v}");
                    data.push(v);
                }
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    /// Pixel lookup with edge replication for out-of-bounds coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> [f32; CHANNELS] {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Applies `f(value, channel)` to every sample. `f` must keep values
    /// finite and non-negative.
    pub fn map(&self, f: impl Fn(f32, usize) -> f32) -> Image {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, i % CHANNELS))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn channel_means(&self) -> [f64; CHANNELS] {
        let mut sums = [0f64; CHANNELS];
        for px in self.data.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sums[c] += px[c] as f64;
            }
        }
        let n = (self.width * self.height) as f64;
        sums.map(|s| s / n)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * CHANNELS);
        for y in y0..y0 + h {
            let row = (y * self.width + x0) * CHANNELS;
            data.extend_from_slice(&self.data[row..row + w * CHANNELS]);
        }
        Ok(Image {
            width: w,
            height: h,
            data,
        })
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f32>) -> Image {
        debug_assert_eq!(data.len(), width * height * CHANNELS);
        Image {
            width,
            height,
            data,
        }
    }
}

fn check_gamma(gamma: f32) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be finite and positive, got {gamma}"
        )));
    }
    Ok(())
}

/// Removes display gamma: `v -> v^gamma`.
pub fn gamma_decode(img: &Image, gamma: f32) -> Result<Image> {
    check_gamma(gamma)?;
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map(|v, _| v.powf(gamma)))
}

/// Re-applies display gamma: `v -> v^(1/gamma)`.
pub fn gamma_encode(img: &Image, gamma: f32) -> Result<Image> {
    check_gamma(gamma)?;
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    let inv = 1.0 / gamma;
    Ok(img.map(|v, _| v.powf(inv)))
}

/// Multiplies every intensity by `s`. No clipping.
pub fn scale(img: &Image, s: f32) -> Result<Image> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be positive, got {s}"
        )));
    }
    Ok(img.map(|v, _| v * s))
}

/// Clamps every intensity into `[0, max]`.
pub fn clip(img: &Image, max: f32) -> Image {
    img.map(|v, _| v.clamp(0.0, max))
}

/// Per-channel gain and offset, `v -> a[c] * v + b[c]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelAffine {
    pub a: [f32; CHANNELS],
    pub b: [f32; CHANNELS],
}

impl ChannelAffine {
    pub fn identity() -> Self {
        Self {
            a: [1.0; CHANNELS],
            b: [0.0; CHANNELS],
        }
    }

    /// Draws every `a[c]` and `b[c]` independently and uniformly from the
    /// per-channel intervals (`[lo, hi)`).
    pub fn sample(
        rng: &mut Rng,
        a_bounds: &[(f32, f32); CHANNELS],
        b_bounds: &[(f32, f32); CHANNELS],
    ) -> Self {
        let mut t = Self::identity();
        for c in 0..CHANNELS {
            t.a[c] = rng.uniform_f32(a_bounds[c].0, a_bounds[c].1);
        }
        for c in 0..CHANNELS {
            t.b[c] = rng.uniform_f32(b_bounds[c].0, b_bounds[c].1);
        }
        t
    }
}

/// Applies a [`ChannelAffine`] without clipping. Negative results, which
/// only arise from negative coefficients, are floored at 0.
pub fn affine_channels(img: &Image, t: &ChannelAffine) -> Image {
    img.map(|v, c| (t.a[c] * v + t.b[c]).max(0.0))
}
