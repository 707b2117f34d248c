//! Short/long exposure pair synthesis.
//!
//! Starting from a gamma-encoded sharp image, the pipeline linearizes it,
//! scales it by a random exposure factor `s`, derives the clipped target,
//! forms a dark color-distorted noisy short exposure and a blurred,
//! misaligned, noisy long exposure, and re-encodes all three.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gyro::{
    apply_blur, BlurMode, BlurModel, GyroTrack, Intrinsics, KernelStats, PsfField, ShutterSpec,
    DEFAULT_MAX_RADIUS, DEFAULT_PSF_SAMPLES, DEFAULT_TILE_SIZE,
};
use crate::image::{
    affine_channels, clip, gamma_decode, gamma_encode, scale, ChannelAffine, Image, CHANNELS,
    DEFAULT_GAMMA,
};
use crate::rng::Rng;

/// What the network is asked to reproduce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `clip(s * I, 1)`: the sharp, slightly overexposed long exposure.
    ClippedLong,
    /// The unscaled source image (exposure fusion training).
    Original,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Interval of the exposure scale `s`.
    pub s_range: (f32, f32),
    pub a_bounds: [(f32, f32); CHANNELS],
    pub b_bounds: [(f32, f32); CHANNELS],
    /// Poisson scale of the long exposure; `inf` disables noise.
    pub photons_per_unit: f64,
    /// Ratio of short to long normalized noise standard deviation.
    pub short_noise_factor: f64,
    /// Short/long exposure time ratio of the capture protocol (metadata only).
    pub exposure_ratio: f64,
    pub gamma: f32,
    pub target: TargetKind,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self::lsd2()
    }
}

impl SynthParams {
    pub fn lsd2() -> Self {
        Self {
            s_range: (1.0, 3.0),
            a_bounds: [(0.02, 0.3); CHANNELS],
            b_bounds: [(0.0, 0.01); CHANNELS],
            photons_per_unit: 1000.0,
            short_noise_factor: 4.0,
            exposure_ratio: 1.0 / 30.0,
            gamma: DEFAULT_GAMMA,
            target: TargetKind::ClippedLong,
        }
    }

    pub fn fusion() -> Self {
        Self {
            s_range: (1.0 / 3.0, 3.0),
            target: TargetKind::Original,
            ..Self::lsd2()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.s_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "s_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if !(self.photons_per_unit > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "photons_per_unit must be positive, got {}",
                self.photons_per_unit
            )));
        }
        if !(self.short_noise_factor >= 1.0 && self.short_noise_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "short_noise_factor must be >= 1, got {}",
                self.short_noise_factor
            )));
        }
        for (name, bounds) in [("a", &self.a_bounds), ("b", &self.b_bounds)] {
            for &(lo, hi) in bounds {
                if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
                    return Err(Error::InvalidParameter(format!(
                        "bad {name} interval ({lo}, {hi})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Poisson scale of the short exposure. Dividing by the squared factor
    /// makes the normalized noise standard deviation `short_noise_factor`
    /// times larger.
    pub fn short_photons_per_unit(&self) -> f64 {
        self.photons_per_unit / (self.short_noise_factor * self.short_noise_factor)
    }
}

/// Gyro-driven blur configuration. The first-row exposure start is drawn
/// per sample; `n_rows` follows the image height.
#[derive(Clone, Debug)]
pub struct MotionConfig {
    pub track: Arc<GyroTrack>,
    /// `None` uses [`Intrinsics::default_for`] the image size.
    pub intrinsics: Option<Intrinsics>,
    /// Exposure duration, s.
    pub exposure: f64,
    /// Rolling-shutter readout time, s.
    pub readout: f64,
    pub tile_size: usize,
    pub n_samples: usize,
    pub max_radius: usize,
    pub mode: BlurMode,
}

impl MotionConfig {
    pub fn new(track: Arc<GyroTrack>, exposure: f64, readout: f64) -> Self {
        Self {
            track,
            intrinsics: None,
            exposure,
            readout,
            tile_size: DEFAULT_TILE_SIZE,
            n_samples: DEFAULT_PSF_SAMPLES,
            max_radius: DEFAULT_MAX_RADIUS,
            mode: BlurMode::Tiled,
        }
    }

    fn shutter(&self, t_f: f64, n_rows: usize) -> ShutterSpec {
        ShutterSpec {
            t_f,
            t_e: self.exposure,
            t_r: self.readout,
            n_rows,
        }
    }

    /// Range of admissible first-row start times for an image of `n_rows`.
    pub fn start_range(&self, n_rows: usize) -> Result<(f64, f64)> {
        let (_, end) = self.shutter(0.0, n_rows).window();
        let lo = self.track.start();
        let hi = self.track.end() - end;
        if hi < lo {
            return Err(Error::InvalidParameter(format!(
                "exposure window of {end:.4} s does not fit in the {:.4} s gyro track",
                self.track.duration()
            )));
        }
        Ok((lo, hi))
    }

    pub fn field(&self, t_f: f64, width: usize, height: usize) -> Result<PsfField> {
        let k = self
            .intrinsics
            .unwrap_or_else(|| Intrinsics::default_for(width, height));
        k.validate(width, height)?;
        let model = BlurModel::new(self.track.clone(), k, self.shutter(t_f, height), self.n_samples)?
            .with_max_radius(self.max_radius);
        PsfField::compute(&model, width, height, self.tile_size)
    }
}

/// Every random quantity drawn for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draws {
    pub s: f32,
    pub affine: ChannelAffine,
    /// First-row exposure start; `None` without motion blur.
    pub t_1: Option<f64>,
}

/// Record of how a sample was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub stream: u64,
    pub width: usize,
    pub height: usize,
    pub s: f32,
    pub a: [f32; CHANNELS],
    pub b: [f32; CHANNELS],
    pub t_1: Option<f64>,
    pub t_e: Option<f64>,
    pub t_r: Option<f64>,
    pub exposure_ratio: f64,
    pub photons_per_unit: f64,
    pub short_photons_per_unit: f64,
    pub gamma: f32,
    pub target: TargetKind,
    pub kernel: Option<KernelStats>,
}

impl SampleMeta {
    pub fn draws(&self) -> Draws {
        Draws {
            s: self.s,
            affine: ChannelAffine {
                a: self.a,
                b: self.b,
            },
            t_1: self.t_1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub short: Image,
    pub long: Image,
    pub target: Image,
    pub meta: SampleMeta,
}

/// `v -> Poisson(lambda * v) / lambda`, independently per sample. An
/// infinite `lambda` returns the input unchanged.
pub fn add_shot_noise(img: &Image, photons_per_unit: f64, rng: &mut Rng) -> Result<Image> {
    if !(photons_per_unit > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "photons_per_unit must be positive, got {photons_per_unit}"
        )));
    }
    if photons_per_unit.is_infinite() {
        return Ok(img.clone());
    }
    let data = img
        .data()
        .iter()
        .map(|&v| (rng.poisson(photons_per_unit * v as f64) / photons_per_unit) as f32)
        .collect();
    Image::new(img.width(), img.height(), data)
}

/// Returns `(target, s * I)`: the clipped ground truth and the unclipped
/// scaled image that the short and long exposures are formed from.
pub fn make_target(linear: &Image, s: f32, params: &SynthParams) -> Result<(Image, Image)> {
    let (lo, hi) = params.s_range;
    if !(s >= lo && s <= hi) {
        return Err(Error::InvalidParameter(format!(
            "s = {s} outside [{lo}, {hi}]"
        )));
    }
    let scaled = scale(linear, s)?;
    Ok((clip(&scaled, 1.0), scaled))
}

/// Dark, color-distorted, noisy exposure: affine map, shot noise at the
/// short-exposure photon scale, clip to `[0, 1]`.
pub fn make_short(
    scaled: &Image,
    affine: &ChannelAffine,
    params: &SynthParams,
    rng: &mut Rng,
) -> Result<Image> {
    let dark = affine_channels(scaled, affine);
    let noisy = add_shot_noise(&dark, params.short_photons_per_unit(), rng)?;
    Ok(clip(&noisy, 1.0))
}

/// Blurred noisy exposure: blur the unclipped scaled image, add shot noise,
/// then clip at 1.
pub fn make_long(
    scaled: &Image,
    field: &PsfField,
    mode: BlurMode,
    params: &SynthParams,
    rng: &mut Rng,
) -> Result<Image> {
    let blurred = apply_blur(scaled, field, mode)?;
    let noisy = add_shot_noise(&blurred, params.photons_per_unit, rng)?;
    Ok(clip(&noisy, 1.0))
}

/// Draws `s`, the channel affine and (with motion) the exposure start, in
/// that order.
pub fn draw(
    params: &SynthParams,
    motion: Option<&MotionConfig>,
    n_rows: usize,
    rng: &mut Rng,
) -> Result<Draws> {
    let (lo, hi) = params.s_range;
    let s = if hi > lo { rng.uniform_f32(lo, hi) } else { lo };
    let affine = ChannelAffine::sample(rng, &params.a_bounds, &params.b_bounds);
    let t_1 = match motion {
        Some(m) => {
            let (lo, hi) = m.start_range(n_rows)?;
            Some(rng.uniform(lo, hi))
        }
        None => None,
    };
    Ok(Draws { s, affine, t_1 })
}

/// Runs the full pipeline on a gamma-encoded `[0, 1]` image. Without
/// `motion` the long exposure is unblurred.
pub fn synthesize_pair(
    srgb: &Image,
    motion: Option<&MotionConfig>,
    params: &SynthParams,
    rng: &mut Rng,
) -> Result<SynthSample> {
    params.validate()?;
    if srgb.max_value() > 1.0 {
        return Err(Error::InvalidInput(
            "source image must be gamma-encoded within [0, 1]".into(),
        ));
    }
    let draws = draw(params, motion, srgb.height(), rng)?;
    render(srgb, motion, params, &draws, rng)
}

/// Deterministic part of [`synthesize_pair`]: everything after the draws.
/// `rng` is only consumed by shot noise (short first, then long).
pub fn render(
    srgb: &Image,
    motion: Option<&MotionConfig>,
    params: &SynthParams,
    draws: &Draws,
    rng: &mut Rng,
) -> Result<SynthSample> {
    let (width, height) = srgb.dims();
    let linear = gamma_decode(srgb, params.gamma)?;
    let (clipped, scaled) = make_target(&linear, draws.s, params)?;
    let target = match params.target {
        TargetKind::ClippedLong => clipped,
        TargetKind::Original => clip(&linear, 1.0),
    };

    let (field, mode) = match (motion, draws.t_1) {
        (Some(m), Some(t_1)) => (m.field(t_1, width, height)?, m.mode),
        (None, _) => (PsfField::identity(width, height), BlurMode::Tiled),
        (Some(_), None) => {
            return Err(Error::InvalidParameter(
                "motion blur requested without an exposure start time".into(),
            ))
        }
    };

    let short = make_short(&scaled, &draws.affine, params, rng)?;
    let long = make_long(&scaled, &field, mode, params, rng)?;

    let meta = SampleMeta {
        seed: rng.seed(),
        stream: 0,
        width,
        height,
        s: draws.s,
        a: draws.affine.a,
        b: draws.affine.b,
        t_1: draws.t_1,
        t_e: motion.map(|m| m.exposure),
        t_r: motion.map(|m| m.readout),
        exposure_ratio: params.exposure_ratio,
        photons_per_unit: params.photons_per_unit,
        short_photons_per_unit: params.short_photons_per_unit(),
        gamma: params.gamma,
        target: params.target,
        kernel: motion.map(|_| field.stats()),
    };
    Ok(SynthSample {
        short: gamma_encode(&short, params.gamma)?,
        long: gamma_encode(&long, params.gamma)?,
        target: gamma_encode(&target, params.gamma)?,
        meta,
    })
}

/// [`synthesize_pair`] on the independent stream `index` of `seed`, with the
/// stream recorded in the metadata.
pub fn synthesize_indexed(
    srgb: &Image,
    motion: Option<&MotionConfig>,
    params: &SynthParams,
    seed: u64,
    index: u64,
) -> Result<SynthSample> {
    let mut rng = Rng::stream(seed, index);
    let mut sample = synthesize_pair(srgb, motion, params, &mut rng)?;
    sample.meta.stream = index;
    Ok(sample)
}
