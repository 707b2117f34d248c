use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use lsd2_core::dataset::{self, Manifest, MotionRecord, FORMAT_VERSION};
use lsd2_core::gyro::{Intrinsics, DEFAULT_PSF_SAMPLES, DEFAULT_TILE_SIZE};
use lsd2_core::io;
use lsd2_core::scene::procedural_scene;
use lsd2_core::synth::{synthesize_indexed, MotionConfig, SynthParams};
use lsd2_core::Image;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_track, ms_to_s, parse_mode, required, DEFAULT_EXPOSURE_MS, DEFAULT_READOUT_MS, DEFAULT_SHAKE};
use crate::RunContext;

pub const DEFAULT_WIDTH: usize = 480;
pub const DEFAULT_HEIGHT: usize = 270;
/// Number of procedural samples when neither `--input` nor `--count` is set.
pub const DEFAULT_PROCEDURAL_COUNT: usize = 100;

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GenArgs {
    /// Directory of source images; procedural scenes are used when omitted
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of samples [default: number of inputs, or 100 procedural]
    #[arg(long)]
    pub count: Option<usize>,
    /// Sample width [default: 480]
    #[arg(long)]
    pub width: Option<usize>,
    /// Sample height [default: 270]
    #[arg(long)]
    pub height: Option<usize>,
    /// Gyro log (`t_ns,wx,wy,wz` CSV); a synthetic shake is used when omitted
    #[arg(long)]
    pub gyro: Option<PathBuf>,
    /// Amplitude of the synthetic shake in rad/s [default: 0.15]
    #[arg(long)]
    pub shake: Option<f64>,
    /// Camera intrinsics JSON [default: focal length = larger side, centered]
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Long exposure time in ms [default: 210]
    #[arg(long)]
    pub exposure_ms: Option<f64>,
    /// Rolling-shutter readout time in ms [default: 30]
    #[arg(long)]
    pub readout_ms: Option<f64>,
    /// PSF tile size in pixels [default: 32]
    #[arg(long)]
    pub tile_size: Option<usize>,
    /// Trajectory samples per PSF [default: 256]
    #[arg(long)]
    pub psf_samples: Option<usize>,
    /// Blur rendering: tiled or exact [default: tiled]
    #[arg(long)]
    pub blur_mode: Option<String>,
    /// Photons per unit intensity of the long exposure [default: 1000]
    #[arg(long)]
    pub photons: Option<f64>,
    /// Skip motion blur
    #[arg(long)]
    pub no_blur: bool,
    /// Exposure-fusion data: scale in [1/3, 3], unscaled targets, no blur
    #[arg(long)]
    pub fusion_mode: bool,
    /// Write lossless planar f32 files instead of 8-bit PNG
    #[arg(long)]
    pub raw_f32: bool,
}

pub fn run(args: &GenArgs, ctx: RunContext) -> Result<()> {
    let start = Instant::now();
    let out = required(&args.out, "out")?;
    let width = args.width.unwrap_or(DEFAULT_WIDTH);
    let height = args.height.unwrap_or(DEFAULT_HEIGHT);
    if width == 0 || height == 0 {
        bail!("--width and --height must be positive");
    }

    let mut failures: Vec<String> = Vec::new();
    let mut sources: Vec<(String, Image)> = Vec::new();
    if let Some(dir) = &args.input {
        let names = io::list_images(dir)?;
        for name in names {
            match io::read_image(&dir.join(&name)).and_then(|img| io::fit_image(&img, width, height)) {
                Ok(img) => sources.push((name, img)),
                Err(e) => failures.push(format!("input {name}: {e}")),
            }
        }
        if sources.is_empty() {
            report_failures(&failures);
            bail!("no usable images in {}", dir.display());
        }
    }
    let count = args.count.unwrap_or(if args.input.is_some() {
        sources.len()
    } else {
        DEFAULT_PROCEDURAL_COUNT
    });

    let mut params = if args.fusion_mode {
        SynthParams::fusion()
    } else {
        SynthParams::lsd2()
    };
    if let Some(p) = args.photons {
        if !(p.is_finite() && p > 0.0) {
            bail!("--photons must be a positive finite number");
        }
        params.photons_per_unit = p;
    }
    params.validate()?;

    let exposure = ms_to_s(args.exposure_ms.unwrap_or(DEFAULT_EXPOSURE_MS), "exposure-ms")?;
    let readout = ms_to_s(args.readout_ms.unwrap_or(DEFAULT_READOUT_MS), "readout-ms")?;
    let (motion, record) = if args.no_blur || args.fusion_mode {
        (None, None)
    } else {
        let (track, desc) = load_track(
            args.gyro.as_deref(),
            ctx.seed,
            exposure + readout,
            args.shake.unwrap_or(DEFAULT_SHAKE),
        )?;
        let intrinsics = match &args.intrinsics {
            Some(p) => Intrinsics::load(p)?,
            None => Intrinsics::default_for(width, height),
        };
        intrinsics.validate(width, height)?;
        let mut m = MotionConfig::new(track, exposure, readout);
        m.intrinsics = Some(intrinsics);
        m.tile_size = args.tile_size.unwrap_or(DEFAULT_TILE_SIZE);
        m.n_samples = args.psf_samples.unwrap_or(DEFAULT_PSF_SAMPLES);
        m.mode = parse_mode(args.blur_mode.as_deref())?;
        m.start_range(height)?;
        let record = MotionRecord {
            gyro: Some(desc),
            exposure_s: exposure,
            readout_s: readout,
            intrinsics,
            tile_size: m.tile_size,
            psf_samples: m.n_samples,
        };
        (Some(m), Some(record))
    };

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ext = if args.raw_f32 { io::RAW_EXT } else { "png" };
    let seed = ctx.seed;
    let results: Vec<Option<String>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let procedural;
            let src = if sources.is_empty() {
                procedural = procedural_scene(seed, i as u64, width, height);
                &procedural
            } else {
                &sources[i % sources.len()].1
            };
            synthesize_indexed(src, motion.as_ref(), &params, seed, i as u64)
                .and_then(|s| dataset::write_entry(out, i, &s, ext))
                .err()
                .map(|e| format!("sample {i}: {e}"))
        })
        .collect();
    let sample_failures: Vec<String> = results.into_iter().flatten().collect();
    let n_failed = sample_failures.len();
    failures.extend(sample_failures);

    if n_failed == 0 {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            seed,
            count,
            width,
            height,
            image_ext: ext.to_string(),
            fusion_mode: args.fusion_mode,
            params,
            motion: record,
            sources: if sources.is_empty() {
                vec!["procedural".to_string()]
            } else {
                sources.iter().map(|(n, _)| n.clone()).collect()
            },
        };
        dataset::write_manifest(out, &manifest)?;
    }
    report_failures(&failures);
    eprintln!(
        "generated {} of {count} samples in {} ({} failures, {:.1} s)",
        count - n_failed,
        out.display(),
        failures.len(),
        start.elapsed().as_secs_f64()
    );
    if !failures.is_empty() {
        bail!("{} item(s) failed", failures.len());
    }
    Ok(())
}

fn report_failures(failures: &[String]) {
    for f in failures {
        eprintln!("failed: {f}");
    }
}
