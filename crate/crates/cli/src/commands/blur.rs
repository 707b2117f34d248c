use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use lsd2_core::gyro::{apply_blur, BlurModel, Intrinsics, PsfField, ShutterSpec, DEFAULT_PSF_SAMPLES, DEFAULT_TILE_SIZE};
use lsd2_core::image::{gamma_decode, gamma_encode, DEFAULT_GAMMA};
use lsd2_core::io;
use serde::{Deserialize, Serialize};

use super::{load_track, ms_to_s, parse_mode, required, DEFAULT_EXPOSURE_MS, DEFAULT_READOUT_MS, DEFAULT_SHAKE};
use crate::RunContext;

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BlurArgs {
    /// Sharp input image
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Blurred output image (`.png` or `.f32`)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Gyro log; a synthetic shake is used when omitted
    #[arg(long)]
    pub gyro: Option<PathBuf>,
    /// Amplitude of the synthetic shake in rad/s [default: 0.15]
    #[arg(long)]
    pub shake: Option<f64>,
    /// Camera intrinsics JSON [default: focal length = larger side, centered]
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Exposure time in ms [default: 210]
    #[arg(long)]
    pub te_ms: Option<f64>,
    /// Rolling-shutter readout time in ms [default: 30]
    #[arg(long)]
    pub readout_ms: Option<f64>,
    /// Exposure start of the first row, seconds after the log starts [default: 0]
    #[arg(long)]
    pub t_start: Option<f64>,
    /// tiled or exact [default: tiled]
    #[arg(long)]
    pub mode: Option<String>,
    /// PSF tile size in pixels [default: 32]
    #[arg(long)]
    pub tile_size: Option<usize>,
    /// Trajectory samples per PSF [default: 256]
    #[arg(long)]
    pub psf_samples: Option<usize>,
    /// Also write the tile kernels as a grayscale PNG grid
    #[arg(long)]
    pub dump_psfs: Option<PathBuf>,
    /// Display gamma of the input [default: 2.2]
    #[arg(long)]
    pub gamma: Option<f32>,
}

pub fn run(args: &BlurArgs, ctx: RunContext) -> Result<()> {
    let input = required(&args.input, "input")?;
    let out = required(&args.out, "out")?;
    let img = io::read_image(input)?;
    let (w, h) = img.dims();
    let t_e = ms_to_s(args.te_ms.unwrap_or(DEFAULT_EXPOSURE_MS), "te-ms")?;
    let t_r = ms_to_s(args.readout_ms.unwrap_or(DEFAULT_READOUT_MS), "readout-ms")?;
    let (track, _) = load_track(args.gyro.as_deref(), ctx.seed, t_e + t_r, args.shake.unwrap_or(DEFAULT_SHAKE))?;
    let offset = args.t_start.unwrap_or(0.0);
    if !(offset.is_finite() && offset >= 0.0) {
        bail!("--t-start must be a non-negative number of seconds");
    }
    let k = match &args.intrinsics {
        Some(p) => Intrinsics::load(p)?,
        None => Intrinsics::default_for(w, h),
    };
    k.validate(w, h)?;
    let shutter = ShutterSpec {
        t_f: track.start() + offset,
        t_e,
        t_r,
        n_rows: h,
    };
    let model = BlurModel::new(track, k, shutter, args.psf_samples.unwrap_or(DEFAULT_PSF_SAMPLES))?;
    let field = PsfField::compute(&model, w, h, args.tile_size.unwrap_or(DEFAULT_TILE_SIZE))?;
    let gamma = args.gamma.unwrap_or(DEFAULT_GAMMA);
    let linear = gamma_decode(&img, gamma)?;
    let blurred = apply_blur(&linear, &field, parse_mode(args.mode.as_deref())?)?;
    io::write_image(out, &gamma_encode(&blurred, gamma)?)?;
    if let Some(p) = &args.dump_psfs {
        let (gw, gh, pixels) = kernel_grid(&field);
        io::write_atomic(p, &io::encode_gray_png(&pixels, gw, gh))?;
    }
    let stats = field.stats();
    eprintln!(
        "blurred {} -> {} (mean trail {:.2} px, max trail {:.2} px, max kernel radius {})",
        input.display(),
        out.display(),
        stats.mean_path_px,
        stats.max_path_px,
        stats.max_radius_px
    );
    Ok(())
}

/// Tile kernels laid out like the tiles, each scaled to its peak weight,
/// separated by one-pixel gray lines.
pub fn kernel_grid(field: &PsfField) -> (usize, usize, Vec<f32>) {
    let (cols, rows) = field.grid_dims();
    let cell = field.kernels().iter().map(|k| k.size()).max().unwrap_or(1);
    let stride = cell + 1;
    let (gw, gh) = (cols * stride + 1, rows * stride + 1);
    let mut px = vec![0.25f32; gw * gh];
    for row in 0..rows {
        for col in 0..cols {
            let k = field.kernel(col, row);
            let peak = k.weights().iter().cloned().fold(0.0f32, f32::max).max(f32::MIN_POSITIVE);
            let off = (cell - k.size()) / 2;
            for y in 0..cell {
                for x in 0..cell {
                    let v = if (off..off + k.size()).contains(&x) && (off..off + k.size()).contains(&y) {
                        k.weights()[(y - off) * k.size() + (x - off)] / peak
                    } else {
                        0.0
                    };
                    px[(row * stride + 1 + y) * gw + col * stride + 1 + x] = v;
                }
            }
        }
    }
    (gw, gh, px)
}
