pub mod blur;
pub mod eval;
pub mod fuse;
pub mod gen;
pub mod restore;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use lsd2_core::gyro::BlurMode;

pub(crate) fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("missing required setting --{flag}"))
}

pub(crate) fn parse_mode(s: Option<&str>) -> Result<BlurMode> {
    match s.unwrap_or("tiled") {
        "tiled" => Ok(BlurMode::Tiled),
        "exact" => Ok(BlurMode::Exact),
        other => Err(anyhow!("unknown blur mode `{other}` (expected tiled or exact)")),
    }
}

pub(crate) fn ms_to_s(ms: f64, flag: &str) -> Result<f64> {
    if !(ms.is_finite() && ms >= 0.0) {
        return Err(anyhow!("--{flag} must be a non-negative number of milliseconds"));
    }
    Ok(ms / 1000.0)
}

pub const DEFAULT_EXPOSURE_MS: f64 = 210.0;
pub const DEFAULT_READOUT_MS: f64 = 30.0;
/// Amplitude of the synthetic hand-shake track, rad/s.
pub const DEFAULT_SHAKE: f64 = 0.15;
const SHAKE_RATE_HZ: f64 = 500.0;

/// The recorded gyro log, or a seeded synthetic shake long enough for
/// exposure windows of `window` seconds. Also returns a description for the
/// manifest.
pub(crate) fn load_track(
    gyro: Option<&Path>,
    seed: u64,
    window: f64,
    shake: f64,
) -> Result<(std::sync::Arc<lsd2_core::gyro::GyroTrack>, String)> {
    use lsd2_core::gyro::GyroTrack;
    let (track, desc) = match gyro {
        Some(p) => (GyroTrack::load(p)?, p.display().to_string()),
        None => {
            if !(shake.is_finite() && shake >= 0.0) {
                return Err(anyhow!("--shake must be a non-negative angular rate"));
            }
            let duration = (4.0 * window).max(2.0);
            (
                GyroTrack::synthetic_shake(seed, duration, SHAKE_RATE_HZ, shake)?,
                format!("synthetic shake, {shake} rad/s, seed {seed}"),
            )
        }
    };
    Ok((std::sync::Arc::new(track), desc))
}
