//! Gyroscope-driven motion blur: attitude integration, rotation homographies
//! with rolling-shutter row timing, PSF fields, and spatially-variant blur.

mod blur;
mod camera;
mod psf;
mod quaternion;
mod track;

pub use blur::{apply_blur, BlurMode};
pub use camera::{
    homography_at, mat_mul, project, row_start_time, transpose, Intrinsics, Mat3, ShutterSpec,
};
pub use psf::{
    psf_at, psf_field, rasterize_trajectory, BlurModel, KernelStats, PsfField, PsfKernel, Tap,
    DEFAULT_MAX_RADIUS, DEFAULT_PSF_SAMPLES, DEFAULT_TILE_SIZE,
};
pub use quaternion::Quaternion;
pub use track::{GyroSample, GyroTrack, Rotation, DEFAULT_MAX_RATE};
