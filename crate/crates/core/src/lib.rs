//! Synthesis of realistic short/long exposure image pairs from sharp images
//! and gyroscope logs, plus the PSNR/SSIM evaluation harness.

pub mod dataset;
pub mod error;
pub mod gyro;
pub mod image;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
pub use image::{Image, CHANNELS};
pub use rng::Rng;
