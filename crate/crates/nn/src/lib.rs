//! Small CPU neural network stack: NCHW tensors, convolution via im2col and
//! GEMM, hand-written backward passes, the LSD2 U-Net, the exposure fusion
//! network, Adam, a deterministic trainer and binary checkpoints.
//!
//! Everything is generic over [`Scalar`]; production code runs in `f32`,
//! gradient checks in `f64`.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod ops;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod unet;

pub use adam::{adam_step, AdamState};
pub use error::{Error, Result};
pub use fusion::{FusionNet, FusionNetConfig};
pub use layers::Param;
pub use model::{
    fuse_images, fusion_forward, image_to_tensor, tensor_to_image, unet_forward, Model, ModelConfig, ModelKind,
    TrainSample,
};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{loss_csv, train, TrainConfig, TrainState};
pub use unet::{UNet, UNetConfig};
