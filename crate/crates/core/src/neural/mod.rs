//! Residual U-net `beta(theta | z)` with hand-written reverse mode, Adam, and
//! the two training objectives.
//!
//! Topology per resolution level: two conv/norm/leaky-ReLU blocks on the way
//! down (the first of each coarser level has stride 2), bilinear upsampling
//! plus a block on the way up, an additive skip from the encoder, and a
//! final 3x3 convolution followed by ReLU.

mod adam;
pub mod layers;
mod loss;
mod params;
mod tensor;
mod train;
mod unet;

pub use adam::{AdamConfig, AdamState};
pub use loss::{loss_mse, loss_q, LOG_FLOOR};
pub use params::{NetParams, Param};
pub use tensor::Tensor;
pub use train::{train_to_target, LossKind, TrainReport, TrainTarget};
pub use unet::{NetDescriptor, UNet};
