//! Kernelized expectation-maximization for dynamic PET with a deep
//! coefficient prior.
//!
//! The crate is organised bottom-up:
//!
//! + [`tomo`]: imaging grid, parallel-beam geometry, Siddon system matrix,
//!   forward/back projection.
//! + [`phantom`]: parametric brain phantom, time-activity curves, Poisson
//!   count simulation and composite prior frames.
//! + [`kernel`]: feature extraction, kNN search and the sparse kernel matrix.
//! + [`neural`]: residual U-net with hand-written reverse mode, Adam, and the
//!   two training losses.
//! + [`recon`]: ML-EM, KEM, neural KEM, DIP (optimization transfer and ADMM).
//! + [`eval`]: image MSE and ROI bias/SD.
//!
//! All numerical code is generic over [`Real`]; reconstruction is normally run
//! in `f64` while the network may be instantiated in `f32`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod kernel;
pub mod neural;
pub mod phantom;
pub mod recon;
pub mod rng;
pub mod scalar;
pub mod tomo;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Image64 = tomo::Image<f64>;
pub type Image32 = tomo::Image<f32>;
pub type Sinogram64 = tomo::Sinogram<f64>;
pub type SparseMatrix64 = tomo::SparseMatrix<f64>;
pub type SparseMatrix32 = tomo::SparseMatrix<f32>;
pub type KernelModel64 = kernel::KernelModel<f64>;
pub type Tensor64 = neural::Tensor<f64>;
pub type Tensor32 = neural::Tensor<f32>;
pub type UNet64 = neural::UNet<f64>;
pub type UNet32 = neural::UNet<f32>;
