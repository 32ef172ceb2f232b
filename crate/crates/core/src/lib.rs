//! Dense light field reconstruction from sparse views.
//!
//! A separable-kernel frame interpolator synthesizes the angular midpoint
//! between two views. Cascading it horizontally and vertically doubles the
//! angular resolution of a light field; repeating the cascade reaches any
//! power-of-two factor. The interpolator is adapted to each light field
//! without ground truth by fine-tuning on triplets of sparse views with a
//! cycle-consistency loss, a wide-gap reconstruction loss and a perceptual
//! loss.
//!
//! Module map:
//!
//! - [`autodiff`]: arrays, reverse-mode differentiation, Adam
//! - [`lightfield`]: images, light fields, sub-sampling, triplets, EPIs
//! - [`net`]: the kernel-predicting interpolator
//! - [`losses`]: cycle, reconstruction, perceptual and supervised losses
//! - [`trainer`]: patch sampling, baseline pre-training, fine-tuning
//! - [`reconstruct`]: per-axis upsampling and the cascaded reconstruction
//! - [`metrics`]: PSNR, SSIM and evaluation reports
//! - [`synth`]: synthetic planar light fields and the translation oracle
//! - [`io`]: light field directories, checkpoints, reports
//! - [`cli`]: the command-line front end

pub mod ablation;
pub mod autodiff;
pub mod cli;
pub mod error;
pub mod io;
pub mod lightfield;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod reconstruct;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
