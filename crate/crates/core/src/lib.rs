//! Behavioral simulation of memristive selective-convolution circuits for
//! salt-and-pepper noise removal.
//!
//! The crate is layered bottom-up:
//!
//! * [`image`]: 8-bit grids, PGM I/O, noise injection, preprocessing masks;
//! * [`quantize`]: kernels, ternary quantization, conductance encoding;
//! * [`device`]: the threshold memristor;
//! * [`seconv`]: ideal restoration (FPSC/TSC and theory-MSCE);
//! * [`circuit`]: node-level MSC/MSCE circuits;
//! * [`power`]: static read power and programming totals;
//! * [`metrics`]: PSNR and SSIM;
//! * [`corpus`]: procedural test images;
//! * [`pipeline`]: experiment drivers.

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod corpus;
pub mod device;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod power;
pub mod quantize;
pub mod seconv;

pub use circuit::{CircuitConfig, CircuitModel, WeightMode};
pub use device::{DeviceParams, MemristorDevice};
pub use image::{GrayImage, ImageTensor, NoiseSpec, PixelMask};
pub use pipeline::{DenoiseReport, ExperimentConfig, Model};
pub use quantize::{FullPrecisionKernel, Kernel, TernaryKernel};
pub use seconv::{Stage, StagePlan};
