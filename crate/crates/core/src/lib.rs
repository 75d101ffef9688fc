//! Core algorithms for upper-lip segmentation from sparse landmarks.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! * [`texture`]: LBP / gradient-weighted LBP planes and the 5-plane network input,
//! * [`maskgen`]: template alignment, contour densification and polygon rasterization,
//! * [`nn`]: a small reverse-mode autodiff engine with the layers an attention UNet needs,
//! * [`segnet`]: the attention UNet, the two-stage pipeline and the mask autoencoder,
//! * [`metrics`]: Dice, IoU, VOE, Hausdorff distance and pixel accuracies,
//! * [`synth`]: a synthetic lip generator and the training augmentations.
//!
//! File formats, weight storage and the CLI live in the `liplab` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod geometry;
pub mod maskgen;
pub(crate) mod math;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod segnet;
pub mod synth;
pub mod texture;

pub use geometry::Point;
pub use maskgen::{BinaryMask, LandmarkSet, TemplateContour};
pub use raster::RasterImage;
