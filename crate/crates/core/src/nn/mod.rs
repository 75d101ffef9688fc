//! Minimal reverse-mode autodiff over 4-D tensors.
//!
//! A [`Graph`] records every operation of a forward pass together with its
//! output, and [`Graph::backward`] walks the record in reverse. Everything is
//! generic over [`Scalar`] so the same network can run in `f32` for training
//! and in `f64` for finite-difference gradient checks.

mod gradcheck;
mod graph;
mod kernels;
pub mod layers;
mod optim;
mod params;
mod tensor;

use alloc::string::String;

use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use graph::{Gradients, Graph, NodeId, Padding};
pub use optim::{Adam, AdamConfig};
pub use params::{he_uniform, NetworkWeights, ParamStore};
pub use tensor::{Dims, Scalar, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Dims,
        right: Dims,
    },
    #[error("{op}: unsupported shape {dims:?}")]
    InvalidShape { op: &'static str, dims: Dims },
    #[error("{op}: data length {len} does not match dims {dims:?}")]
    DataLength {
        op: &'static str,
        len: usize,
        dims: Dims,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter {0:?}")]
    NonFiniteGradient(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("duplicate parameter {0:?}")]
    DuplicateParam(String),
    #[error("backward needs a scalar output, got {0:?}")]
    NotScalar(Dims),
    #[error("{0} gradients supplied for {1} parameters")]
    GradientCount(usize, usize),
}
