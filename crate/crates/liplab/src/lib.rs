//! File formats, weight storage and the command-line front end for `liplab-core`.
//!
//! * [`netpbm`]: binary PGM (P5) and PPM (P6) with maxval 255,
//! * [`tensorfile`]: the `LIPLAB01` little-endian f32 tensor container,
//! * [`landmarks`]: `name,x,y` landmark CSV and the template CSV,
//! * [`weights`]: network and pipeline weights as a manifest plus one tensor file per parameter,
//! * [`config`]: flat `key = value` run configuration,
//! * [`cli`]: the `liplab` subcommands.

pub mod cli;
pub mod config;
mod error;
pub mod landmarks;
pub mod netpbm;
pub mod tensorfile;
pub mod weights;

pub use error::{FormatError, IoError};
