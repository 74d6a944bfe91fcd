//! Dispersion-encoded full-range ISAM reconstruction for spectral-domain OCT.

// `!(x >= 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod defr;
pub mod dispersion;
pub mod error;
pub mod fft;
pub mod isam;
pub mod mbir;
pub mod metrics;
pub mod io;
pub mod nufft;
pub mod pipeline;
pub mod synthesis;

pub use error::{Error, Result};
