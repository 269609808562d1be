//! Physics-aware proper orthogonal decomposition for sparse-view passive
//! gamma emission tomography.

pub mod bench;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod recon;
pub mod rom;
pub mod sinogram;

pub use error::{Error, Result};
