//! Palmprint de-identification toolkit: synthetic hands, palm geometry, a
//! competitive-code matcher, a diffusion-style de-identifier and the
//! evaluation metrics around it.

pub mod deid;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod manifest;
pub mod matcher;
pub mod metrics;
pub mod raster;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
