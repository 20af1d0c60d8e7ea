//! Ultrasound localization microscopy (ULM) with delay-and-sum and filtered
//! delay-multiply-and-sum beamforming.
//!
//! The pipeline runs `rfsim` → `beamform` → `clutter` → `localize` → `track`
//! → `metrics`; [`pipeline`] wires the stages together and [`cli`] exposes them
//! as batch subcommands over the on-disk formats in [`io`].

pub mod beamform;
pub mod clutter;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod localize;
pub mod metrics;
pub mod pipeline;
pub mod rfsim;
pub mod track;

pub use error::{Result, UlmError};
