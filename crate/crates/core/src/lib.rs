//! Map-anchored analysis of on-ramp merging behavior from drone trajectory data.

pub mod error;
pub mod events;
pub mod geometry;
pub mod indicators;
pub mod ingest;
pub mod macroscopic;
pub mod map;
pub mod report;
pub mod scenario;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
