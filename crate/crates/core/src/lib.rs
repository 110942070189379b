//! Ranking of frames in thermographic image sequences by anomaly likelihood.

pub mod config;
pub mod curve;
pub mod error;
pub mod hi;
pub mod minkowski;
pub mod model;
pub mod phantom;
pub mod pipeline;
pub mod ppt;
pub mod rea_tve;
pub mod reference;
pub mod sampling;
pub mod segmentation;

pub use error::{Error, Result};
