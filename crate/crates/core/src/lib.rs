//! Perceptual compensation of Ambisonics room recordings for playback in a
//! different room over a loudspeaker array.

pub mod ambidec;
pub mod capture;
pub mod config;
pub mod error;
pub mod gammatone;
pub mod io;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod render;
pub mod roomsim;
pub mod sh;
pub mod signal;
pub mod vbap;

pub(crate) mod linalg;

pub use error::{Error, Result};
