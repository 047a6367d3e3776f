//! Event-camera motion compensation: discretized event volumes, deblurring
//! losses, egomotion geometry, parametric motion fitting and evaluation.

pub mod cli;
pub mod egomotion;
pub mod error;
pub mod events;
pub mod export;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod optimize;
pub mod synth;
pub mod voxel;
pub mod warp;

pub use error::{Error, Result};
pub use events::{Event, EventSlice, Polarity};
pub use warp::FlowField;
