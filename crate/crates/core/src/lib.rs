pub mod config;
pub mod error;
pub mod numerics;

pub use config::Tolerances;
pub use error::{Error, Result};
pub mod model;
pub mod lift;
pub mod sdp;
pub mod exact;
pub mod copositive;
pub mod sensitivity;
