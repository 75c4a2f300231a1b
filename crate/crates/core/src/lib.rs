//! Wheel-odometry positioning through GNSS outages: a physics dead
//! reckoner, a recurrent network that learns its residual error, domain
//! adaptation between vehicles, and an outage evaluation harness.

pub mod domain_adapt;
pub mod error;
pub mod eval;
pub mod features;
pub mod geodesy;
pub mod ingest;
pub mod rnn;
pub mod synth;
pub mod wheel_physics;

pub use error::{Error, Result};
