//! Discrete-time, packet-level simulator of a multi-rover lunar
//! delay-tolerant network.

pub mod engine;
pub mod error;
pub mod explore;
pub mod marl;
pub mod net;
pub mod policies;
pub mod seeds;
pub mod traffic;
pub mod world;

pub use error::{ConfigError, Result, SimError};
