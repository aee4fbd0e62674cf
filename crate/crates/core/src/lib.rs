//! Orbit matching pseudometrics for maps and flows, with the supporting
//! machinery: empirical measures and their Prokhorov distance, partition
//! matchings and covering numbers.

pub mod error;
pub mod matching;
pub mod measures;
pub mod partitions;
pub mod rng;
pub mod systems;

pub use error::{FkError, Result};
pub use rng::SplitMix64;
pub use systems::{make_system, OrbitSample, PhasePoint, System, SystemSpec};
