//! Built-in dynamical systems: maps, suspension and special flows, and
//! their time-changes.

mod point;
mod spec;
mod system;

pub use point::{arc, frac, PhasePoint, SymbolPoint};
pub use spec::{Profile, RateSpec, RoofSpec, ShiftMetric, SystemSpec, DEFAULT_WINDOW, GOLDEN};
pub use system::{make_system, Features, OrbitSample, OrbitSummary, System};
