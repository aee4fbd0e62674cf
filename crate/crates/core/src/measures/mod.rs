//! Empirical measures along orbits and their Prokhorov distance.

mod checks;
mod empirical;
mod prokhorov;

pub use checks::{fk_measure_check, generic_defect, FkMeasureReport, DEFECT_ATOMS};
pub use empirical::{empirical, EmpiricalMeasure};
pub use prokhorov::{
    coupling_feasible, prokhorov, Certificate, Coupling, CouplingCheck, ProkhorovResult, ViolatingSet, MAX_ATOMS,
    MAX_REFINEMENT,
};
