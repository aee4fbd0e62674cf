use serde::{Deserialize, Serialize};

use super::empirical::{empirical, EmpiricalMeasure};
use super::prokhorov::{prokhorov, MAX_REFINEMENT};
use crate::error::{FkError, Result};
use crate::matching::{gap_on_samples, BISECTION_GRID};
use crate::systems::{PhasePoint, System};

/// Comparison of the flow gap with the Prokhorov distance of the two
/// empirical measures: `D <= max(delta, 2 eps*) + slack`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkMeasureReport {
    pub epsilon_star: f64,
    pub delta: f64,
    pub prokhorov: f64,
    pub bound: f64,
    /// Largest one-step displacement along either orbit plus the two
    /// `1/128` grid tolerances.
    pub slack: f64,
    pub pass: bool,
}

pub fn fk_measure_check(
    system: &System,
    x: &PhasePoint,
    y: &PhasePoint,
    t: f64,
    delta: f64,
    step: f64,
) -> Result<FkMeasureReport> {
    if !system.is_flow() {
        return Err(FkError::usage(format!("{} is not a flow", system.spec())));
    }
    if !(t > 1.0) {
        return Err(FkError::usage(format!("horizon must exceed 1, got {t}")));
    }
    if !(step > 0.0 && step <= 0.1) {
        return Err(FkError::usage(format!("grid step must lie in (0, 0.1], got {step}")));
    }
    if !(delta > 0.0) {
        return Err(FkError::usage(format!("delta must be positive, got {delta}")));
    }
    let ox = system.sample_orbit(x, t, step)?;
    let oy = system.sample_orbit(y, t, step)?;
    let epsilon_star = gap_on_samples(&ox, &oy, delta, ox.len());
    let d = prokhorov(&empirical(&ox)?, &empirical(&oy)?)?.value;
    let slack = ox.max_step_displacement().max(oy.max_step_displacement()) + 2.0 / BISECTION_GRID as f64;
    let bound = delta.max(2.0 * epsilon_star) + slack;
    Ok(FkMeasureReport { epsilon_star, delta, prokhorov: d, bound, slack, pass: d <= bound })
}

/// Atom budget per measure in [`generic_defect`].
pub const DEFECT_ATOMS: usize = 2000;

/// `D_P(mu_{x,t}, mu_ref)` for each horizon. Both measures are stride
/// thinned to at most [`DEFECT_ATOMS`] atoms with commensurate counts.
pub fn generic_defect(
    system: &System,
    x: &PhasePoint,
    horizons: &[f64],
    reference: &EmpiricalMeasure,
    step: f64,
) -> Result<Vec<f64>> {
    if horizons.is_empty() {
        return Err(FkError::usage("no horizons"));
    }
    if reference.system != system.spec().to_string() {
        return Err(FkError::usage(format!(
            "reference measure lives on {}, not {}",
            reference.system,
            system.spec()
        )));
    }
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let orbit = empirical(&system.sample_orbit(x, t_max, step)?)?;
    let r = reference.thin(DEFECT_ATOMS);
    horizons
        .iter()
        .map(|&t| {
            let m = ((t / step + 1e-9).floor() as usize).clamp(1, orbit.len());
            let prefix = orbit.prefix(m);
            let mut c = m.min(DEFECT_ATOMS);
            while c > 1 && lcm(c, r.len()) > MAX_REFINEMENT {
                c -= 1;
            }
            Ok(prokhorov(&prefix.thin(c), &r)?.value)
        })
        .collect()
}

fn lcm(a: usize, b: usize) -> usize {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    a / x * b
}
