use super::cont::ContMatching;
use super::discrete::check_horizons;
use super::estimate::GapEstimate;
use super::grid::{solve, Band};
use crate::error::{FkError, Result};
use crate::systems::{OrbitSample, PhasePoint, System};

/// Resolution of every `eps` and `delta` bisection.
pub const BISECTION_GRID: usize = 128;

/// Default sampling step for flows.
pub const DEFAULT_FLOW_STEP: f64 = 0.05;

/// Largest `eps` tried before a pair is declared unmatchable.
pub const EPS_CEILING: f64 = 1.0 - 1e-6;

/// Smallest `k / 128` at which `feasible` holds, assuming monotonicity.
/// Returns `1 - 1e-6` if only that value is feasible and `1` if nothing is.
pub(crate) fn eps_search(mut feasible: impl FnMut(f64) -> bool) -> f64 {
    let n = BISECTION_GRID;
    let mut lo = 0usize;
    let mut k = 1usize;
    let hi = loop {
        if feasible(k as f64 / n as f64) {
            break k;
        }
        lo = k;
        if k == n - 1 {
            return if feasible(EPS_CEILING) { EPS_CEILING } else { 1.0 };
        }
        k = (2 * k).min(n - 1);
    };
    let mut hi = hi;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible(mid as f64 / n as f64) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as f64 / n as f64
}

/// Slope-constrained matching search over a fixed compatibility relation.
pub(crate) struct GridSearch<F> {
    band: Band<F>,
    m: usize,
}

impl<F: Fn(usize, usize) -> bool> GridSearch<F> {
    pub(crate) fn new(m_max: usize, pred: F) -> Self {
        GridSearch { band: Band::new(m_max, pred), m: m_max }
    }

    pub(crate) fn feasible(&mut self, m: usize, eps: f64) -> bool {
        debug_assert!(m <= self.m);
        solve(&mut self.band, m, eps, false).feasible(m, eps)
    }

    /// Certified matching at `eps` if one exists.
    pub(crate) fn matching(&mut self, m: usize, eps: f64, step: f64, delta: f64) -> Option<ContMatching> {
        let out = solve(&mut self.band, m, eps, true);
        if !out.feasible(m, eps) {
            return None;
        }
        Some(ContMatching::from_pieces(out.pieces.expect("traced"), m, step, delta))
    }

    /// Smallest feasible grid `eps` on the leading `m` cells.
    pub(crate) fn gap(&mut self, m: usize) -> f64 {
        eps_search(|eps| self.feasible(m, eps))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(FkError::usage(format!("eps must lie in (0, 1), got {eps}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(FkError::usage(format!("delta must be positive, got {delta}")))
    }
}

/// A `(t, eps, delta)`-matching between two sampled orbits, certified
/// against the raw samples, or `None` when the grid search finds none.
pub fn slope_constrained_matching(
    system: &System,
    ox: &OrbitSample,
    oy: &OrbitSample,
    delta: f64,
    eps: f64,
) -> Result<Option<ContMatching>> {
    ox.check_compatible(oy)?;
    check_eps(eps)?;
    check_delta(delta)?;
    let m = ox.len().min(oy.len());
    let mut search = GridSearch::new(m, |i, j| ox.dist(i, oy, j) < delta);
    let Some(cm) = search.matching(m, eps, ox.step, delta) else {
        return Ok(None);
    };
    cm.check_grid(system, ox, oy, eps)?;
    Ok(Some(cm))
}

fn check_flow_args(system: &System, t: f64, step: f64) -> Result<()> {
    if !system.is_flow() {
        return Err(FkError::usage(format!("{} is not a flow", system.spec())));
    }
    if !(t > 1.0) {
        return Err(FkError::usage(format!("horizon must exceed 1, got {t}")));
    }
    if !(step > 0.0 && step <= 0.1) {
        return Err(FkError::usage(format!("grid step must lie in (0, 0.1], got {step}")));
    }
    Ok(())
}

/// Grid estimate of the flow gap: the least `eps = k / 128` at which the
/// sampled orbits admit a certified slope-constrained matching; `1` if none
/// exists below 1.
pub fn ftilde_gap(system: &System, x: &PhasePoint, y: &PhasePoint, t: f64, delta: f64, step: f64) -> Result<f64> {
    check_flow_args(system, t, step)?;
    check_delta(delta)?;
    let ox = system.sample_orbit(x, t, step)?;
    let oy = system.sample_orbit(y, t, step)?;
    Ok(gap_on_samples(&ox, &oy, delta, ox.len()))
}

pub(crate) fn gap_on_samples(ox: &OrbitSample, oy: &OrbitSample, delta: f64, m: usize) -> f64 {
    let mut search = GridSearch::new(m, |i, j| ox.dist(i, oy, j) < delta);
    search.gap(m)
}

fn gaps_on_samples(ox: &OrbitSample, oy: &OrbitSample, delta: f64, cells: &[usize]) -> Vec<f64> {
    let m = *cells.iter().max().expect("nonempty");
    let mut search = GridSearch::new(m, |i, j| ox.dist(i, oy, j) < delta);
    cells.iter().map(|&c| search.gap(c)).collect()
}

fn horizon_cells(horizons: &[f64], step: f64) -> Vec<usize> {
    horizons.iter().map(|&t| (t / step + 1e-9).floor() as usize).collect()
}

/// Per-horizon flow gaps with the tail surrogate for the upper limit.
pub fn ftilde_limsup(
    system: &System,
    x: &PhasePoint,
    y: &PhasePoint,
    delta: f64,
    horizons: &[f64],
    step: f64,
) -> Result<GapEstimate> {
    check_horizons(horizons.iter().copied())?;
    check_flow_args(system, horizons[0], step)?;
    check_delta(delta)?;
    let t_max = *horizons.last().expect("checked");
    let ox = system.sample_orbit(x, t_max, step)?;
    let oy = system.sample_orbit(y, t_max, step)?;
    let gaps = gaps_on_samples(&ox, &oy, delta, &horizon_cells(horizons, step));
    GapEstimate::new(horizons.to_vec(), gaps)
}

/// `inf { delta > 0 : tail_sup(delta) < delta }` by bisection over
/// `(0, diameter]`; returns the bracket midpoint once its width is at most
/// `tol`.
pub fn rho_fk_flow(
    system: &System,
    x: &PhasePoint,
    y: &PhasePoint,
    horizons: &[f64],
    tol: f64,
    step: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(FkError::usage(format!("tol must be positive, got {tol}")));
    }
    check_horizons(horizons.iter().copied())?;
    check_flow_args(system, horizons[0], step)?;
    let t_max = *horizons.last().expect("checked");
    let ox = system.sample_orbit(x, t_max, step)?;
    let oy = system.sample_orbit(y, t_max, step)?;
    let cells = horizon_cells(horizons, step);
    let (mut lo, mut hi) = (0.0, system.diameter() + 1e-9);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let est = GapEstimate::new(horizons.to_vec(), gaps_on_samples(&ox, &oy, mid, &cells))?;
        if est.tail_sup < mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
