use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::Partition;
use crate::error::{FkError, Result};
use crate::matching::{tail_max, tail_min, ContMatching, GridSearch};
use crate::systems::{OrbitSample, PhasePoint, System};

/// Cell labels along a sampled orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub labels: Vec<u32>,
    pub step: f64,
    pub horizon: f64,
}

impl LabelTrack {
    pub fn new(system: &System, orbit: &OrbitSample, partition: &Partition) -> Result<LabelTrack> {
        let labels = partition.labels(system, &orbit.points)?.into_iter().map(|l| l as u32).collect();
        Ok(LabelTrack { labels, step: orbit.step, horizon: orbit.horizon })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Replace every label `l` by `map[l]`.
    pub fn relabel(&self, map: &[usize]) -> LabelTrack {
        LabelTrack { labels: self.labels.iter().map(|&l| map[l as usize] as u32).collect(), ..self.clone() }
    }
}

fn check_args(system: &System, t: f64, step: f64) -> Result<()> {
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

fn track(system: &System, p: &PhasePoint, t: f64, step: f64, partition: &Partition) -> Result<LabelTrack> {
    LabelTrack::new(system, &system.sample_orbit(p, t, step)?, partition)
}

/// Least grid `eps` at which the two label tracks admit a slope-constrained
/// matching with equal labels on every matched cell.
pub fn ratner_gap_tracks(a: &LabelTrack, b: &LabelTrack) -> Result<f64> {
    if a.step != b.step {
        return Err(FkError::usage("label tracks use different steps"));
    }
    let m = a.len().min(b.len());
    if m == 0 {
        return Err(FkError::usage("empty label track"));
    }
    Ok(GridSearch::new(m, |i, j| a.labels[i] == b.labels[j]).gap(m))
}

/// A `(t, eps, P)`-matching between two label tracks: every matched cell
/// pair carries equal labels. `None` when the grid search finds none.
pub fn ratner_matching(a: &LabelTrack, b: &LabelTrack, eps: f64) -> Result<Option<ContMatching>> {
    if a.step != b.step {
        return Err(FkError::usage("label tracks use different steps"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FkError::usage(format!("eps must lie in (0, 1), got {eps}")));
    }
    let m = a.len().min(b.len());
    Ok(GridSearch::new(m, |i, j| a.labels[i] == b.labels[j]).matching(m, eps, a.step, 0.0))
}

/// Grid estimate of `f_t(x, y, P)`.
pub fn ratner_gap(system: &System, x: &PhasePoint, y: &PhasePoint, t: f64, partition: &Partition, step: f64) -> Result<f64> {
    check_args(system, t, step)?;
    ratner_gap_tracks(&track(system, x, t, step, partition)?, &track(system, y, t, step, partition)?)
}

/// `f_t(center, y) < eps`. Feasibility is monotone in the tolerance, so
/// one check just below `eps` decides it.
fn member_tracks(center: &LabelTrack, y: &LabelTrack, eps: f64) -> bool {
    let e = (eps * (1.0 - 1e-9)).min(1.0 - 1e-9);
    let m = center.len().min(y.len());
    GridSearch::new(m, |i, j| center.labels[i] == y.labels[j]).feasible(m, e)
}

/// Whether `y` lies in the `(t, P)`-ball of radius `eps` around `center`.
pub fn ball_member(
    system: &System,
    y: &PhasePoint,
    center: &PhasePoint,
    t: f64,
    eps: f64,
    partition: &Partition,
    step: f64,
) -> Result<bool> {
    check_args(system, t, step)?;
    if !(eps > 0.0) {
        return Err(FkError::usage(format!("eps must be positive, got {eps}")));
    }
    Ok(member_tracks(&track(system, center, t, step, partition)?, &track(system, y, t, step, partition)?, eps))
}

/// Fewest sample points a cover is computed over.
pub const MIN_COVER_SAMPLE: usize = 50;

/// Greedy `(eps, t, P)`-cover of a point sample, an upper bound on `K_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub count: usize,
    /// Sample indices of the chosen centers, in the order chosen.
    pub centers: Vec<usize>,
    pub covered_mass: f64,
    pub target: f64,
    /// False when every ball has been used and the target is still missed.
    pub reached: bool,
    pub sample_size: usize,
}

/// Greedy cover: repeatedly take the ball covering the most uncovered
/// sample mass until the covered mass exceeds `target`. Balls are tried
/// alone in sample order first; if one of them exceeds the target the
/// count is 1 and the search stops there.
pub fn covering_number(
    system: &System,
    points: &[PhasePoint],
    t: f64,
    eps: f64,
    partition: &Partition,
    target: f64,
    step: f64,
) -> Result<Cover> {
    check_args(system, t, step)?;
    if points.len() < MIN_COVER_SAMPLE {
        return Err(FkError::usage(format!("covering needs at least {MIN_COVER_SAMPLE} sample points, got {}", points.len())));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FkError::usage(format!("eps must lie in (0, 1), got {eps}")));
    }
    let tracks: Vec<LabelTrack> =
        points.par_iter().map(|p| track(system, p, t, step, partition)).collect::<Result<_>>()?;
    covering_tracks(&tracks, eps, target)
}

/// [`covering_number`] on precomputed label tracks.
///
/// A ball is abandoned in the first pass as soon as it misses too many
/// points to exceed the target alone. The greedy phase keeps the gain of
/// the last evaluation as an upper bound for each ball (gains only shrink
/// as the cover grows) and re-evaluates a ball only when its bound leads,
/// on uncovered points only. Ties go to the lowest sample index.
pub fn covering_tracks(tracks: &[LabelTrack], eps: f64, target: f64) -> Result<Cover> {
    let n = tracks.len();
    if n == 0 {
        return Err(FkError::usage("empty sample"));
    }
    let enough = |k: usize| k as f64 / n as f64 > target;
    let member = |c: usize, y: usize| y == c || member_tracks(&tracks[c], &tracks[y], eps);
    let batch = rayon::current_num_threads().max(1);
    let mut known: Vec<Vec<Option<bool>>> = vec![vec![None; n]; n];
    let mut bound = vec![0usize; n];
    for c in 0..n {
        let (mut hits, mut misses) = (0, 0);
        let mut y0 = 0;
        while y0 < n && enough(n - misses) {
            let y1 = (y0 + batch).min(n);
            let got: Vec<bool> = (y0..y1).into_par_iter().map(|y| member(c, y)).collect();
            for (y, m) in (y0..y1).zip(got) {
                known[c][y] = Some(m);
                if m {
                    hits += 1;
                } else {
                    misses += 1;
                }
            }
            y0 = y1;
        }
        if enough(hits) {
            return Ok(Cover { count: 1, centers: vec![c], covered_mass: hits as f64 / n as f64, target, reached: true, sample_size: n });
        }
        bound[c] = n - misses;
    }
    let mut covered = vec![false; n];
    let mut n_covered = 0;
    let mut centers = Vec::new();
    let mut fresh = vec![false; n];
    while !enough(n_covered) {
        fresh.iter_mut().for_each(|f| *f = false);
        let pick = loop {
            let c = (0..n).fold(0, |b, c| if bound[c] > bound[b] { c } else { b });
            if bound[c] == 0 {
                break None;
            }
            if fresh[c] {
                break Some(c);
            }
            let todo: Vec<usize> = (0..n).filter(|&y| !covered[y] && known[c][y].is_none()).collect();
            let got: Vec<bool> = todo.par_iter().map(|&y| member(c, y)).collect();
            for (&y, m) in todo.iter().zip(got) {
                known[c][y] = Some(m);
            }
            bound[c] = (0..n).filter(|&y| !covered[y] && known[c][y] == Some(true)).count();
            fresh[c] = true;
        };
        let Some(c) = pick else { break };
        for y in 0..n {
            if !covered[y] && known[c][y] == Some(true) {
                covered[y] = true;
                n_covered += 1;
            }
        }
        bound[c] = 0;
        centers.push(c);
    }
    Ok(Cover {
        count: centers.len(),
        centers,
        covered_mass: n_covered as f64 / n as f64,
        target,
        reached: enough(n_covered),
        sample_size: n,
    })
}

/// The growth scale `u` in `log K_t / u(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UFunction {
    Identity,
    Log,
    Sqrt,
}

impl UFunction {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            UFunction::Identity => t,
            UFunction::Log => (1.0 + t).ln(),
            UFunction::Sqrt => t.sqrt(),
        }
    }
}

impl fmt::Display for UFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UFunction::Identity => "identity",
            UFunction::Log => "log",
            UFunction::Sqrt => "sqrt",
        })
    }
}

impl FromStr for UFunction {
    type Err = FkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identity" => Ok(UFunction::Identity),
            "log" => Ok(UFunction::Log),
            "sqrt" => Ok(UFunction::Sqrt),
            other => Err(FkError::config("u", format!("unknown u {other:?}; expected identity, log or sqrt"))),
        }
    }
}

/// `log K_t / u(t)` along a horizon grid; `tail_inf` is the minimum over
/// the last quarter and stands in for the lower limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaCurve {
    pub u: UFunction,
    pub horizons: Vec<f64>,
    pub counts: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_inf: f64,
}

pub fn beta_from_counts(horizons: &[f64], counts: &[f64], u: UFunction) -> Result<BetaCurve> {
    if horizons.len() != counts.len() {
        return Err(FkError::usage("horizon and count lengths differ"));
    }
    if horizons.len() < 4 {
        return Err(FkError::usage(format!("need at least 4 horizons, got {}", horizons.len())));
    }
    if horizons.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(FkError::usage("horizons must increase"));
    }
    if counts.iter().any(|&k| !(k >= 1.0)) {
        return Err(FkError::usage("covering counts must be at least 1"));
    }
    let values: Vec<f64> = horizons.iter().zip(counts).map(|(&t, &k)| k.ln() / u.eval(t)).collect();
    Ok(BetaCurve { u, horizons: horizons.to_vec(), counts: counts.to_vec(), tail_inf: tail_min(&values), values })
}

/// Greedy covering counts along `horizons`, turned into a beta curve.
#[allow(clippy::too_many_arguments)]
pub fn beta_estimate(
    system: &System,
    points: &[PhasePoint],
    eps: f64,
    partition: &Partition,
    u: UFunction,
    horizons: &[f64],
    step: f64,
) -> Result<BetaCurve> {
    let counts: Vec<f64> = horizons
        .iter()
        .map(|&t| covering_number(system, points, t, eps, partition, 1.0 - eps, step).map(|c| c.count as f64))
        .collect::<Result<_>>()?;
    beta_from_counts(horizons, &counts, u)
}

/// Finite-family stand-ins for `e(u, P)` and `e(Phi, u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ESurrogate {
    /// Per partition: maximum of the beta tails over the smallest quarter
    /// of the declared `eps` values.
    pub per_partition: Vec<(String, f64)>,
    /// Maximum over the declared partitions.
    pub e_phi: f64,
    pub note: String,
}

/// `family[p] = (name, [(eps, beta tail_inf)])`.
pub fn e_surrogates(family: &[(String, Vec<(f64, f64)>)]) -> Result<ESurrogate> {
    if family.is_empty() || family.iter().any(|(_, v)| v.is_empty()) {
        return Err(FkError::usage("empty surrogate family"));
    }
    let per_partition: Vec<(String, f64)> = family
        .iter()
        .map(|(name, v)| {
            let mut v = v.clone();
            v.sort_by(|a, b| b.0.total_cmp(&a.0));
            let betas: Vec<f64> = v.iter().map(|e| e.1).collect();
            (name.clone(), tail_max(&betas))
        })
        .collect();
    let e_phi = per_partition.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(ESurrogate {
        per_partition,
        e_phi,
        note: "finite-family surrogate over the declared eps values and partitions".into(),
    })
}
