use serde::{Deserialize, Serialize};

use super::ratner::LabelTrack;
use crate::error::{FkError, Result};
use crate::matching::ContMatching;

/// A `Q`-matching restricted to the cells where `P` and `Q` agree on both
/// orbits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub matching: ContMatching,
    /// Certified slope/coverage value of the input matching.
    pub eps_in: f64,
    /// Certified value of the restriction; 1 when nothing is left.
    pub eps_out: f64,
    pub d_pq: f64,
    pub delta: f64,
    /// `4 eps_in + 2 d_pq + delta`.
    pub bound: f64,
    /// Cells lost where the sampled image of a drift piece repeats a y
    /// cell, as a fraction of the grid.
    pub slack: f64,
    pub collisions: usize,
    /// Empirical `P != Q` frequencies along the x and y orbits.
    pub freq_x: f64,
    pub freq_y: f64,
    /// Both frequencies within `delta / 2` of `d_pq`.
    pub in_h: bool,
    pub feasible: bool,
    pub pass: bool,
}

/// Map taking a `Q` label to the `P` label it is paired with, from the
/// assignment `sigma` of [`super::d_mu_assignment`].
pub fn align_labels(sigma: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; sigma.len()];
    for (i, &j) in sigma.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn disagreement(p: &[u32], q: &[u32], m: usize) -> f64 {
    p[..m].iter().zip(&q[..m]).filter(|(a, b)| a != b).count() as f64 / m as f64
}

/// Restrict a `(t, eps, Q)`-matching `h` to the agreement set
/// `{i : P(x_i) = Q(x_i)}` and its image counterpart on `y`, and compare the
/// certified value of the restriction with `4 eps + 2 d_pq + delta`. The
/// `Q` tracks must use labels already aligned to `P` (see
/// [`align_labels`]).
pub fn transfer_matching(
    h: &ContMatching,
    px: &LabelTrack,
    qx: &LabelTrack,
    py: &LabelTrack,
    qy: &LabelTrack,
    d_pq: f64,
    delta: f64,
) -> Result<TransferResult> {
    let m = h.m;
    for (name, tr) in [("P(x)", px), ("Q(x)", qx), ("P(y)", py), ("Q(y)", qy)] {
        if tr.len() < m || tr.step != h.step {
            return Err(FkError::usage(format!(
                "track {name} ({} samples, step {}) does not fit the matching grid ({m} cells, step {})",
                tr.len(),
                tr.step,
                h.step
            )));
        }
    }
    if !(delta > 0.0) || !(0.0..=1.0).contains(&d_pq) {
        return Err(FkError::usage(format!("need delta > 0 and d_pq in [0, 1], got {delta}, {d_pq}")));
    }
    for p in &h.pieces {
        for k in 0..p.a {
            let (i, j) = (p.x0 + k, p.y_cell(k));
            if qx.labels[i] != qy.labels[j] {
                return Err(FkError::usage(format!("h is not a Q-matching: cells {i} and {j} carry different labels")));
            }
        }
    }
    let freq_x = disagreement(&px.labels, &qx.labels, m);
    let freq_y = disagreement(&py.labels, &qy.labels, m);
    let in_h = (freq_x - d_pq).abs() <= delta / 2.0 && (freq_y - d_pq).abs() <= delta / 2.0;
    let (matching, collisions) =
        h.restrict(|i, j| px.labels[i] == qx.labels[i] && py.labels[j] == qy.labels[j]);
    let feasible = !matching.pieces.is_empty();
    let eps_out = if feasible { matching.eps } else { 1.0 };
    let bound = 4.0 * h.eps + 2.0 * d_pq + delta;
    let slack = collisions as f64 / m.max(1) as f64;
    Ok(TransferResult {
        matching,
        eps_in: h.eps,
        eps_out,
        d_pq,
        delta,
        bound,
        slack,
        collisions,
        freq_x,
        freq_y,
        in_h,
        feasible,
        pass: eps_out <= bound + slack,
    })
}
