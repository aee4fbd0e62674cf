use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::systems::{OrbitSample, PhasePoint, System};

/// `a` consecutive x cells starting at `x0` mapped linearly onto `b`
/// consecutive y cells starting at `y0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPiece {
    pub x0: usize,
    pub y0: usize,
    pub a: usize,
    pub b: usize,
}

impl GridPiece {
    /// The y cell holding the image of x cell `x0 + k`, by rounding
    /// `k * b / a` to the nearest integer (halves up). Stays inside the
    /// piece whenever `b > a / 2`.
    #[inline]
    pub fn y_cell(&self, k: usize) -> usize {
        self.y0 + (2 * k * self.b + self.a) / (2 * self.a)
    }

    pub fn slope(&self) -> f64 {
        self.b as f64 / self.a as f64
    }
}

/// A piecewise linear increasing time change `h: A -> A'` between two
/// orbit segments of length `t`, with knots on the sampling grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContMatching {
    pub t: f64,
    pub step: f64,
    /// Number of grid cells on each axis.
    pub m: usize,
    /// Smallest value with every larger `eps` certified: slopes within
    /// `(1 - eps, 1 + eps)` and both coverages above `(1 - eps) t`.
    pub eps: f64,
    /// Closeness threshold the pieces were matched under.
    pub delta: f64,
    pub knots: Vec<(f64, f64)>,
    /// Inclusive knot index ranges over which `h` is linear.
    pub segments: Vec<(usize, usize)>,
    pub pieces: Vec<GridPiece>,
    /// Lebesgue measure of the domain `A`.
    pub coverage: f64,
    /// Lebesgue measure of the image `A'`.
    pub image_coverage: f64,
}

impl ContMatching {
    /// Assemble a matching from ordered, disjoint pieces.
    pub fn from_pieces(pieces: Vec<GridPiece>, m: usize, step: f64, delta: f64) -> ContMatching {
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(2 * pieces.len());
        let mut segments = Vec::with_capacity(pieces.len());
        let mut last_end: Option<(usize, usize)> = None;
        let (mut cx, mut cy) = (0usize, 0usize);
        let mut worst_slope: f64 = 0.0;
        for p in &pieces {
            if last_end != Some((p.x0, p.y0)) {
                knots.push((p.x0 as f64 * step, p.y0 as f64 * step));
            }
            let start = knots.len() - 1;
            knots.push(((p.x0 + p.a) as f64 * step, (p.y0 + p.b) as f64 * step));
            segments.push((start, start + 1));
            last_end = Some((p.x0 + p.a, p.y0 + p.b));
            cx += p.a;
            cy += p.b;
            worst_slope = worst_slope.max((p.slope() - 1.0).abs());
        }
        let mf = m.max(1) as f64;
        let eps = worst_slope.max(1.0 - cx as f64 / mf).max(1.0 - cy as f64 / mf).clamp(0.0, 1.0);
        ContMatching {
            t: m as f64 * step,
            step,
            m,
            eps,
            delta,
            knots,
            segments,
            pieces,
            coverage: cx as f64 * step,
            image_coverage: cy as f64 * step,
        }
    }

    pub fn identity(m: usize, step: f64, delta: f64) -> ContMatching {
        let pieces = if m > 0 { vec![GridPiece { x0: 0, y0: 0, a: m, b: m }] } else { Vec::new() };
        ContMatching::from_pieces(pieces, m, step, delta)
    }

    /// `h(s)` for `s` in the domain, `None` outside it.
    pub fn h(&self, s: f64) -> Option<f64> {
        self.pieces.iter().find_map(|p| {
            let lo = p.x0 as f64 * self.step;
            let hi = (p.x0 + p.a) as f64 * self.step;
            (s >= lo && s < hi).then(|| p.y0 as f64 * self.step + (s - lo) * p.slope())
        })
    }

    pub fn matched_cells(&self) -> usize {
        self.pieces.iter().map(|p| p.a).sum()
    }

    /// Keep only the x cells `x0 + k` of each piece for which
    /// `keep(x_cell, y_cell)` holds, with `y_cell` the sampled image. The
    /// kept cells are re-assembled into slope-one pieces following the cell
    /// map `k -> y_cell(k)`; where a piece sends two x cells to one y cell
    /// only the first is kept. Returns the restriction and the number of
    /// cells dropped for that reason.
    pub fn restrict(&self, mut keep: impl FnMut(usize, usize) -> bool) -> (ContMatching, usize) {
        let mut out: Vec<GridPiece> = Vec::new();
        let mut collisions = 0;
        let mut last_y: Option<usize> = None;
        for p in &self.pieces {
            for k in 0..p.a {
                let (xi, yj) = (p.x0 + k, p.y_cell(k));
                if last_y.is_some_and(|y| yj <= y) {
                    collisions += 1;
                    continue;
                }
                if !keep(xi, yj) {
                    continue;
                }
                last_y = Some(yj);
                match out.last_mut() {
                    Some(q) if q.x0 + q.a == xi && q.y0 + q.b == yj => {
                        q.a += 1;
                        q.b += 1;
                    }
                    _ => out.push(GridPiece { x0: xi, y0: yj, a: 1, b: 1 }),
                }
            }
        }
        (ContMatching::from_pieces(out, self.m, self.step, self.delta), collisions)
    }

    fn check_structure(&self, eps: f64) -> Result<()> {
        let fail = |msg: String| Err(FkError::Construction(msg));
        let mut prev: Option<&GridPiece> = None;
        let (mut cx, mut cy) = (0usize, 0usize);
        for p in &self.pieces {
            if p.a == 0 || p.b == 0 {
                return fail(format!("empty piece {p:?}"));
            }
            if p.x0 + p.a > self.m || p.y0 + p.b > self.m {
                return fail(format!("piece {p:?} leaves [0, {}]", self.m));
            }
            if let Some(q) = prev {
                if p.x0 < q.x0 + q.a || p.y0 < q.y0 + q.b {
                    return fail(format!("pieces {q:?} and {p:?} overlap or are out of order"));
                }
            }
            if (p.slope() - 1.0).abs() >= eps {
                return fail(format!("piece {p:?} has slope {} outside (1 - {eps}, 1 + {eps})", p.slope()));
            }
            cx += p.a;
            cy += p.b;
            prev = Some(p);
        }
        let need = (1.0 - eps) * self.m as f64;
        if !(cx as f64 > need) || !(cy as f64 > need) {
            return fail(format!(
                "coverage {cx}/{cy} cells does not exceed (1 - {eps}) * {} = {need}",
                self.m
            ));
        }
        for (k, &(s, e)) in self.segments.iter().enumerate() {
            let p = &self.pieces[k];
            let (ks, ke) = (self.knots[s], self.knots[e]);
            let tol = 1e-9 * self.step.max(1.0);
            if (ks.0 - p.x0 as f64 * self.step).abs() > tol
                || (ke.0 - (p.x0 + p.a) as f64 * self.step).abs() > tol
                || (ks.1 - p.y0 as f64 * self.step).abs() > tol
                || (ke.1 - (p.y0 + p.b) as f64 * self.step).abs() > tol
            {
                return fail(format!("knots of segment {k} disagree with piece {p:?}"));
            }
        }
        Ok(())
    }

    /// Re-validate on the sampling grid against the raw orbit points:
    /// structure, slopes strictly within `eps` of 1, both coverages above
    /// `(1 - eps) t`, and every x sample within `delta` of the y sample
    /// holding its image.
    pub fn check_grid(&self, system: &System, ox: &OrbitSample, oy: &OrbitSample, eps: f64) -> Result<()> {
        if ox.len() < self.m || oy.len() < self.m || ox.step != self.step || oy.step != self.step {
            return Err(FkError::usage("orbit samples do not fit the matching grid"));
        }
        self.check_structure(eps)?;
        for p in &self.pieces {
            for k in 0..p.a {
                let (i, j) = (p.x0 + k, p.y_cell(k));
                let d = system.dist(&ox.points[i], &oy.points[j])?;
                if !(d < self.delta) {
                    return Err(FkError::Construction(format!(
                        "samples {i} and {j} are {d} apart, not below {}",
                        self.delta
                    )));
                }
            }
        }
        Ok(())
    }

    /// Re-validate in continuous time: `probes` evenly spaced times in each
    /// piece (plus a point just before its right end) are evolved exactly
    /// and compared under `delta_check`.
    pub fn check_flow(
        &self,
        system: &System,
        x: &PhasePoint,
        y: &PhasePoint,
        eps: f64,
        delta_check: f64,
        probes: usize,
    ) -> Result<()> {
        self.check_structure(eps)?;
        let probes = probes.max(1);
        for p in &self.pieces {
            let lo = p.x0 as f64 * self.step;
            let len = p.a as f64 * self.step;
            let times = (0..probes)
                .map(|q| lo + len * q as f64 / probes as f64)
                .chain(std::iter::once(lo + len * (1.0 - 1e-9)));
            for s in times {
                let u = p.y0 as f64 * self.step + (s - lo) * p.slope();
                let d = system.dist(&system.evolve(x, s)?, &system.evolve(y, u)?)?;
                if !(d < delta_check) {
                    return Err(FkError::Construction(format!(
                        "at s = {s}, h(s) = {u} the orbits are {d} apart, not below {delta_check}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knots_and_coverage() {
        let pieces = vec![
            GridPiece { x0: 0, y0: 0, a: 4, b: 4 },
            GridPiece { x0: 4, y0: 4, a: 3, b: 4 },
            GridPiece { x0: 8, y0: 9, a: 2, b: 2 },
        ];
        let c = ContMatching::from_pieces(pieces, 10, 0.5, 0.1);
        assert_eq!(c.knots, vec![(0.0, 0.0), (2.0, 2.0), (3.5, 4.0), (4.0, 4.5), (5.0, 5.5)]);
        assert_eq!(c.segments, vec![(0, 1), (1, 2), (3, 4)]);
        assert_eq!(c.coverage, 4.5);
        assert_eq!(c.image_coverage, 5.0);
        assert!((c.eps - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.h(1.0), Some(1.0));
        assert_eq!(c.h(3.75), None);
        assert!((c.h(2.75).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rounding_stays_inside_pieces() {
        for a in 3..40 {
            for b in [a - 1, a, a + 1] {
                let p = GridPiece { x0: 0, y0: 0, a, b };
                let cells: Vec<usize> = (0..a).map(|k| p.y_cell(k)).collect();
                assert_eq!(cells[0], 0);
                assert!(*cells.last().unwrap() < b, "a={a} b={b} {cells:?}");
                assert!(cells.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn restrict_splits_diagonals() {
        let c = ContMatching::identity(6, 1.0, 0.1);
        let (r, lost) = c.restrict(|i, _| i != 2);
        assert_eq!(lost, 0);
        assert_eq!(r.pieces, vec![GridPiece { x0: 0, y0: 0, a: 2, b: 2 }, GridPiece { x0: 3, y0: 3, a: 3, b: 3 }]);
        assert_eq!(r.coverage, 5.0);
        let (none, _) = c.restrict(|_, _| false);
        assert_eq!(none.eps, 1.0);
    }

    #[test]
    fn restrict_follows_the_cell_map_of_drifts() {
        let c = ContMatching::from_pieces(
            vec![GridPiece { x0: 0, y0: 0, a: 4, b: 5 }, GridPiece { x0: 4, y0: 5, a: 5, b: 4 }],
            10,
            1.0,
            0.1,
        );
        let (r, lost) = c.restrict(|_, _| true);
        assert_eq!(lost, 1);
        assert!(r.pieces.iter().all(|p| p.a == p.b));
        assert_eq!(r.matched_cells(), 8);
        let cells: Vec<(usize, usize)> =
            r.pieces.iter().flat_map(|p| (0..p.a).map(move |k| (p.x0 + k, p.y0 + k))).collect();
        let want: Vec<(usize, usize)> = c
            .pieces
            .iter()
            .flat_map(|p| (0..p.a).map(move |k| (p.x0 + k, p.y_cell(k))))
            .filter(|&(x, _)| x != 7)
            .collect();
        assert_eq!(cells, want);
    }
}
