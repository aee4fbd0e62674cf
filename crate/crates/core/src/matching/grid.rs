//! Banded dynamic program over grid pairs for slope-constrained matchings.
//!
//! Nodes `(i, j)` with `0 <= i, j <= m` are positions on the two sampled
//! time axes. A path from `(0, 0)` to `(m, m)` uses
//! * skips `(i, j) -> (i + 1, j)` and `(i, j) -> (i, j + 1)`, which match
//!   nothing,
//! * diagonal steps over a compatible cell, slope 1,
//! * drifts over `L` x cells and `L + 1` y cells or the reverse, with
//!   `L = floor(1 / eps) + 1` so that `|slope - 1| < eps`, allowed when the
//!   sampled image of every x cell is compatible.
//!
//! Matched x and y coverages are maximized lexicographically by their sum
//! and then by their minimum.

use super::bitmatrix::BitMatrix;
use super::cont::GridPiece;

/// Compatibility bits computed on demand in a diagonal band.
pub(crate) struct Band<F> {
    m: usize,
    done: Vec<Option<usize>>,
    bits: BitMatrix,
    pred: F,
}

impl<F: Fn(usize, usize) -> bool> Band<F> {
    pub(crate) fn new(m: usize, pred: F) -> Self {
        Band { m, done: vec![None; m], bits: BitMatrix::new(m, m), pred }
    }

    /// Make sure every cell with `i < rows`, `|j - i| <= w` is computed.
    #[cfg(test)]
    pub(crate) fn ensure(&mut self, w: usize, rows: usize) {
        for i in 0..rows.min(self.m) {
            self.ensure_row(i, w);
        }
    }

    fn ensure_row(&mut self, i: usize, w: usize) {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(self.m - 1);
        match self.done[i] {
            Some(d) if d >= w => return,
            Some(d) => {
                let (dlo, dhi) = (i.saturating_sub(d), (i + d).min(self.m - 1));
                for j in (lo..dlo).chain(dhi + 1..=hi) {
                    if (self.pred)(i, j) {
                        self.bits.set(i, j, true);
                    }
                }
            }
            None => {
                for j in lo..=hi {
                    if (self.pred)(i, j) {
                        self.bits.set(i, j, true);
                    }
                }
            }
        }
        self.done[i] = Some(w);
    }

    #[cfg(test)]
    pub(crate) fn bits(&self) -> &BitMatrix {
        &self.bits
    }
}

/// Compatibility rows made available to [`solve`] one at a time.
pub(crate) trait Compat {
    /// Make row `r` valid within half-width `w` of the diagonal.
    fn prepare(&mut self, r: usize, w: usize);
    fn matrix(&self) -> &BitMatrix;
}

impl Compat for BitMatrix {
    fn prepare(&mut self, _: usize, _: usize) {}

    fn matrix(&self) -> &BitMatrix {
        self
    }
}

impl<F: Fn(usize, usize) -> bool> Compat for Band<F> {
    fn prepare(&mut self, r: usize, w: usize) {
        self.ensure_row(r, w);
    }

    fn matrix(&self) -> &BitMatrix {
        &self.bits
    }
}

/// Drift length for a slope tolerance `eps` in `(0, 1)`.
pub(crate) fn drift_len(eps: f64) -> usize {
    (1.0 / eps).floor() as usize + 1
}

/// Band half-width outside which no feasible path can pass.
pub(crate) fn band_width(m: usize, eps: f64) -> usize {
    ((2.0 * eps * m as f64).floor() as usize + 1).min(m)
}

pub(crate) struct DpOutcome {
    /// Matched x cells.
    pub x: usize,
    /// Matched y cells.
    pub y: usize,
    pub pieces: Option<Vec<GridPiece>>,
}

impl DpOutcome {
    /// Both coverages strictly above `(1 - eps) m`.
    pub(crate) fn feasible(&self, m: usize, eps: f64) -> bool {
        let need = eps * m as f64;
        ((m - self.x) as f64) < need && ((m - self.y) as f64) < need
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Val {
    x: u32,
    y: u32,
}

impl Val {
    const UNREACHED: Val = Val { x: NONE, y: NONE };

    #[inline]
    fn reached(self) -> bool {
        self.x != NONE
    }

    #[inline]
    fn key(self) -> (u32, u32, u32) {
        (self.x + self.y, self.x.min(self.y), self.x)
    }

    #[inline]
    fn add(self, dx: u32, dy: u32) -> Val {
        if !self.reached() {
            return self;
        }
        Val { x: self.x + dx, y: self.y + dy }
    }
}

const MV_START: u8 = 0;
const MV_XSKIP: u8 = 1;
const MV_YSKIP: u8 = 2;
const MV_DIAG: u8 = 3;
const MV_UP: u8 = 4;
const MV_DOWN: u8 = 5;

/// Run the dynamic program on the leading `m x m` block of `compat`.
///
/// Nodes whose best value already leaves at least `eps m` cells unmatched
/// on either axis cannot end feasibly and are dropped; this never changes
/// whether the final value is feasible. Without tracing the program stops
/// as soon as a whole row is dropped.
pub(crate) fn solve(compat: &mut impl Compat, m: usize, eps: f64, trace: bool) -> DpOutcome {
    debug_assert!(eps > 0.0 && eps < 1.0);
    if m == 0 {
        return DpOutcome { x: 0, y: 0, pieces: trace.then(Vec::new) };
    }
    let l = drift_len(eps);
    let w = band_width(m, eps);
    let width = 2 * w + 1;
    let ring = l + 2;
    let c_up = l.div_ceil(2);
    let c_down = (l + 1) / 2 + 1;

    let mut vals = vec![Val::UNREACHED; ring * width];
    let mut runs = vec![0u32; ring * width];
    let mut moves = if trace { vec![MV_START; (m + 1) * width] } else { Vec::new() };

    // Column slot of (row, col) in the band, if inside.
    let slot = |r: usize, c: usize| -> Option<usize> {
        let off = c as isize - r as isize + w as isize;
        (off >= 0 && (off as usize) < width).then_some(off as usize)
    };

    let slack = eps * m as f64;
    let dead = |v: Val, i: usize, j: usize| (i - v.x as usize) as f64 >= slack || (j - v.y as usize) as f64 >= slack;

    for i in 0..=m {
        let ri = (i % ring) * width;
        // Cell row i - 1: diagonal run lengths.
        if i >= 1 {
            let r = i - 1;
            compat.prepare(r, w);
            let rr = (r % ring) * width;
            let prev = if r >= 1 { Some(((r - 1) % ring) * width) } else { None };
            let row = compat.matrix().row(r);
            for s in 0..width {
                let c = (r + s) as isize - w as isize;
                let v = if c < 0 || c as usize >= m {
                    0
                } else {
                    let c = c as usize;
                    if (row[c / 64] >> (c % 64)) & 1 == 1 {
                        match (prev, c) {
                            (Some(p), c) if c >= 1 => runs[p + s] + 1,
                            _ => 1,
                        }
                    } else {
                        0
                    }
                };
                runs[rr + s] = v;
            }
        }
        let run_at = |r: usize, c: usize| -> u32 {
            match slot(r, c) {
                Some(s) => runs[(r % ring) * width + s],
                None => 0,
            }
        };
        let val_at = |vals: &Vec<Val>, r: usize, c: usize| -> Val {
            match slot(r, c) {
                Some(s) => vals[(r % ring) * width + s],
                None => Val::UNREACHED,
            }
        };

        let jlo = i.saturating_sub(w);
        let jhi = (i + w).min(m);
        let mut alive = false;
        // Clear the ring row before filling it.
        for v in &mut vals[ri..ri + width] {
            *v = Val::UNREACHED;
        }
        for j in jlo..=jhi {
            let s = j + w - i;
            let mut best = Val::UNREACHED;
            let mut mv = MV_START;
            let offer = |cand: Val, code: u8, best: &mut Val, mv: &mut u8| {
                if cand.reached() && (!best.reached() || cand.key() > best.key()) {
                    *best = cand;
                    *mv = code;
                }
            };
            if i == 0 && j == 0 {
                best = Val { x: 0, y: 0 };
            }
            if i >= 1 {
                offer(val_at(&vals, i - 1, j), MV_XSKIP, &mut best, &mut mv);
            }
            if j >= 1 && s >= 1 {
                offer(vals[ri + s - 1], MV_YSKIP, &mut best, &mut mv);
            }
            if i >= 1 && j >= 1 && compat.matrix().get(i - 1, j - 1) {
                offer(val_at(&vals, i - 1, j - 1).add(1, 1), MV_DIAG, &mut best, &mut mv);
            }
            // Drift up: L x cells onto L + 1 y cells, from (i - L, j - L - 1).
            if i >= l && j > l {
                let (i0, j0) = (i - l, j - l - 1);
                let tail = (l - c_up) as u32;
                if slot(i0, j0).is_some()
                    && (tail == 0 || run_at(i - 1, j - 1) >= tail)
                    && run_at(i0 + c_up - 1, j0 + c_up - 1) >= c_up as u32
                {
                    offer(val_at(&vals, i0, j0).add(l as u32, l as u32 + 1), MV_UP, &mut best, &mut mv);
                }
            }
            // Drift down: L + 1 x cells onto L y cells, from (i - L - 1, j - L).
            if i > l && j >= l {
                let (i0, j0) = (i - l - 1, j - l);
                let tail = (l + 1 - c_down) as u32;
                if slot(i0, j0).is_some()
                    && (tail == 0 || run_at(i - 1, j - 1) >= tail)
                    && run_at(i0 + c_down - 1, j0 + c_down - 1) >= c_down as u32
                {
                    offer(val_at(&vals, i0, j0).add(l as u32 + 1, l as u32), MV_DOWN, &mut best, &mut mv);
                }
            }
            if best.reached() && dead(best, i, j) {
                best = Val::UNREACHED;
                mv = MV_START;
            }
            alive |= best.reached();
            vals[ri + s] = best;
            if trace {
                moves[i * width + s] = mv;
            }
        }
        if !alive && !trace {
            return DpOutcome { x: 0, y: 0, pieces: None };
        }
    }
    let end = vals[(m % ring) * width + w];
    if !end.reached() {
        // Nothing feasible; report an empty matching.
        return DpOutcome { x: 0, y: 0, pieces: trace.then(Vec::new) };
    }
    let pieces = trace.then(|| traceback(&moves, m, w, l));
    DpOutcome { x: end.x as usize, y: end.y as usize, pieces }
}

fn traceback(moves: &[u8], m: usize, w: usize, l: usize) -> Vec<GridPiece> {
    let width = 2 * w + 1;
    let mut out: Vec<GridPiece> = Vec::new();
    let (mut i, mut j) = (m, m);
    while i > 0 || j > 0 {
        let s = j + w - i;
        match moves[i * width + s] {
            MV_XSKIP => i -= 1,
            MV_YSKIP => j -= 1,
            MV_DIAG => {
                i -= 1;
                j -= 1;
                match out.last_mut() {
                    Some(p) if p.a == p.b && p.x0 == i + 1 && p.y0 == j + 1 => {
                        p.x0 = i;
                        p.y0 = j;
                        p.a += 1;
                        p.b += 1;
                    }
                    _ => out.push(GridPiece { x0: i, y0: j, a: 1, b: 1 }),
                }
            }
            MV_UP => {
                i -= l;
                j -= l + 1;
                out.push(GridPiece { x0: i, y0: j, a: l, b: l + 1 });
            }
            MV_DOWN => {
                i -= l + 1;
                j -= l;
                out.push(GridPiece { x0: i, y0: j, a: l + 1, b: l });
            }
            _ => unreachable!("unreached node on the optimal path"),
        }
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(m: usize, f: impl Fn(usize, usize) -> bool) -> BitMatrix {
        BitMatrix::from_fn(m, m, f)
    }

    #[test]
    fn identity_is_fully_covered() {
        let m = 50;
        let mut c = full(m, |i, j| i == j);
        let out = solve(&mut c, m, 0.1, true);
        assert_eq!((out.x, out.y), (m, m));
        assert_eq!(out.pieces.unwrap(), vec![GridPiece { x0: 0, y0: 0, a: m, b: m }]);
    }

    #[test]
    fn shifted_diagonal() {
        let (m, r) = (100, 3);
        let mut c = full(m, |i, j| j == i + r);
        let out = solve(&mut c, m, 0.1, true);
        assert_eq!((out.x, out.y), (m - r, m - r));
        assert!(out.feasible(m, 0.1));
        assert!(!out.feasible(m, 0.03));
    }

    #[test]
    fn drift_needs_compatible_images() {
        // y runs at speed 1 + 1/(L') relative to x: only drifts can follow.
        let m = 120;
        let eps = 0.3; // L = 4
        let l = drift_len(eps);
        assert_eq!(l, 4);
        let pieces: Vec<GridPiece> = (0..m / (l + 1)).map(|q| GridPiece { x0: q * l, y0: q * (l + 1), a: l, b: l + 1 }).collect();
        let mut c = BitMatrix::new(m, m);
        for p in &pieces {
            for k in 0..p.a {
                if p.x0 + k < m && p.y_cell(k) < m {
                    c.set(p.x0 + k, p.y_cell(k), true);
                }
            }
        }
        let out = solve(&mut c, m, eps, true);
        let got = out.pieces.unwrap();
        assert!(got.iter().any(|p| p.b == p.a + 1));
        for p in &got {
            for k in 0..p.a {
                assert!(c.get(p.x0 + k, p.y_cell(k)));
            }
        }
        let x: usize = got.iter().map(|p| p.a).sum();
        let y: usize = got.iter().map(|p| p.b).sum();
        assert_eq!((x, y), (out.x, out.y));
    }

    #[test]
    fn empty_matrix_is_infeasible() {
        let m = 30;
        let out = solve(&mut BitMatrix::new(m, m), m, 0.5, true);
        assert_eq!((out.x, out.y), (0, 0));
        assert!(!out.feasible(m, 0.5));
        assert!(out.pieces.unwrap().is_empty());
    }

    #[test]
    fn lazy_band_matches_full_matrix() {
        let m = 70;
        let pred = |i: usize, j: usize| (i * 7 + j * 3) % 5 == 0;
        let mut band = Band::new(m, pred);
        band.ensure(3, m);
        band.ensure(10, m);
        for i in 0..m {
            for j in 0..m {
                let inside = (i as isize - j as isize).unsigned_abs() <= 10;
                assert_eq!(band.bits().get(i, j), inside && pred(i, j));
            }
        }
    }
}
