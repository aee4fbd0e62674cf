use serde::{Deserialize, Serialize};

use super::bitmatrix::BitMatrix;
use super::estimate::GapEstimate;
use crate::error::{FkError, Result};
use crate::systems::{OrbitSample, PhasePoint, System};

/// An order-preserving partial bijection between index windows `[0, n)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub n: usize,
}

impl Matching {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Check order preservation, index range and support on `m`.
    pub fn validate(&self, m: Option<&BitMatrix>) -> Result<()> {
        for w in self.pairs.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
                return Err(FkError::usage(format!("pairs {:?} and {:?} are not increasing", w[0], w[1])));
            }
        }
        for &(i, j) in &self.pairs {
            if i >= self.n || j >= self.n {
                return Err(FkError::usage(format!("pair ({i}, {j}) outside [0, {})", self.n)));
            }
            if let Some(m) = m {
                if !m.get(i, j) {
                    return Err(FkError::usage(format!("pair ({i}, {j}) is not compatible")));
                }
            }
        }
        Ok(())
    }
}

/// Entry `(i, j)` is true iff `dist(x_i, y_j) < delta`. Shorter orbits are
/// padded with all-false rows or columns to a square matrix.
pub fn compat_matrix(ox: &OrbitSample, oy: &OrbitSample, delta: f64) -> Result<BitMatrix> {
    ox.check_compatible(oy)?;
    if !(delta > 0.0) {
        return Err(FkError::usage(format!("delta must be positive, got {delta}")));
    }
    let n = ox.len().max(oy.len());
    let mut m = BitMatrix::new(n, n);
    for i in 0..ox.len() {
        fill_row(ox, i, oy, delta, m.row_mut(i));
    }
    Ok(m)
}

/// Write the compatibility bits of row `i` into `out`.
pub(crate) fn fill_row(ox: &OrbitSample, i: usize, oy: &OrbitSample, delta: f64, out: &mut [u64]) {
    let fx = ox.features();
    let fy = oy.features();
    for (w, word) in out.iter_mut().enumerate() {
        let lo = w * 64;
        let hi = (lo + 64).min(oy.len());
        let mut bits = 0u64;
        for j in lo..hi {
            bits |= ((fx.dist(i, fy, j) < delta) as u64) << (j - lo);
        }
        *word = bits;
    }
}

/// Bit-parallel longest-chain state over the columns of a boolean matrix.
/// After feeding rows `0..r`, the number of zero bits of `v` among the first
/// `c` columns is the size of a largest order-preserving matching inside
/// the `r x c` leading block.
pub(crate) struct ChainState {
    v: Vec<u64>,
    cols: usize,
}

impl ChainState {
    pub(crate) fn new(cols: usize) -> Self {
        let words = cols.div_ceil(64);
        let mut v = vec![u64::MAX; words];
        if cols % 64 != 0 {
            v[words - 1] = (1u64 << (cols % 64)) - 1;
        }
        ChainState { v, cols }
    }

    #[inline]
    pub(crate) fn feed(&mut self, row: &[u64]) {
        let mut carry = 0u64;
        for (v, &pm) in self.v.iter_mut().zip(row) {
            let u = *v & pm;
            let (s1, c1) = v.overflowing_add(u);
            let (s2, c2) = s1.overflowing_add(carry);
            carry = (c1 | c2) as u64;
            *v = s2 | (*v & !pm);
        }
        if self.cols % 64 != 0 {
            let last = self.v.len() - 1;
            self.v[last] &= (1u64 << (self.cols % 64)) - 1;
        }
    }

    /// Matching size within the first `c` columns.
    #[inline]
    pub(crate) fn matched(&self, c: usize) -> usize {
        let full = c / 64;
        let mut ones: usize = self.v[..full].iter().map(|w| w.count_ones() as usize).sum();
        if c % 64 != 0 {
            ones += (self.v[full] & ((1u64 << (c % 64)) - 1)).count_ones() as usize;
        }
        c - ones
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.v
    }
}

/// Size of a maximum order-preserving matching supported on `m`.
pub fn max_matching_size(m: &BitMatrix) -> usize {
    let mut st = ChainState::new(m.cols());
    for i in 0..m.rows() {
        st.feed(m.row(i));
    }
    st.matched(m.cols())
}

/// A maximum order-preserving matching supported on the true entries of
/// `m`, by the longest-chain recursion evaluated bit-parallel row by row.
pub fn max_matching(m: &BitMatrix) -> Result<Matching> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(FkError::usage("empty compatibility matrix"));
    }
    let m = if m.rows() != m.cols() { m.padded_square() } else { m.clone() };
    let n = m.rows();
    let words = n.div_ceil(64);
    let mut states = Vec::with_capacity((n + 1) * words);
    let mut st = ChainState::new(n);
    states.extend_from_slice(st.words());
    for i in 0..n {
        st.feed(m.row(i));
        states.extend_from_slice(st.words());
    }
    // L(r, c) = c - ones(state_r restricted to [0, c)).
    let table = |r: usize, c: usize| -> usize {
        let v = &states[r * words..(r + 1) * words];
        let full = c / 64;
        let mut ones: usize = v[..full].iter().map(|w| w.count_ones() as usize).sum();
        if c % 64 != 0 {
            ones += (v[full] & ((1u64 << (c % 64)) - 1)).count_ones() as usize;
        }
        c - ones
    };
    let mut pairs = Vec::new();
    let (mut r, mut c) = (n, n);
    while r > 0 && c > 0 {
        let here = table(r, c);
        if here == 0 {
            break;
        }
        if table(r - 1, c) == here {
            r -= 1;
        } else if table(r, c - 1) == here {
            c -= 1;
        } else {
            debug_assert!(m.get(r - 1, c - 1));
            pairs.push((r - 1, c - 1));
            r -= 1;
            c -= 1;
        }
    }
    pairs.reverse();
    Ok(Matching { pairs, n })
}

/// Exhaustive search over all order-preserving matchings. Test oracle for
/// [`max_matching`]; refuses matrices larger than 14.
pub fn max_matching_bruteforce(m: &BitMatrix) -> Result<Matching> {
    let n = m.rows().max(m.cols());
    if n > 14 {
        return Err(FkError::Refusal(format!("exhaustive matching search needs n <= 14, got {n}")));
    }
    if n == 0 {
        return Err(FkError::usage("empty compatibility matrix"));
    }
    let m = m.padded_square();
    let mut best = Vec::new();
    let mut cur = Vec::new();
    search(&m, 0, 0, &mut cur, &mut best);
    Ok(Matching { pairs: best, n })
}

fn search(m: &BitMatrix, i: usize, j: usize, cur: &mut Vec<(usize, usize)>, best: &mut Vec<(usize, usize)>) {
    let n = m.rows();
    if cur.len() > best.len() {
        *best = cur.clone();
    }
    if i == n || j == n {
        return;
    }
    // Every remaining row can add at most one pair.
    if cur.len() + (n - i).min(n - j) <= best.len() {
        return;
    }
    for k in j..n {
        if m.get(i, k) {
            cur.push((i, k));
            search(m, i + 1, k + 1, cur, best);
            cur.pop();
        }
    }
    search(m, i + 1, j, cur, best);
}

fn map_orbits(system: &System, x: &PhasePoint, y: &PhasePoint, n: usize) -> Result<(OrbitSample, OrbitSample)> {
    if n == 0 {
        return Err(FkError::usage("horizon must be at least 1"));
    }
    Ok((system.sample_orbit(x, n as f64, 1.0)?, system.sample_orbit(y, n as f64, 1.0)?))
}

/// `1 - |max matching| / n` on the length-`n` orbit windows. Flows are
/// queried through their time-1 map.
pub fn fbar_gap(system: &System, x: &PhasePoint, y: &PhasePoint, n: usize, delta: f64) -> Result<f64> {
    let (ox, oy) = map_orbits(system, x, y, n)?;
    Ok(prefix_gaps(&ox, &oy, delta, &[n])?[0])
}

/// Gaps for every horizon in `horizons` (each at most the orbit length),
/// from a single pass over the compatibility rows.
pub(crate) fn prefix_gaps(ox: &OrbitSample, oy: &OrbitSample, delta: f64, horizons: &[usize]) -> Result<Vec<f64>> {
    ox.check_compatible(oy)?;
    if !(delta > 0.0) {
        return Err(FkError::usage(format!("delta must be positive, got {delta}")));
    }
    let n = ox.len().min(oy.len());
    if let Some(&h) = horizons.iter().find(|&&h| h == 0 || h > n) {
        return Err(FkError::usage(format!("horizon {h} outside [1, {n}]")));
    }
    let mut want: Vec<(usize, usize)> = horizons.iter().copied().enumerate().map(|(k, h)| (h, k)).collect();
    want.sort_unstable();
    let mut out = vec![0.0; horizons.len()];
    let mut st = ChainState::new(n);
    let mut row = vec![0u64; n.div_ceil(64)];
    let mut next = 0;
    let oy = oy.prefix(n);
    for i in 0..n {
        if next == want.len() {
            break;
        }
        fill_row(ox, i, &oy, delta, &mut row);
        st.feed(&row);
        while next < want.len() && want[next].0 == i + 1 {
            let h = i + 1;
            out[want[next].1] = 1.0 - st.matched(h) as f64 / h as f64;
            next += 1;
        }
    }
    Ok(out)
}

/// Per-horizon discrete gaps with the tail surrogate for the upper limit.
pub fn fbar_limsup(
    system: &System,
    x: &PhasePoint,
    y: &PhasePoint,
    delta: f64,
    horizons: &[usize],
) -> Result<GapEstimate> {
    check_horizons(horizons.iter().map(|&h| h as f64))?;
    let max = *horizons.last().expect("checked");
    let (ox, oy) = map_orbits(system, x, y, max)?;
    let gaps = prefix_gaps(&ox, &oy, delta, horizons)?;
    GapEstimate::new(horizons.iter().map(|&h| h as f64).collect(), gaps)
}

pub(crate) fn check_horizons(h: impl Iterator<Item = f64>) -> Result<()> {
    let h: Vec<f64> = h.collect();
    if h.len() < 4 {
        return Err(FkError::usage(format!("need at least 4 horizons, got {}", h.len())));
    }
    if h.windows(2).any(|w| w[1] <= w[0]) || h[0] <= 0.0 {
        return Err(FkError::usage("horizons must be positive and increasing"));
    }
    Ok(())
}

/// `inf { delta > 0 : tail_sup(delta) <= delta }` by bisection over
/// `(0, diameter]`; returns the bracket midpoint once its width is at most
/// `tol`.
pub fn rho_fk(system: &System, x: &PhasePoint, y: &PhasePoint, horizons: &[usize], tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(FkError::usage(format!("tol must be positive, got {tol}")));
    }
    check_horizons(horizons.iter().map(|&h| h as f64))?;
    let max = *horizons.last().expect("checked");
    let (ox, oy) = map_orbits(system, x, y, max)?;
    let (mut lo, mut hi) = (0.0, system.diameter() + 1e-9);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let gaps = prefix_gaps(&ox, &oy, mid, horizons)?;
        let est = GapEstimate::new(horizons.iter().map(|&h| h as f64).collect(), gaps)?;
        if est.tail_sup <= mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::systems::SystemSpec;

    fn checker() -> BitMatrix {
        BitMatrix::from_fn(4, 4, |i, j| (i + j) % 2 == 1)
    }

    #[test]
    fn small_examples() {
        let all = BitMatrix::from_fn(4, 4, |_, _| true);
        assert_eq!(max_matching(&all).unwrap().len(), 4);
        assert_eq!(max_matching(&checker()).unwrap().len(), 3);
        assert_eq!(max_matching_bruteforce(&checker()).unwrap().len(), 3);
        assert_eq!(max_matching(&BitMatrix::new(4, 4)).unwrap().len(), 0);
        assert!(max_matching(&BitMatrix::new(0, 0)).is_err());
        let mut one = BitMatrix::new(5, 5);
        one.set(3, 1, true);
        assert_eq!(max_matching_bruteforce(&one).unwrap().pairs, vec![(3, 1)]);
        assert!(matches!(max_matching_bruteforce(&BitMatrix::new(15, 15)), Err(FkError::Refusal(_))));
    }

    #[test]
    fn traceback_is_a_valid_maximum_matching() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..200 {
            let n = 1 + rng.below(90) as usize;
            let p = rng.next_f64();
            let m = BitMatrix::from_fn(n, n, |_, _| rng.bool(p));
            let mt = max_matching(&m).unwrap();
            mt.validate(Some(&m)).unwrap();
            assert_eq!(mt.len(), max_matching_size(&m));
        }
    }

    #[test]
    fn shift_words_checkerboard() {
        let s = System::new(&SystemSpec::parse("shift:arity=2,window=4,metric=discrete").unwrap()).unwrap();
        let x = s.parse_point("w0101").unwrap();
        let y = s.parse_point("w1010").unwrap();
        let ox = s.sample_orbit(&x, 4.0, 1.0).unwrap();
        let oy = s.sample_orbit(&y, 4.0, 1.0).unwrap();
        assert_eq!(compat_matrix(&ox, &oy, 0.5).unwrap(), checker());
        assert_eq!(fbar_gap(&s, &x, &y, 4, 0.5).unwrap(), 0.25);
        assert_eq!(fbar_gap(&s, &x, &y, 4, 0.6).unwrap(), 0.25);
        assert_eq!(fbar_gap(&s, &x, &x, 4, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn identity_fixed_points() {
        let s = System::new(&SystemSpec::Identity).unwrap();
        let (x, y) = (PhasePoint::Circle(0.1), PhasePoint::Circle(0.35));
        let r = rho_fk(&s, &x, &y, &[10, 20, 30, 40], 1e-3).unwrap();
        assert!((r - 0.25).abs() <= 1e-3);
        assert!(rho_fk(&s, &x, &x, &[10, 20, 30, 40], 1e-3).unwrap() <= 1e-3);
    }

    #[test]
    fn prefix_gaps_agree_with_separate_runs() {
        let s = System::new(&SystemSpec::golden_rotation()).unwrap();
        let (x, y) = (PhasePoint::Circle(0.0), PhasePoint::Circle(0.37));
        let est = fbar_limsup(&s, &x, &y, 0.05, &[50, 100, 150, 200]).unwrap();
        for (h, g) in est.horizons.iter().zip(&est.gaps) {
            assert_eq!(*g, fbar_gap(&s, &x, &y, *h as usize, 0.05).unwrap());
        }
    }
}
