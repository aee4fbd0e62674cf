use serde::{Deserialize, Serialize};

use super::empirical::EmpiricalMeasure;
use crate::error::{FkError, Result};

/// Largest atom count accepted by the coupling solver.
pub const MAX_ATOMS: usize = 5000;

/// Largest common refinement `lcm(m, n)` accepted by the coupling solver.
pub const MAX_REFINEMENT: usize = 20_000;

/// Transport plan restricted to pairs within `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub eps: f64,
    /// `(i, j, mass)` with atom `i` of the first and `j` of the second measure.
    pub pairs: Vec<(usize, usize, f64)>,
    pub mass: f64,
}

/// A set `B` of atoms of the first measure with `mu(B) > nu(B^eps) + eps`,
/// where `B^eps` is the closed `eps`-hull.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolatingSet {
    pub eps: f64,
    pub atoms: Vec<usize>,
    pub mu_mass: f64,
    pub nu_hull_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    Coupling(Coupling),
    Violation(ViolatingSet),
}

/// Answer of [`coupling_feasible`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingCheck {
    pub feasible: bool,
    pub certificate: Certificate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProkhorovResult {
    pub value: f64,
    /// Coupling placing mass at least `1 - value` on pairs within `value`.
    pub coupling: Coupling,
    /// Witness that every smaller candidate fails, at the largest
    /// infeasible candidate (absent when `value = 0`).
    pub witness: Option<ViolatingSet>,
    /// The hull is closed, `d <= eps`.
    pub hull: String,
}

/// Maximum bipartite matching on the common refinement of two uniform
/// measures: `L = lcm(m, n)` copies on each side, copy `u` of the left
/// side standing for atom `u / (L / m)`.
struct Refined<'a> {
    mu: &'a EmpiricalMeasure,
    nu: &'a EmpiricalMeasure,
    l: usize,
    cm: usize,
    cn: usize,
    words: usize,
    /// Per left atom, the right atoms within `cap`, sorted by distance.
    near: Vec<Vec<(u32, f64)>>,
    cap: f64,
}

/// Initial radius of the stored neighbourhoods.
const INITIAL_CAP: f64 = 0.125;

impl<'a> Refined<'a> {
    fn new(mu: &'a EmpiricalMeasure, nu: &'a EmpiricalMeasure) -> Result<Self> {
        let (m, n) = (mu.len(), nu.len());
        if m == 0 || n == 0 {
            return Err(FkError::usage("empty measure"));
        }
        if m > MAX_ATOMS || n > MAX_ATOMS {
            return Err(FkError::Refusal(format!(
                "{m} and {n} atoms exceed the limit of {MAX_ATOMS}; subsample the orbits (larger step or shorter horizon)"
            )));
        }
        if !mu.features().same_kind(nu.features()) {
            return Err(FkError::usage("measures live on different spaces"));
        }
        let l = lcm(m, n);
        if l > MAX_REFINEMENT {
            return Err(FkError::Refusal(format!(
                "common refinement lcm({m}, {n}) = {l} exceeds {MAX_REFINEMENT}; use equal or commensurate atom counts"
            )));
        }
        let mut r = Refined { mu, nu, l, cm: l / m, cn: l / n, words: l.div_ceil(64), near: Vec::new(), cap: -1.0 };
        r.ensure(INITIAL_CAP);
        Ok(r)
    }

    /// Make the stored neighbourhoods cover radius `eps`.
    fn ensure(&mut self, eps: f64) {
        if eps <= self.cap {
            return;
        }
        self.cap = eps.max(2.0 * self.cap);
        let (f, g) = (self.mu.features(), self.nu.features());
        self.near = (0..self.m())
            .map(|i| {
                let mut row: Vec<(u32, f64)> = (0..self.n())
                    .filter_map(|j| {
                        let d = f.dist(i, g, j);
                        (d <= self.cap).then_some((j as u32, d))
                    })
                    .collect();
                row.sort_by(|a, b| a.1.total_cmp(&b.1));
                row
            })
            .collect();
    }

    fn within(&self, i: usize, eps: f64) -> impl Iterator<Item = usize> + '_ {
        debug_assert!(eps <= self.cap);
        self.near[i].iter().take_while(move |e| e.1 <= eps).map(|e| e.0 as usize)
    }

    /// Stored distances in the open interval `(lo, hi)`.
    fn distances_between(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out: Vec<f64> =
            self.near.iter().flatten().map(|e| e.1).filter(|&d| d > lo && d < hi).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn m(&self) -> usize {
        self.mu.len()
    }

    fn n(&self) -> usize {
        self.nu.len()
    }

    /// Right-side adjacency bitset for every left atom.
    fn adjacency(&self, eps: f64) -> Vec<u64> {
        let m = self.m();
        let mut adj = vec![0u64; m * self.words];
        for i in 0..m {
            let row = &mut adj[i * self.words..(i + 1) * self.words];
            for j in self.within(i, eps) {
                for v in j * self.cn..(j + 1) * self.cn {
                    row[v / 64] |= 1 << (v % 64);
                }
            }
        }
        adj
    }

    /// Maximum matching with edges `d <= eps`, starting from `warm` (a
    /// matching valid for a smaller `eps`).
    fn max_matching(&self, eps: f64, warm: Option<&[usize]>) -> Vec<usize> {
        let adj = self.adjacency(eps);
        let hk = Hk { adj: &adj, words: self.words, cm: self.cm, l: self.l };
        hk.run(warm)
    }
}

const FREE: usize = usize::MAX;

struct Hk<'a> {
    adj: &'a [u64],
    words: usize,
    cm: usize,
    l: usize,
}

impl Hk<'_> {
    #[inline]
    fn row(&self, u: usize) -> &[u64] {
        let a = u / self.cm;
        &self.adj[a * self.words..(a + 1) * self.words]
    }

    /// Returns `mate_left` (right copy matched to each left copy, or FREE).
    fn run(&self, warm: Option<&[usize]>) -> Vec<usize> {
        let l = self.l;
        let mut mate_l = vec![FREE; l];
        let mut mate_r = vec![FREE; l];
        if let Some(w) = warm {
            for (u, &v) in w.iter().enumerate() {
                if v != FREE {
                    mate_l[u] = v;
                    mate_r[v] = u;
                }
            }
        }
        // Greedy pass over what is left.
        let mut free_r = vec![u64::MAX; self.words];
        if l % 64 != 0 {
            free_r[self.words - 1] = (1u64 << (l % 64)) - 1;
        }
        for &v in mate_l.iter().filter(|&&v| v != FREE) {
            free_r[v / 64] &= !(1 << (v % 64));
        }
        for u in 0..l {
            if mate_l[u] != FREE {
                continue;
            }
            if let Some(v) = first_common(self.row(u), &free_r) {
                mate_l[u] = v;
                mate_r[v] = u;
                free_r[v / 64] &= !(1 << (v % 64));
            }
        }
        let mut dist = vec![u32::MAX; l];
        let mut queue = Vec::with_capacity(l);
        loop {
            // Layer the left side by alternating BFS from free left copies.
            queue.clear();
            for u in 0..l {
                if mate_l[u] == FREE {
                    dist[u] = 0;
                    queue.push(u);
                } else {
                    dist[u] = u32::MAX;
                }
            }
            let mut unseen = vec![u64::MAX; self.words];
            let mut found = false;
            let mut head = 0;
            while head < queue.len() {
                let u = queue[head];
                head += 1;
                let row = self.row(u);
                for w in 0..self.words {
                    let mut bits = row[w] & unseen[w];
                    while bits != 0 {
                        let v = w * 64 + bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        unseen[w] &= !(1 << (v % 64));
                        let u2 = mate_r[v];
                        if u2 == FREE {
                            found = true;
                        } else if dist[u2] == u32::MAX {
                            dist[u2] = dist[u] + 1;
                            queue.push(u2);
                        }
                    }
                }
            }
            if !found {
                break;
            }
            // Vertex-disjoint shortest augmenting paths.
            let mut unused = vec![u64::MAX; self.words];
            let mut augmented = 0;
            for u in 0..l {
                if mate_l[u] == FREE && self.augment(u, &mut dist, &mut unused, &mut mate_l, &mut mate_r) {
                    augmented += 1;
                }
            }
            if augmented == 0 {
                break;
            }
        }
        mate_l
    }

    fn augment(
        &self,
        start: usize,
        dist: &mut [u32],
        unused: &mut [u64],
        mate_l: &mut [usize],
        mate_r: &mut [usize],
    ) -> bool {
        // Iterative depth-first search along the BFS layers. Each frame
        // holds its left vertex, current word and the bits of that word it
        // has not examined yet. A right vertex is consumed only when the
        // search actually enters it.
        let mut stack: Vec<(usize, usize, u64)> = vec![(start, 0, self.row(start)[0])];
        let mut path: Vec<usize> = Vec::new();
        while let Some(frame) = stack.last_mut() {
            let u = frame.0;
            let row = self.row(u);
            let mut next = None;
            loop {
                let bits = frame.2 & unused[frame.1];
                if bits == 0 {
                    frame.1 += 1;
                    if frame.1 >= self.words {
                        break;
                    }
                    frame.2 = row[frame.1];
                    continue;
                }
                let v = frame.1 * 64 + bits.trailing_zeros() as usize;
                frame.2 &= !(1 << (v % 64));
                let u2 = mate_r[v];
                if u2 == FREE || dist[u2] == dist[u] + 1 {
                    unused[v / 64] &= !(1 << (v % 64));
                    next = Some((v, u2));
                    break;
                }
            }
            match next {
                Some((v, FREE)) => {
                    path.push(v);
                    for (k, &(pu, _, _)) in stack.iter().enumerate() {
                        let pv = path[k];
                        mate_l[pu] = pv;
                        mate_r[pv] = pu;
                    }
                    return true;
                }
                Some((v, u2)) => {
                    path.push(v);
                    stack.push((u2, 0, self.row(u2)[0]));
                }
                None => {
                    dist[u] = u32::MAX;
                    stack.pop();
                    path.pop();
                }
            }
        }
        false
    }
}

fn first_common(a: &[u64], b: &[u64]) -> Option<usize> {
    a.iter().zip(b).enumerate().find_map(|(w, (x, y))| {
        let c = x & y;
        (c != 0).then(|| w * 64 + c.trailing_zeros() as usize)
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

impl Refined<'_> {
    fn coupling(&self, eps: f64, mate_l: &[usize]) -> Coupling {
        let (m, n) = (self.m(), self.n());
        let mut mass = vec![0usize; m * n];
        for (u, &v) in mate_l.iter().enumerate() {
            if v != FREE {
                mass[(u / self.cm) * n + v / self.cn] += 1;
            }
        }
        let unit = 1.0 / self.l as f64;
        let pairs: Vec<(usize, usize, f64)> = mass
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k / n, k % n, c as f64 * unit))
            .collect();
        let total = mate_l.iter().filter(|&&v| v != FREE).count() as f64 * unit;
        Coupling { eps, pairs, mass: total }
    }

    /// Atoms reachable from unmatched left copies by alternating paths.
    fn violating_set(&self, eps: f64, mate_l: &[usize]) -> ViolatingSet {
        let adj = self.adjacency(eps);
        let hk = Hk { adj: &adj, words: self.words, cm: self.cm, l: self.l };
        let mut mate_r = vec![FREE; self.l];
        for (u, &v) in mate_l.iter().enumerate() {
            if v != FREE {
                mate_r[v] = u;
            }
        }
        let mut seen_l = vec![false; self.l];
        let mut unseen_r = vec![u64::MAX; self.words];
        let mut queue: Vec<usize> = (0..self.l).filter(|&u| mate_l[u] == FREE).collect();
        for &u in &queue {
            seen_l[u] = true;
        }
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            let row = hk.row(u);
            for w in 0..self.words {
                let mut bits = row[w] & unseen_r[w];
                while bits != 0 {
                    let v = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    unseen_r[w] &= !(1 << (v % 64));
                    let u2 = mate_r[v];
                    if u2 != FREE && !seen_l[u2] {
                        seen_l[u2] = true;
                        queue.push(u2);
                    }
                }
            }
        }
        let mut atoms: Vec<usize> = (0..self.m()).filter(|&a| (0..self.cm).any(|c| seen_l[a * self.cm + c])).collect();
        atoms.dedup();
        let (mu_mass, nu_hull_mass) = self.hull_masses(eps, &atoms);
        ViolatingSet { eps, atoms, mu_mass, nu_hull_mass }
    }

    fn hull_masses(&self, eps: f64, atoms: &[usize]) -> (f64, f64) {
        let mut hit = vec![false; self.n()];
        for &i in atoms {
            for j in self.within(i, eps) {
                hit[j] = true;
            }
        }
        let hull = hit.iter().filter(|&&h| h).count();
        (atoms.len() as f64 / self.m() as f64, hull as f64 / self.n() as f64)
    }

    /// `L - K <= eps L` for a matching of size `K`.
    fn accepts(&self, eps: f64, matched: usize) -> bool {
        ((self.l - matched) as f64) <= eps * self.l as f64
    }
}

fn matched(mate_l: &[usize]) -> usize {
    mate_l.iter().filter(|&&v| v != FREE).count()
}

/// Whether some coupling of `mu` and `nu` puts mass at least `1 - eps` on
/// pairs at distance at most `eps`, with the coupling or a violating set
/// as certificate.
pub fn coupling_feasible(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, eps: f64) -> Result<CouplingCheck> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(FkError::usage(format!("eps must lie in (0, 1], got {eps}")));
    }
    let mut r = Refined::new(mu, nu)?;
    r.ensure(eps);
    let mate = r.max_matching(eps, None);
    if r.accepts(eps, matched(&mate)) {
        Ok(CouplingCheck { feasible: true, certificate: Certificate::Coupling(r.coupling(eps, &mate)) })
    } else {
        Ok(CouplingCheck { feasible: false, certificate: Certificate::Violation(r.violating_set(eps, &mate)) })
    }
}

/// Prokhorov distance between two uniform atomic measures, exact on the
/// finite candidate set of atom distances and multiples of `1 / lcm(m, n)`.
pub fn prokhorov(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<ProkhorovResult> {
    let mut r = Refined::new(mu, nu)?;
    let l = r.l;
    // Matchings for a smaller eps stay valid for a larger one, so each
    // evaluation warm-starts from the largest infeasible point seen so far.
    let mut warm: Option<(f64, Vec<usize>)> = None;
    let mut eval = |r: &mut Refined, eps: f64| -> (bool, Vec<usize>) {
        r.ensure(eps);
        let start = warm.as_ref().filter(|(e, _)| *e <= eps).map(|(_, v)| v.as_slice());
        let mate = r.max_matching(eps, start);
        let ok = r.accepts(eps, matched(&mate));
        if !ok && warm.as_ref().is_none_or(|(e, _)| *e < eps) {
            warm = Some((eps, mate.clone()));
        }
        (ok, mate)
    };

    let (ok0, mate0) = eval(&mut r, 0.0);
    if ok0 {
        return Ok(ProkhorovResult { value: 0.0, coupling: r.coupling(0.0, &mate0), witness: None, hull: "closed".into() });
    }
    // Least k with feasibility at k / L (k = L always works): gallop, then
    // bisect.
    let grid = |k: usize| k as f64 / l as f64;
    let (mut lo, mut hi) = (0usize, 1usize);
    let mut hi_mate = loop {
        let (ok, mate) = eval(&mut r, grid(hi));
        if ok {
            break mate;
        }
        lo = hi;
        hi = (2 * hi).min(l);
    };
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (ok, mate) = eval(&mut r, grid(mid));
        if ok {
            hi = mid;
            hi_mate = mate;
        } else {
            lo = mid;
        }
    }
    let (lower, upper) = (grid(hi - 1), grid(hi));
    let mut value = upper;
    let mut best_mate = hi_mate;
    // Between the two grid points only atom distances can be the value.
    let cands = r.distances_between(lower, upper);
    let (mut a, mut b) = (0usize, cands.len());
    while a < b {
        let mid = (a + b) / 2;
        let (ok, mate) = eval(&mut r, cands[mid]);
        if ok {
            value = cands[mid];
            best_mate = mate;
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let coupling = r.coupling(value, &best_mate);
    // Witness at the largest infeasible candidate below the value.
    let below = r.distances_between(lower, value).last().copied().unwrap_or(lower);
    let mate = r.max_matching(below, None);
    let witness = Some(r.violating_set(below, &mate));
    Ok(ProkhorovResult { value, coupling, witness, hull: "closed".into() })
}

impl Coupling {
    /// Coupled mass at least `1 - eps`, every pair within `eps`, and the
    /// marginals dominated by the two measures.
    pub fn validate(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
        let tol = 1e-9;
        if self.mass < 1.0 - self.eps - tol {
            return Err(FkError::Construction(format!("coupled mass {} below 1 - {}", self.mass, self.eps)));
        }
        let mut left = vec![0.0; mu.len()];
        let mut right = vec![0.0; nu.len()];
        let mut total = 0.0;
        for &(i, j, w) in &self.pairs {
            let d = mu.features().dist(i, nu.features(), j);
            if d > self.eps {
                return Err(FkError::Construction(format!("pair ({i}, {j}) at distance {d} > {}", self.eps)));
            }
            left[i] += w;
            right[j] += w;
            total += w;
        }
        if left.iter().any(|&w| w > 1.0 / mu.len() as f64 + tol) || right.iter().any(|&w| w > 1.0 / nu.len() as f64 + tol) {
            return Err(FkError::Construction("coupling exceeds a marginal".into()));
        }
        if (total - self.mass).abs() > tol {
            return Err(FkError::Construction("coupling mass does not add up".into()));
        }
        Ok(())
    }
}

impl ViolatingSet {
    /// `mu(B) > nu(B^eps) + eps`, recomputed from the atoms.
    pub fn validate(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
        let hull = (0..nu.len())
            .filter(|&j| self.atoms.iter().any(|&i| mu.features().dist(i, nu.features(), j) <= self.eps))
            .count() as f64
            / nu.len() as f64;
        let mass = self.atoms.len() as f64 / mu.len() as f64;
        if mass > hull + self.eps + 1e-12 {
            Ok(())
        } else {
            Err(FkError::Construction(format!(
                "set of mass {mass} is covered by hull mass {hull} + {}",
                self.eps
            )))
        }
    }
}
