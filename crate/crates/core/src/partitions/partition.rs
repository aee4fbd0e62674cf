use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::measures::EmpiricalMeasure;
use crate::rng::SplitMix64;
use crate::systems::{PhasePoint, System};

/// Half-open box `[lo_d, hi_d)` in coordinate space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoordBox {
    pub fn contains(&self, c: &[f64]) -> bool {
        self.lo.iter().zip(&self.hi).zip(c).all(|((&lo, &hi), &x)| x >= lo && x < hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    /// `k` equal bins per coordinate; the first coordinate varies fastest.
    Grid { k: usize },
    /// Unions of boxes, with an optional cell holding everything else.
    Boxes { cells: Vec<Vec<CoordBox>>, rest: Option<usize> },
    /// Dyadic boxes of side `2^-level` assigned to cells; every other box
    /// belongs to `rest`.
    Dyadic { level: u32, map: HashMap<Vec<u32>, usize>, rest: usize },
}

/// A finite labeled partition of the coordinate space of a system.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub name: String,
    /// Number of coordinates the cells are described in.
    pub dim: usize,
    kind: Kind,
    /// Whether each cell belongs to the basis of open sets.
    open: Vec<bool>,
}

/// Equal-bin grid: `k` cells on the circle, `k x k` on the torus and on
/// flows (base coordinate times normalized height).
pub fn grid_partition(system: &System, k: usize) -> Result<Partition> {
    if k < 2 {
        return Err(FkError::config("k", format!("grid needs at least 2 bins, got {k}")));
    }
    let dim = system.coord_dim();
    if !system.is_flow() && system.is_symbolic() {
        return Err(FkError::usage(format!("no grid partition on the symbol space of {}", system.spec())));
    }
    let cells = k.checked_pow(dim as u32).filter(|&c| c <= 1 << 20).ok_or_else(|| FkError::config("k", "too many cells"))?;
    Ok(Partition { name: format!("grid:k={k}"), dim, kind: Kind::Grid { k }, open: vec![true; cells] })
}

/// The `grid:k` partition with every interior cut moved by a uniform
/// offset in `(-jitter, jitter)`. Cells keep the grid's labels and are
/// flagged as outside the basis.
pub fn perturbed_grid(system: &System, k: usize, jitter: f64, rng: &mut SplitMix64) -> Result<Partition> {
    let grid = grid_partition(system, k)?;
    if !(jitter >= 0.0 && jitter < 0.5 / k as f64) {
        return Err(FkError::config("perturb", format!("jitter must lie in [0, 1/(2k)), got {jitter}")));
    }
    let dim = grid.dim;
    let cuts: Vec<Vec<f64>> = (0..dim)
        .map(|_| {
            (0..=k)
                .map(|i| {
                    let c = i as f64 / k as f64;
                    if i == 0 || i == k {
                        c
                    } else {
                        c + jitter * (2.0 * rng.next_f64() - 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let cells = (0..grid.len())
        .map(|label| {
            let (mut lo, mut hi) = (Vec::with_capacity(dim), Vec::with_capacity(dim));
            let mut rest = label;
            for c in &cuts {
                lo.push(c[rest % k]);
                hi.push(c[rest % k + 1]);
                rest /= k;
            }
            vec![CoordBox { lo, hi }]
        })
        .collect();
    let mut p = Partition::from_boxes(&format!("perturbed:k={k},jitter={jitter}"), dim, cells, false)?;
    p.open.iter_mut().for_each(|o| *o = false);
    Ok(p)
}

impl Partition {
    /// The partition with a single cell.
    pub fn trivial(dim: usize) -> Partition {
        Partition {
            name: "trivial".into(),
            dim,
            kind: Kind::Boxes { cells: vec![Vec::new()], rest: Some(0) },
            open: vec![true],
        }
    }

    /// Cells given as unions of boxes. With `rest`, an extra last cell
    /// (flagged not open) takes every point outside the boxes.
    pub fn from_boxes(name: &str, dim: usize, cells: Vec<Vec<CoordBox>>, rest: bool) -> Result<Partition> {
        if cells.is_empty() {
            return Err(FkError::usage("a partition needs at least one cell"));
        }
        for b in cells.iter().flatten() {
            if b.lo.len() != dim || b.hi.len() != dim {
                return Err(FkError::usage(format!("box {b:?} does not have {dim} coordinates")));
            }
            if b.lo.iter().zip(&b.hi).any(|(lo, hi)| !(lo < hi)) {
                return Err(FkError::usage(format!("box {b:?} is empty")));
            }
        }
        let n = cells.len();
        let mut open = vec![true; n];
        let rest = rest.then(|| {
            open.push(false);
            n
        });
        Ok(Partition { name: name.into(), dim, kind: Kind::Boxes { cells, rest }, open })
    }

    pub(crate) fn dyadic(name: String, dim: usize, level: u32, map: HashMap<Vec<u32>, usize>, cells: usize) -> Partition {
        let mut open = vec![true; cells];
        open.push(false);
        Partition { name, dim, kind: Kind::Dyadic { level, map, rest: cells }, open }
    }

    /// Parse `grid:k=<k>` or `file:<path>`.
    pub fn parse(system: &System, text: &str) -> Result<Partition> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("grid:") {
            let k = rest
                .strip_prefix("k=")
                .ok_or_else(|| FkError::Parse { column: 6, message: "expected k=<bins>".into() })?;
            let k: usize = k.parse().map_err(|_| FkError::Parse { column: 8, message: format!("bad bin count {k:?}") })?;
            return grid_partition(system, k);
        }
        if let Some(path) = text.strip_prefix("file:") {
            let body = std::fs::read_to_string(path)
                .map_err(|e| FkError::usage(format!("cannot read partition file {path}: {e}")))?;
            let mut p = Partition::parse_cells(&body, system.coord_dim())?;
            p.name = text.to_string();
            return Ok(p);
        }
        Err(FkError::Parse { column: 1, message: format!("unknown partition {text:?}; expected grid:k=<k> or file:<path>") })
    }

    /// Parse lines `cell <label> box <lo1> <hi1> [<lo2> <hi2>]`; repeated
    /// labels add boxes to the same cell. Blank lines and `#` comments are
    /// skipped. Labels must be `0..n`.
    pub fn parse_cells(body: &str, dim: usize) -> Result<Partition> {
        let mut cells: Vec<Vec<CoordBox>> = Vec::new();
        for (ln, line) in body.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let mut col = 1;
            let mut words = Vec::new();
            for w in content.split(' ') {
                if !w.is_empty() {
                    words.push((col, w));
                }
                col += w.len() + 1;
            }
            let err = |column: usize, msg: String| FkError::Parse { column, message: format!("line {}: {msg}", ln + 1) };
            if words.len() != 3 + 2 * dim || words[0].1 != "cell" || words[2].1 != "box" {
                return Err(err(1, format!("expected `cell <label> box` and {dim} lo/hi pairs")));
            }
            let label: usize = words[1].1.parse().map_err(|_| err(words[1].0, format!("bad label {:?}", words[1].1)))?;
            let mut nums = Vec::with_capacity(2 * dim);
            for &(c, w) in &words[3..] {
                nums.push(w.parse::<f64>().map_err(|_| err(c, format!("bad number {w:?}")))?);
            }
            let b = CoordBox {
                lo: nums.iter().step_by(2).copied().collect(),
                hi: nums.iter().skip(1).step_by(2).copied().collect(),
            };
            if b.lo.iter().zip(&b.hi).any(|(lo, hi)| !(lo < hi)) {
                return Err(err(words[3].0, "box has lo >= hi".into()));
            }
            if cells.len() <= label {
                cells.resize(label + 1, Vec::new());
            }
            cells[label].push(b);
        }
        if let Some(l) = cells.iter().position(|c| c.is_empty()) {
            return Err(FkError::Parse { column: 1, message: format!("label {l} has no boxes; labels must be 0..n") });
        }
        Partition::from_boxes("file", dim, cells, false)
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    pub fn is_open(&self, label: usize) -> bool {
        self.open[label]
    }

    /// Flag whether cell `label` belongs to the basis of open sets.
    pub fn set_open(&mut self, label: usize, open: bool) {
        self.open[label] = open;
    }

    /// Label of the cell holding the point with coordinates `c`. Fails
    /// when no cell or more than one cell contains it.
    pub fn label_coords(&self, c: &[f64]) -> Result<usize> {
        match &self.kind {
            Kind::Grid { k } => {
                let mut label = 0;
                for &x in c.iter().rev() {
                    let bin = ((x * *k as f64).floor().max(0.0) as usize).min(k - 1);
                    label = label * k + bin;
                }
                Ok(label)
            }
            Kind::Boxes { cells, rest } => {
                let mut found = None;
                for (l, boxes) in cells.iter().enumerate() {
                    if boxes.iter().any(|b| b.contains(c)) {
                        if let Some(prev) = found {
                            return Err(FkError::usage(format!("cells {prev} and {l} overlap at {c:?}")));
                        }
                        found = Some(l);
                    }
                }
                found.or(*rest).ok_or_else(|| FkError::usage(format!("no cell contains {c:?}")))
            }
            Kind::Dyadic { level, map, rest } => {
                let key = dyadic_key(c, *level);
                Ok(map.get(&key).copied().unwrap_or(*rest))
            }
        }
    }

    pub fn label(&self, system: &System, p: &PhasePoint) -> Result<usize> {
        self.label_coords(&system.coords(p))
    }

    pub fn labels(&self, system: &System, points: &[PhasePoint]) -> Result<Vec<usize>> {
        if system.coord_dim() != self.dim {
            return Err(FkError::usage(format!(
                "partition {} has {} coordinates, the system has {}",
                self.name,
                self.dim,
                system.coord_dim()
            )));
        }
        points.iter().map(|p| self.label(system, p)).collect()
    }

    /// Sample mass of each cell.
    pub fn masses(&self, system: &System, sample: &EmpiricalMeasure) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        for l in self.labels(system, &sample.atoms)? {
            out[l] += sample.weight();
        }
        Ok(out)
    }

    /// At most one cell outside the basis, and that cell of sample mass
    /// below `eps`.
    pub fn is_essentially_open(&self, system: &System, eps: f64, sample: &EmpiricalMeasure) -> Result<bool> {
        let closed: Vec<usize> = (0..self.len()).filter(|&l| !self.open[l]).collect();
        match closed.as_slice() {
            [] => Ok(true),
            [l] => Ok(self.masses(system, sample)?[*l] < eps),
            _ => Ok(false),
        }
    }
}

pub(crate) fn dyadic_key(c: &[f64], level: u32) -> Vec<u32> {
    let side = (1u64 << level) as f64;
    c.iter().map(|&x| ((x * side).floor().max(0.0) as u64).min((1u64 << level) - 1) as u32).collect()
}
