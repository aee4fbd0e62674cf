use std::collections::HashMap;

use super::partition::{dyadic_key, Partition};
use crate::error::{FkError, Result};
use crate::measures::EmpiricalMeasure;
use crate::systems::System;

/// Finest dyadic level tried.
pub const MAX_LEVEL: u32 = 16;

/// Samples a dyadic box needs before it may certify a cell.
pub const MIN_BOX_SAMPLES: usize = 3;

/// An `eps`-essentially open partition close to `p` on the sample.
///
/// Each cell `P_i` is replaced by the union `Q_i` of the dyadic boxes whose
/// samples (at least three) all lie in `P_i`; whatever remains forms one
/// extra cell outside the basis. The coarsest level with
/// `mu(P_i \ Q_i) < eps / (4 n)` for every cell is used, so the extra cell
/// has mass below `eps / 4` and `d_mu(P, Q) < eps / 4` on the sample. A
/// partition that is already `eps`-essentially open is returned unchanged.
pub fn essentialize(system: &System, p: &Partition, eps: f64, sample: &EmpiricalMeasure) -> Result<Partition> {
    if !(eps > 0.0) {
        return Err(FkError::usage(format!("eps must be positive, got {eps}")));
    }
    if p.is_essentially_open(system, eps, sample)? {
        return Ok(p.clone());
    }
    let labels = p.labels(system, &sample.atoms)?;
    let coords: Vec<Vec<f64>> = sample.atoms.iter().map(|a| system.coords(a)).collect();
    let n = p.len();
    let m = sample.len();
    let target = eps / (4.0 * n as f64);
    let mut best: Option<(u32, f64)> = None;
    for level in 1..=MAX_LEVEL {
        let mut boxes: HashMap<Vec<u32>, (usize, Option<usize>)> = HashMap::new();
        for (c, &l) in coords.iter().zip(&labels) {
            let e = boxes.entry(dyadic_key(c, level)).or_insert((0, Some(l)));
            e.0 += 1;
            if e.1 != Some(l) {
                e.1 = None;
            }
        }
        let mut kept = vec![0usize; n];
        for &(count, label) in boxes.values() {
            if let (true, Some(l)) = (count >= MIN_BOX_SAMPLES, label) {
                kept[l] += count;
            }
        }
        let mut per_cell = vec![0usize; n];
        for &l in &labels {
            per_cell[l] += 1;
        }
        let worst = (0..n).map(|i| (per_cell[i] - kept[i]) as f64 / m as f64).fold(0.0, f64::max);
        if best.is_none_or(|(_, w)| worst < w) {
            best = Some((level, worst));
        }
        if worst < target {
            let map: HashMap<Vec<u32>, usize> = boxes
                .into_iter()
                .filter_map(|(k, (count, label))| (count >= MIN_BOX_SAMPLES).then_some(label).flatten().map(|l| (k, l)))
                .collect();
            return Ok(Partition::dyadic(format!("essential({}, eps={eps})", p.name), p.dim, level, map, n));
        }
    }
    let (level, worst) = best.expect("levels tried");
    // Halving the leftover takes one more level, which multiplies the box
    // count by 2^dim.
    let levels = (worst / target).log2().ceil().max(1.0);
    let need = (m as f64 * 2f64.powf(levels * p.dim as f64)).ceil();
    Err(FkError::Refusal(format!(
        "{m} samples leave mass {worst:.4} of some cell uncertified (best dyadic level {level}); \
         certifying eps / (4n) = {target:.4} needs about {need} samples"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::{d_mu, grid_partition, CoordBox};
    use crate::systems::{PhasePoint, SystemSpec};

    fn circle_sample(s: &System, m: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::from_points(s, (0..m).map(|k| PhasePoint::Circle((k as f64 + 0.5) / m as f64)).collect(), 1.0)
            .unwrap()
    }

    #[test]
    fn open_grid_is_kept() {
        let s = System::new(&SystemSpec::golden_rotation()).unwrap();
        let sample = circle_sample(&s, 1000);
        let p = grid_partition(&s, 4).unwrap();
        assert_eq!(essentialize(&s, &p, 0.1, &sample).unwrap(), p);
    }

    #[test]
    fn fat_boundary_anomaly() {
        let s = System::new(&SystemSpec::golden_rotation()).unwrap();
        let sample = circle_sample(&s, 16_000);
        let b = |lo: f64, hi: f64| CoordBox { lo: vec![lo], hi: vec![hi] };
        // Cell 1 owns a comb of thin slivers inside cell 0's half; neither
        // cell counts as a basis set.
        let mut c0 = Vec::new();
        let mut c1 = vec![b(0.5, 1.0)];
        for q in 0..25 {
            let x = q as f64 / 50.0;
            c0.push(b(x, x + 0.016));
            c1.push(b(x + 0.016, x + 0.02));
        }
        let mut p = Partition::from_boxes("comb", 1, vec![c0, c1], false).unwrap();
        p.set_open(0, false);
        p.set_open(1, false);
        let eps = 0.2;
        assert!(!p.is_essentially_open(&s, eps, &sample).unwrap());
        let e = essentialize(&s, &p, eps, &sample).unwrap();
        assert!(e.is_essentially_open(&s, eps, &sample).unwrap());
        let leftover = e.masses(&s, &sample).unwrap()[2];
        assert!(leftover < eps / 4.0 && leftover > 0.0, "{leftover}");
        assert!(d_mu(&s, &p, &e, &sample).unwrap() < eps);
    }

    #[test]
    fn sparse_sample_is_refused() {
        let s = System::new(&SystemSpec::golden_rotation()).unwrap();
        let sample = circle_sample(&s, 20);
        let b = |lo: f64, hi: f64| CoordBox { lo: vec![lo], hi: vec![hi] };
        let mut p = Partition::from_boxes("p", 1, vec![vec![b(0.0, 0.33)], vec![b(0.33, 1.0)]], false).unwrap();
        p.set_open(0, false);
        p.set_open(1, false);
        match essentialize(&s, &p, 1e-3, &sample) {
            Err(FkError::Refusal(msg)) => assert!(msg.contains("samples")),
            other => panic!("{other:?}"),
        }
    }
}
