use super::partition::Partition;
use crate::error::Result;
use crate::measures::EmpiricalMeasure;
use crate::systems::System;

/// Maximum-weight perfect assignment on a square matrix: returns the
/// optimum and `sigma` with row `i` assigned to column `sigma[i]`.
pub fn assignment_max(w: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let n = w.len();
    if n == 0 {
        return (0, Vec::new());
    }
    // Shortest augmenting path Hungarian method on costs -w, 1-based
    // potentials with a virtual column 0.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = -w[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0; n];
    for j in 1..=n {
        sigma[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| w[i][sigma[i]]).sum();
    (total, sigma)
}

/// Overlap counts `O[i][j] = #{atoms in P_i and Q_j}`, padded square.
pub fn overlap_counts(p_labels: &[usize], q_labels: &[usize], np: usize, nq: usize) -> Vec<Vec<i64>> {
    let n = np.max(nq);
    let mut o = vec![vec![0i64; n]; n];
    for (&a, &b) in p_labels.iter().zip(q_labels) {
        o[a][b] += 1;
    }
    o
}

/// `d_mu` with the optimal ordering: `sigma[i]` is the cell of `Q` paired
/// with cell `i` of `P` (indices past a partition's size are empty cells).
pub fn d_mu_assignment(system: &System, p: &Partition, q: &Partition, sample: &EmpiricalMeasure) -> Result<(f64, Vec<usize>)> {
    let lp = p.labels(system, &sample.atoms)?;
    let lq = q.labels(system, &sample.atoms)?;
    let o = overlap_counts(&lp, &lq, p.len(), q.len());
    let (best, sigma) = assignment_max(&o);
    Ok((1.0 - best as f64 / sample.len() as f64, sigma))
}

/// Sample mass of the disagreement set under the best pairing of cells.
pub fn d_mu(system: &System, p: &Partition, q: &Partition, sample: &EmpiricalMeasure) -> Result<f64> {
    Ok(d_mu_assignment(system, p, q, sample)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::{grid_partition, CoordBox};
    use crate::systems::{PhasePoint, SystemSpec};

    #[test]
    fn small_assignment() {
        let w = vec![vec![3, 1, 0], vec![2, 2, 2], vec![0, 5, 1]];
        let (best, sigma) = assignment_max(&w);
        assert_eq!(best, 3 + 2 + 5);
        assert_eq!(sigma, vec![0, 2, 1]);
    }

    #[test]
    fn shifted_halves() {
        let s = System::new(&SystemSpec::golden_rotation()).unwrap();
        let sample =
            EmpiricalMeasure::from_points(&s, (0..10_000).map(|k| PhasePoint::Circle((k as f64 + 0.5) / 1e4)).collect(), 1.0)
                .unwrap();
        let halves = grid_partition(&s, 2).unwrap();
        let b = |lo: f64, hi: f64| CoordBox { lo: vec![lo], hi: vec![hi] };
        let q = Partition::from_boxes("q", 1, vec![vec![b(0.0, 0.4)], vec![b(0.4, 1.0)]], false).unwrap();
        assert!((d_mu(&s, &halves, &q, &sample).unwrap() - 0.1).abs() < 1e-9);
        assert_eq!(d_mu(&s, &halves, &halves, &sample).unwrap(), 0.0);
        // Reordered labels cost nothing.
        let swapped = Partition::from_boxes("s", 1, vec![vec![b(0.5, 1.0)], vec![b(0.0, 0.5)]], false).unwrap();
        assert_eq!(d_mu(&s, &halves, &swapped, &sample).unwrap(), 0.0);
    }
}
