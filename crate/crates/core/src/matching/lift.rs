use serde::{Deserialize, Serialize};

use super::cont::{ContMatching, GridPiece};
use super::discrete::Matching;
use crate::error::{FkError, Result};

/// Output of [`lift_matching`] with the bookkeeping of the construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    pub matching: ContMatching,
    /// Indices `k` of the discrete matching with `k <= n - 1` and
    /// `pi(k) <= n - 1`.
    pub d0: Vec<usize>,
    pub pi_len: usize,
}

/// Turn an `(n + 1, delta)`-matching `pi` of the time-1 map into a
/// continuous matching on `[0, n + 1]` that translates each unit interval
/// `[k, k + 1)` onto `[pi(k), pi(k) + 1)` for `k` in `D_0`.
///
/// Requires `|pi| >= (1 - delta)(n + 1)`, `delta < eps / 2` and
/// `(n + 1) eps / 4 > 1`; the result has slope one on every piece and
/// coverage `|D_0| > (1 - eps)(n + 1)`. Closeness of the lifted orbits
/// within `eps` depends on the flow and is checked separately with
/// [`ContMatching::check_flow`].
pub fn lift_matching(pi: &Matching, n: usize, delta: f64, eps: f64) -> Result<Lift> {
    let t = (n + 1) as f64;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FkError::usage(format!("eps must lie in (0, 1), got {eps}")));
    }
    if let Some(&(i, j)) = pi.pairs.iter().find(|&&(i, j)| i > n || j > n) {
        return Err(FkError::usage(format!("pair ({i}, {j}) outside [0, {n}]")));
    }
    pi.validate(None)?;
    let need = (1.0 - delta) * t;
    if !(pi.len() as f64 >= need) {
        return Err(FkError::Construction(format!(
            "|pi| >= (1 - delta)(n + 1) fails: {} < {need}",
            pi.len()
        )));
    }
    if !(delta < eps / 2.0) {
        return Err(FkError::Construction(format!("delta < eps / 2 fails: {delta} >= {}", eps / 2.0)));
    }
    if !(t * eps / 4.0 > 1.0) {
        return Err(FkError::Construction(format!(
            "(n + 1) eps / 4 > 1 fails: {} <= 1",
            t * eps / 4.0
        )));
    }
    let d0: Vec<usize> = pi.pairs.iter().filter(|&&(i, j)| i < n && j < n).map(|&(i, _)| i).collect();
    if d0.len() + 2 < pi.len() {
        return Err(FkError::Construction(format!(
            "|D_0| >= |pi| - 2 fails: {} < {}",
            d0.len(),
            pi.len() - 2
        )));
    }
    if !(d0.len() as f64 > (1.0 - eps) * t) {
        return Err(FkError::Construction(format!(
            "|D_0| > (1 - eps)(n + 1) fails: {} <= {}",
            d0.len(),
            (1.0 - eps) * t
        )));
    }
    let pieces: Vec<GridPiece> = pi
        .pairs
        .iter()
        .filter(|&&(i, j)| i < n && j < n)
        .map(|&(i, j)| GridPiece { x0: i, y0: j, a: 1, b: 1 })
        .collect();
    let matching = ContMatching::from_pieces(pieces, n + 1, 1.0, eps);
    Ok(Lift { matching, d0, pi_len: pi.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_lifts_to_identity() {
        let n = 40;
        let pi = Matching { pairs: (0..n).map(|k| (k, k)).collect(), n: n + 1 };
        let lift = lift_matching(&pi, n, 0.045, 0.2).unwrap();
        assert_eq!(lift.matching.coverage, n as f64);
        assert_eq!(lift.d0.len(), n);
        assert_eq!(lift.matching.h(12.5), Some(12.5));
    }

    #[test]
    fn unit_shift() {
        let n = 100;
        let pi = Matching { pairs: (0..n - 1).map(|k| (k, k + 1)).collect(), n: n + 1 };
        let lift = lift_matching(&pi, n, 0.045, 0.2).unwrap();
        assert_eq!(lift.matching.coverage, (n - 1) as f64);
        assert!(lift.d0.len() + 2 >= pi.len());
        assert_eq!(lift.matching.h(3.25), Some(4.25));
    }

    #[test]
    fn preconditions_name_the_inequality() {
        let n = 40;
        let short = Matching { pairs: (0..20).map(|k| (k, k)).collect(), n: n + 1 };
        match lift_matching(&short, n, 0.02, 0.2) {
            Err(FkError::Construction(msg)) => assert!(msg.contains("(1 - delta)(n + 1)")),
            other => panic!("{other:?}"),
        }
        let pi = Matching { pairs: (0..=n).map(|k| (k, k)).collect(), n: n + 1 };
        assert!(matches!(lift_matching(&pi, n, 0.15, 0.2), Err(FkError::Construction(m)) if m.contains("delta < eps / 2")));
        assert!(matches!(lift_matching(&pi, n, 0.001, 0.05), Err(FkError::Construction(m)) if m.contains("eps / 4")));
    }
}
