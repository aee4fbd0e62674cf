use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};

/// Gap values along an increasing horizon grid. `tail_sup` is the maximum
/// over the last quarter of the grid and stands in for the upper limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub horizons: Vec<f64>,
    pub gaps: Vec<f64>,
    pub tail_sup: f64,
}

impl GapEstimate {
    pub fn new(horizons: Vec<f64>, gaps: Vec<f64>) -> Result<GapEstimate> {
        if horizons.len() != gaps.len() {
            return Err(FkError::usage("horizon and gap counts differ"));
        }
        if horizons.len() < 4 {
            return Err(FkError::usage(format!("need at least 4 horizons, got {}", horizons.len())));
        }
        let tail_sup = tail_max(&gaps);
        Ok(GapEstimate { horizons, gaps, tail_sup })
    }
}

/// Maximum over the last `ceil(len / 4)` entries.
pub fn tail_max(values: &[f64]) -> f64 {
    let k = values.len().div_ceil(4);
    values[values.len() - k..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum over the last `ceil(len / 4)` entries.
pub fn tail_min(values: &[f64]) -> f64 {
    let k = values.len().div_ceil(4);
    values[values.len() - k..].iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_covers_last_quarter() {
        let e = GapEstimate::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.9, 0.1, 0.2, 0.3, 0.25]).unwrap();
        assert_eq!(e.tail_sup, 0.3);
        assert!(GapEstimate::new(vec![1.0, 2.0, 3.0], vec![0.0; 3]).is_err());
        assert_eq!(tail_min(&[5.0, 4.0, 1.0, 2.0]), 2.0);
    }
}
