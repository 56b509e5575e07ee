use serde::{Deserialize, Serialize};

use super::{SurvivalRecord, TrainError};

/// Time bins `[T_j, T_{j+1})` with `T_1 = 0` and `T_{B+1} = +∞`.
///
/// Only the interior edges `T_2 … T_B` are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    interior: Vec<f64>,
}

impl BinGrid {
    pub fn from_interior(interior: Vec<f64>) -> Result<Self, TrainError> {
        let ok = interior.iter().all(|e| e.is_finite() && *e > 0.0)
            && interior.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(TrainError::InvalidConfig(format!("bin edges {interior:?} are not strictly increasing and positive")));
        }
        Ok(Self { interior })
    }

    pub fn bin_count(&self) -> usize {
        self.interior.len() + 1
    }

    pub fn interior_edges(&self) -> &[f64] {
        &self.interior
    }

    /// All `B + 1` edges including `0` and `+∞`.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.interior.len() + 2);
        e.push(0.0);
        e.extend_from_slice(&self.interior);
        e.push(f64::INFINITY);
        e
    }

    /// Index `j` of the bin `[T_j, T_{j+1})` holding `t`.
    pub fn bin_of(&self, t: f64) -> usize {
        self.interior.partition_point(|e| *e <= t)
    }

    /// Finite lower edge of bin `j`, `None` for `T_1 = 0`.
    pub fn lower(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).map(|i| self.interior[i])
    }

    /// Finite upper edge of bin `j`, `None` for `+∞`.
    pub fn upper(&self, j: usize) -> Option<f64> {
        self.interior.get(j).copied()
    }
}

/// Linear-interpolation empirical quantile of sorted data at probability `p`.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Bins whose interior edges are the `j/B` quantiles of the uncensored times.
pub fn quantile_bins(records: &[SurvivalRecord], bins: usize) -> Result<BinGrid, TrainError> {
    if bins == 0 {
        return Err(TrainError::InvalidConfig("bins must be at least 1".into()));
    }
    let mut times: Vec<f64> = records.iter().filter(|r| r.is_event()).map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    let mut distinct = times.clone();
    distinct.dedup();
    if distinct.len() < bins {
        return Err(TrainError::TooFewUncensored { needed: bins, found: distinct.len() });
    }
    let interior: Vec<f64> = (1..bins).map(|j| quantile_sorted(&times, j as f64 / bins as f64)).collect();
    if interior.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TrainError::TooFewUncensored { needed: bins, found: distinct.len() });
    }
    BinGrid::from_interior(interior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn events(times: &[f64]) -> Vec<SurvivalRecord> {
        times.iter().enumerate().map(|(i, &t)| SurvivalRecord::new(format!("s{i}"), t, false).unwrap()).collect()
    }

    #[test]
    fn four_times_two_bins() {
        let recs = events(&[3.0, 1.0, 4.0, 2.0]);
        let grid = quantile_bins(&recs, 2).unwrap();
        assert_eq!(grid.interior_edges(), &[2.5]);
        let counts = recs.iter().fold([0; 2], |mut acc, r| {
            acc[grid.bin_of(r.time)] += 1;
            acc
        });
        assert_eq!(counts, [2, 2]);
    }

    #[test]
    fn single_bin_covers_everything() {
        let grid = quantile_bins(&events(&[5.0]), 1).unwrap();
        assert_eq!(grid.edges(), vec![0.0, f64::INFINITY]);
        assert_eq!(grid.bin_of(1e9), 0);
    }

    #[test]
    fn all_censored_is_an_error() {
        let recs = vec![SurvivalRecord::new("a", 1.0, true).unwrap(), SurvivalRecord::new("b", 2.0, true).unwrap()];
        assert!(matches!(quantile_bins(&recs, 1), Err(TrainError::TooFewUncensored { .. })));
    }

    #[test]
    fn membership_is_half_open() {
        let grid = BinGrid::from_interior(vec![1.0, 2.0]).unwrap();
        assert_eq!(grid.bin_of(0.5), 0);
        assert_eq!(grid.bin_of(1.0), 1);
        assert_eq!(grid.bin_of(2.0), 2);
        assert_eq!(grid.lower(0), None);
        assert_eq!(grid.upper(2), None);
        assert_eq!(grid.upper(1), Some(2.0));
    }

    proptest! {
        #[test]
        fn bins_partition_and_balance(mut times in proptest::collection::vec(0.01..100.0f64, 8..200), b in 1usize..6) {
            times.sort_by(f64::total_cmp);
            times.dedup();
            prop_assume!(times.len() >= b);
            let recs = events(&times);
            let grid = quantile_bins(&recs, b).unwrap();
            let mut counts = vec![0usize; b];
            for r in &recs {
                let j = grid.bin_of(r.time);
                let e = grid.edges();
                prop_assert!(e[j] <= r.time && r.time < e[j + 1]);
                counts[j] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "{counts:?}");
        }
    }
}
