//! Fisher sharp-null randomization tests.
//!
//! Under the sharp null the observed raster is the complete potential-outcome
//! schedule, so the circle-average table is fixed across redraws; only the
//! assignment vector is redrawn. Replicate `r` draws from stream `r`, so the
//! draws multiset (and hence the p-value) is identical under any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle::CircleAverageTable;
use crate::design::{draw_assignment_with, stream_rng, AssignmentDesign, AssignmentVector};
use crate::error::{AmrError, Result};
use crate::estimators::regress_circle_means;

const MAX_CONSECUTIVE_REDRAWS: usize = 1000;

/// The test statistic: the Hajek estimate at one distance, or its mean over
/// a closed distance window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PermutationStatistic {
    AmrAtDistance(f64),
    MeanAmrOver(f64, f64),
}

impl PermutationStatistic {
    /// Resolves to the distance-column indices the statistic averages over.
    pub fn window(&self, distances: &[f64]) -> Result<Vec<usize>> {
        let idx: Vec<usize> = match *self {
            PermutationStatistic::AmrAtDistance(d) => distances
                .iter()
                .position(|&x| (x - d).abs() < 1e-9)
                .map(|k| vec![k])
                .ok_or_else(|| {
                    AmrError::InvalidInput(format!("distance {d} not on the grid"))
                })?,
            PermutationStatistic::MeanAmrOver(lo, hi) => {
                if hi < lo {
                    return Err(AmrError::InvalidInput(format!(
                        "empty statistic window [{lo}, {hi}]"
                    )));
                }
                distances
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x >= lo - 1e-9 && x <= hi + 1e-9)
                    .map(|(k, _)| k)
                    .collect()
            }
        };
        if idx.is_empty() {
            return Err(AmrError::InvalidInput(
                "statistic window contains no grid distances".into(),
            ));
        }
        Ok(idx)
    }
}

/// Which tail(s) of the randomization distribution to test against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Upper,
    Lower,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub p_value: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub replicates: usize,
    pub seed: u64,
    pub tail: Tail,
    /// Redraws rejected because the statistic was undefined (degenerate arm).
    pub degenerate_redraws: usize,
    /// Sharp-null replicate statistics, in replicate order.
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// Mean Hajek estimate over the window columns, or a degenerate-arm error.
fn statistic_value(
    table: &CircleAverageTable,
    z: &AssignmentVector,
    window: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for &k in window {
        total += regress_circle_means(table, z, k)?.slope;
    }
    Ok(total / window.len() as f64)
}

/// Finite-sample p-value with the +1 correction; ties count inclusively.
pub fn p_value(observed: f64, draws: &[f64], tail: Tail) -> f64 {
    let p = draws.len() as f64;
    let ge = draws.iter().filter(|&&t| t >= observed).count() as f64;
    let le = draws.iter().filter(|&&t| t <= observed).count() as f64;
    let upper = (ge + 1.0) / (p + 1.0);
    let lower = (le + 1.0) / (p + 1.0);
    match tail {
        Tail::Upper => upper.min(1.0),
        Tail::Lower => lower.min(1.0),
        Tail::Two => (2.0 * upper.min(lower)).min(1.0),
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Runs the sharp-null randomization test with `replicates` redraws of the
/// assignment from `design`.
pub fn permutation_test(
    table: &CircleAverageTable,
    z_observed: &AssignmentVector,
    design: &AssignmentDesign,
    statistic: PermutationStatistic,
    replicates: usize,
    seed: u64,
    tail: Tail,
) -> Result<PermutationResult> {
    if replicates < 100 {
        return Err(AmrError::InvalidInput(format!(
            "need at least 100 permutation replicates, got {replicates}"
        )));
    }
    let window = statistic.window(table.distances())?;
    let observed = statistic_value(table, z_observed, &window)?;
    let n = table.n();

    let results: Vec<Result<(f64, usize)>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let mut rejected = 0usize;
            loop {
                let z = draw_assignment_with(design, n, &mut rng)?;
                match statistic_value(table, &z, &window) {
                    Ok(t) => return Ok((t, rejected)),
                    Err(AmrError::DegenerateArm { .. }) => {
                        rejected += 1;
                        if rejected >= MAX_CONSECUTIVE_REDRAWS {
                            return Err(AmrError::RedrawExhausted { attempts: rejected });
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();

    let mut draws = Vec::with_capacity(replicates);
    let mut degenerate_redraws = 0usize;
    for r in results {
        let (t, rejected) = r?;
        draws.push(t);
        degenerate_redraws += rejected;
    }

    let mut sorted = draws.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(PermutationResult {
        observed,
        p_value: p_value(observed, &draws, tail),
        band_low: quantile(&sorted, 0.025),
        band_high: quantile(&sorted, 0.975),
        replicates,
        seed,
        tail,
        degenerate_redraws,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_const(n: usize, d: usize, value: f64) -> CircleAverageTable {
        CircleAverageTable::from_parts(
            (0..d).map(|k| k as f64).collect(),
            vec![value; n * d],
            vec![1; n * d],
        )
        .unwrap()
    }

    fn table_rows(rows: &[Vec<f64>]) -> CircleAverageTable {
        let d = rows[0].len();
        CircleAverageTable::from_parts(
            (0..d).map(|k| k as f64).collect(),
            rows.iter().flatten().cloned().collect(),
            vec![1; rows.len() * d],
        )
        .unwrap()
    }

    #[test]
    fn constant_table_gives_p_one() {
        let t = table_const(8, 2, 3.0);
        let z = AssignmentVector::new(vec![1, 0, 1, 0, 1, 0, 1, 0]).unwrap();
        let design = AssignmentDesign::bernoulli(0.5).unwrap();
        let res = permutation_test(
            &t,
            &z,
            &design,
            PermutationStatistic::AmrAtDistance(0.0),
            200,
            1,
            Tail::Two,
        )
        .unwrap();
        assert_eq!(res.p_value, 1.0);
        assert_eq!(res.observed, 0.0);
        assert!(res.draws.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![(i as f64).sin(), (i as f64).cos()])
            .collect();
        let t = table_rows(&rows);
        let z = AssignmentVector::new(vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0]).unwrap();
        let design = AssignmentDesign::bernoulli(0.5).unwrap();
        let stat = PermutationStatistic::MeanAmrOver(0.0, 1.0);
        let a = permutation_test(&t, &z, &design, stat, 300, 7, Tail::Two).unwrap();
        let b = permutation_test(&t, &z, &design, stat, 300, 7, Tail::Two).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn p_value_bounds_hold() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let t = table_rows(&rows);
        let z = AssignmentVector::new(vec![1; 6].into_iter().chain(vec![0; 6]).collect())
            .unwrap();
        let design = AssignmentDesign::bernoulli(0.5).unwrap();
        let res = permutation_test(
            &t,
            &z,
            &design,
            PermutationStatistic::AmrAtDistance(0.0),
            100,
            3,
            Tail::Two,
        )
        .unwrap();
        assert!(res.p_value >= 1.0 / 101.0 && res.p_value <= 1.0);
        assert!(res.band_low <= res.band_high);
    }

    #[test]
    fn p_value_monotone_in_distance_from_draws() {
        let draws: Vec<f64> = (0..999).map(|i| (i as f64) / 100.0 - 5.0).collect();
        let med = 0.0 - 0.01; // median of the grid
        let mut last = f64::INFINITY;
        for obs in [med, med + 1.0, med + 2.0, med + 4.0] {
            let p = p_value(obs, &draws, Tail::Two);
            assert!(p <= last + 1e-12);
            last = p;
        }
    }

    #[test]
    fn window_resolution() {
        let distances = [0.0, 0.5, 1.0, 1.5, 2.0];
        let w = PermutationStatistic::MeanAmrOver(0.5, 1.5)
            .window(&distances)
            .unwrap();
        assert_eq!(w, vec![1, 2, 3]);
        assert!(PermutationStatistic::AmrAtDistance(0.7)
            .window(&distances)
            .is_err());
    }

    #[test]
    fn requires_minimum_replicates() {
        let t = table_const(4, 1, 1.0);
        let z = AssignmentVector::new(vec![1, 0, 1, 0]).unwrap();
        let design = AssignmentDesign::bernoulli(0.5).unwrap();
        assert!(permutation_test(
            &t,
            &z,
            &design,
            PermutationStatistic::AmrAtDistance(0.0),
            99,
            1,
            Tail::Two
        )
        .is_err());
    }
}
