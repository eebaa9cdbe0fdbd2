//! Point estimation of the distance-response curve.
//!
//! Two estimators over circle averages: an inverse-probability-weighted
//! difference using the design probability (`estimate_ht`) and the
//! difference in realized group means (`estimate_hajek`), which coincides
//! with the slope of an OLS regression of ring means on a constant and the
//! treatment indicator.
//!
//! Rows with a missing ring at distance `d_k` are dropped symmetrically from
//! both arms at that distance, and the `N` in denominators counts the rows
//! actually used.

use serde::{Deserialize, Serialize};

use crate::circle::CircleAverageTable;
use crate::design::AssignmentVector;
use crate::error::{AmrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorMethod {
    HorvitzThompson,
    Hajek,
    Smoothed,
}

/// Per-distance estimates with optional uncertainty bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmrCurve {
    pub distances: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub ci_low: Option<Vec<f64>>,
    pub ci_high: Option<Vec<f64>>,
    pub method: EstimatorMethod,
    pub edof_adjusted: bool,
    /// Treated / control counts among usable (non-missing) rows, per distance.
    pub n1: Vec<usize>,
    pub n0: Vec<usize>,
}

impl AmrCurve {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// The two-group OLS fit at one distance column: `mu_i = intercept + slope * z_i + e_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRegression {
    pub distance: f64,
    /// Original unit indices of the usable (non-missing) rows, in order.
    pub units: Vec<usize>,
    /// Assignment restricted to `units`.
    pub z: Vec<u8>,
    pub intercept: f64,
    pub slope: f64,
    /// Residuals aligned with `units`.
    pub residuals: Vec<f64>,
    pub n1: usize,
    pub n0: usize,
}

fn usable_rows(table: &CircleAverageTable, k: usize) -> Vec<usize> {
    (0..table.n()).filter(|&i| !table.is_missing(i, k)).collect()
}

fn check_len(table: &CircleAverageTable, z: &AssignmentVector) -> Result<()> {
    if z.len() != table.n() {
        return Err(AmrError::InvalidInput(format!(
            "assignment length {} does not match table rows {}",
            z.len(),
            table.n()
        )));
    }
    Ok(())
}

/// Inverse-probability-weighted estimator using the design probability `p`
/// (never the realized treated share).
pub fn estimate_ht(table: &CircleAverageTable, z: &AssignmentVector, p: f64) -> Result<AmrCurve> {
    check_len(table, z)?;
    if !(0.0 < p && p < 1.0) {
        return Err(AmrError::InvalidInput(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    let d = table.n_distances();
    let mut estimate = Vec::with_capacity(d);
    let mut n1s = Vec::with_capacity(d);
    let mut n0s = Vec::with_capacity(d);
    for k in 0..d {
        let rows = usable_rows(table, k);
        if rows.is_empty() {
            return Err(AmrError::NoUsableRows {
                distance: table.distances()[k],
            });
        }
        let n = rows.len() as f64;
        let mut treated_sum = 0.0;
        let mut control_sum = 0.0;
        let mut n1 = 0usize;
        for &i in &rows {
            if z.is_treated(i) {
                treated_sum += table.mu(i, k);
                n1 += 1;
            } else {
                control_sum += table.mu(i, k);
            }
        }
        estimate.push(treated_sum / (n * p) - control_sum / (n * (1.0 - p)));
        n1s.push(n1);
        n0s.push(rows.len() - n1);
    }
    Ok(AmrCurve {
        distances: table.distances().to_vec(),
        estimate,
        se: None,
        ci_low: None,
        ci_high: None,
        method: EstimatorMethod::HorvitzThompson,
        edof_adjusted: false,
        n1: n1s,
        n0: n0s,
    })
}

/// Difference in mean ring outcomes between treated and control arms.
pub fn estimate_hajek(table: &CircleAverageTable, z: &AssignmentVector) -> Result<AmrCurve> {
    check_len(table, z)?;
    let d = table.n_distances();
    let mut estimate = Vec::with_capacity(d);
    let mut n1s = Vec::with_capacity(d);
    let mut n0s = Vec::with_capacity(d);
    for k in 0..d {
        let reg = regress_circle_means(table, z, k)?;
        estimate.push(reg.slope);
        n1s.push(reg.n1);
        n0s.push(reg.n0);
    }
    Ok(AmrCurve {
        distances: table.distances().to_vec(),
        estimate,
        se: None,
        ci_low: None,
        ci_high: None,
        method: EstimatorMethod::Hajek,
        edof_adjusted: false,
        n1: n1s,
        n0: n0s,
    })
}

/// Closed-form two-group OLS of ring means on `(1, z)` at distance index `k`.
/// The slope is the Hajek difference; the intercept is the control mean.
pub fn regress_circle_means(
    table: &CircleAverageTable,
    z: &AssignmentVector,
    k: usize,
) -> Result<ColumnRegression> {
    check_len(table, z)?;
    let distance = table.distances()[k];
    let units = usable_rows(table, k);
    if units.is_empty() {
        return Err(AmrError::NoUsableRows { distance });
    }
    let mut treated_sum = 0.0;
    let mut control_sum = 0.0;
    let mut n1 = 0usize;
    for &i in &units {
        if z.is_treated(i) {
            treated_sum += table.mu(i, k);
            n1 += 1;
        } else {
            control_sum += table.mu(i, k);
        }
    }
    let n0 = units.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(AmrError::DegenerateArm { distance, n1, n0 });
    }
    let mu1 = treated_sum / n1 as f64;
    let mu0 = control_sum / n0 as f64;
    let residuals: Vec<f64> = units
        .iter()
        .map(|&i| table.mu(i, k) - if z.is_treated(i) { mu1 } else { mu0 })
        .collect();
    let zs = units.iter().map(|&i| z.z()[i]).collect();
    Ok(ColumnRegression {
        distance,
        units,
        z: zs,
        intercept: mu0,
        slope: mu1 - mu0,
        residuals,
        n1,
        n0,
    })
}
