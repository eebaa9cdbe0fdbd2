//! Spatial-HAC sandwich variance for the two-group regression estimator,
//! dependency neighborhoods, the effective-degrees-of-freedom scale, and
//! normal-approximation confidence intervals.
//!
//! Cross-unit covariance terms are truncated with the hard indicator
//! `1{j in B(i; d)}`, where `B(i; d) = { j : ||x(i) - x(j)|| - d <= h(d) }`
//! and `h(d)` bounds the spatial reach of interference. No kernel taper is
//! applied.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{AmrError, Result};
use crate::estimators::{regress_circle_means, AmrCurve, ColumnRegression, EstimatorMethod};
use crate::circle::CircleAverageTable;
use crate::design::AssignmentVector;
use crate::points::InterventionSet;

/// The interference bound `h(d)`: a constant, or a per-distance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HBand {
    Constant(f64),
    /// `(d, h)` rows; looked up by exact distance (1e-9 tolerance).
    Table(Vec<(f64, f64)>),
}

impl HBand {
    pub fn at(&self, d: f64) -> Result<f64> {
        let h = match self {
            HBand::Constant(h) => *h,
            HBand::Table(rows) => rows
                .iter()
                .find(|(dd, _)| (dd - d).abs() < 1e-9)
                .map(|(_, h)| *h)
                .ok_or_else(|| {
                    AmrError::InvalidInput(format!("no h(d) entry for distance {d}"))
                })?,
        };
        if h < 0.0 || !h.is_finite() {
            return Err(AmrError::InvalidInput(format!(
                "interference bound must be finite and >= 0, got {h}"
            )));
        }
        Ok(h)
    }
}

/// Dependency neighborhoods at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    /// `adjacency[i]` lists the units `j` with `||x(i) - x(j)|| - d <= h`,
    /// in increasing index order. Always contains `i` itself.
    pub adjacency: Vec<Vec<usize>>,
    /// `c(d) = max_i |B(i; d)|`.
    pub c_max: usize,
}

/// Builds `B(i; d)` for every intervention point.
pub fn build_neighborhoods(pts: &InterventionSet, d: f64, h: f64) -> Neighborhoods {
    let n = pts.len();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        let (xi, yi) = pts.coord(i);
        for j in 0..n {
            let (xj, yj) = pts.coord(j);
            let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            if dist - d <= h {
                adjacency[i].push(j);
            }
        }
    }
    let c_max = adjacency.iter().map(Vec::len).max().unwrap_or(0);
    Neighborhoods { adjacency, c_max }
}

/// Singleton neighborhoods `B(i) = {i}` for `n` units.
pub fn singleton_neighborhoods(n: usize) -> Neighborhoods {
    Neighborhoods {
        adjacency: (0..n).map(|i| vec![i]).collect(),
        c_max: 1,
    }
}

/// Reindexes adjacency lists onto a subset of units (e.g. the usable rows of
/// a regression), dropping neighbors outside the subset.
pub fn restrict_adjacency(adjacency: &[Vec<usize>], units: &[usize]) -> Vec<Vec<usize>> {
    let mut pos = vec![usize::MAX; adjacency.len()];
    for (local, &orig) in units.iter().enumerate() {
        pos[orig] = local;
    }
    units
        .iter()
        .map(|&orig| {
            adjacency[orig]
                .iter()
                .filter_map(|&j| (pos[j] != usize::MAX).then(|| pos[j]))
                .collect()
        })
        .collect()
}

/// The spatial-HAC variance of the slope at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// Variance of the slope, after the PSD safeguard.
    pub var_tau: f64,
    /// The 2x2 inner (meat) matrix of the sandwich, for diagnostics.
    pub sandwich_meat: [[f64; 2]; 2],
    /// True when an indefinite meat produced a negative variance and the
    /// singleton-neighborhood (HC0) value was substituted.
    pub hc0_clamped: bool,
}

fn weight(zi: u8, n1: f64, n0: f64) -> f64 {
    // i-th entry of the slope row of (X'X)^{-1} X'.
    if zi == 1 {
        1.0 / n1
    } else {
        -1.0 / n0
    }
}

/// Sandwich variance of the regression slope with cross-products restricted
/// to the dependency neighborhoods.
///
/// `adjacency` is indexed by *local* row position, aligned with
/// `reg.residuals` (see [`restrict_adjacency`] when rows were dropped).
pub fn spatial_hac_variance(
    reg: &ColumnRegression,
    adjacency: &[Vec<usize>],
) -> Result<VarianceEstimate> {
    let n = reg.residuals.len();
    if adjacency.len() != n {
        return Err(AmrError::InvalidInput(format!(
            "adjacency has {} rows, regression has {n}",
            adjacency.len()
        )));
    }
    if reg.n1 == 0 || reg.n0 == 0 {
        return Err(AmrError::SingularDesign {
            n1: reg.n1,
            n: reg.n1 + reg.n0,
        });
    }
    if reg.n1 < 2 || reg.n0 < 2 {
        return Err(AmrError::DegenerateArm {
            distance: reg.distance,
            n1: reg.n1,
            n0: reg.n0,
        });
    }
    let n1 = reg.n1 as f64;
    let n0 = reg.n0 as f64;

    // var_tau = sum_i sum_{j in B(i)} lambda_i lambda_j e_i e_j, with
    // lambda_i = z_i/N1 - (1 - z_i)/N0; the diagonal i = j contributes the
    // HC0 part and the off-diagonal terms the neighborhood corrections.
    let mut var = 0.0;
    let mut hc0 = 0.0;
    let mut meat = [[0.0f64; 2]; 2];
    for i in 0..n {
        let li = weight(reg.z[i], n1, n0);
        let ei = reg.residuals[i];
        for &j in &adjacency[i] {
            let lj = weight(reg.z[j], n1, n0);
            let ej = reg.residuals[j];
            var += li * lj * ei * ej;
            let (zi, zj) = (reg.z[i] as f64, reg.z[j] as f64);
            meat[0][0] += ei * ej;
            meat[0][1] += zj * ei * ej;
            meat[1][0] += zi * ei * ej;
            meat[1][1] += zi * zj * ei * ej;
            if i == j {
                hc0 += li * lj * ei * ej;
            }
        }
    }

    let hc0_clamped = var < 0.0;
    Ok(VarianceEstimate {
        var_tau: if hc0_clamped { hc0 } else { var },
        sandwich_meat: meat,
        hc0_clamped,
    })
}

/// Effective-degrees-of-freedom scale `eta = trace(B)` where
/// `B = (N1 N0 / N) * M * (lambda_i lambda_j 1{j in B(i)})_ij * M` and
/// `M = I - X (X'X)^{-1} X'`.
///
/// `z` and `adjacency` share the same (local) index space.
pub fn edof_scale(z: &[u8], adjacency: &[Vec<usize>]) -> Result<f64> {
    let n = z.len();
    if adjacency.len() != n {
        return Err(AmrError::InvalidInput(format!(
            "adjacency has {} rows, assignment has {n}",
            adjacency.len()
        )));
    }
    let n1u = z.iter().filter(|&&v| v == 1).count();
    let n0u = n - n1u;
    if n1u < 2 || n0u < 2 {
        return Err(AmrError::DegenerateArm {
            distance: f64::NAN,
            n1: n1u,
            n0: n0u,
        });
    }
    let n1 = n1u as f64;
    let n0 = n0u as f64;
    let nf = n as f64;

    // M is idempotent and symmetric, so trace(M A M) = trace(A M).  For the
    // two-group design M has the closed form of within-arm centering:
    // M_ij = delta_ij - 1/N1 (both treated), delta_ij - 1/N0 (both control),
    // 0 across arms.
    let m_entry = |i: usize, j: usize| -> f64 {
        let delta = if i == j { 1.0 } else { 0.0 };
        match (z[i], z[j]) {
            (1, 1) => delta - 1.0 / n1,
            (0, 0) => delta - 1.0 / n0,
            _ => 0.0,
        }
    };

    let mut trace_am = 0.0;
    for i in 0..n {
        let li = weight(z[i], n1, n0);
        for &j in &adjacency[i] {
            let lj = weight(z[j], n1, n0);
            // A_ij = lambda_i lambda_j; contributes A_ij * M_ji to tr(AM).
            trace_am += li * lj * m_entry(j, i);
        }
    }
    Ok(n1 * n0 / nf * trace_am)
}

/// Which reference distribution supplies the critical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalValue {
    Normal,
    /// Student-t with the given degrees of freedom.
    StudentT { dof: f64 },
}

impl CriticalValue {
    fn quantile(&self, level: f64) -> f64 {
        let q = (1.0 + level) / 2.0;
        match self {
            CriticalValue::Normal => Normal::standard().inverse_cdf(q),
            CriticalValue::StudentT { dof } => {
                StudentsT::new(0.0, 1.0, *dof).expect("dof > 0").inverse_cdf(q)
            }
        }
    }
}

/// Symmetric interval `estimate +/- crit * sqrt(var_tau / (eta if adjust else 1))`.
pub fn confidence_interval(
    estimate: f64,
    var_tau: f64,
    eta: f64,
    level: f64,
    adjust: bool,
    crit: CriticalValue,
) -> Result<(f64, f64)> {
    if !(0.0 < level && level < 1.0) {
        return Err(AmrError::InvalidInput(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let scale = if adjust { eta } else { 1.0 };
    if adjust && !(eta > 0.0) {
        return Err(AmrError::InvalidInput(format!(
            "effective-DoF scale must be positive, got {eta}"
        )));
    }
    let half = crit.quantile(level) * (var_tau / scale).sqrt();
    Ok((estimate - half, estimate + half))
}

/// Inference configuration for the regression-form estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub hband: HBand,
    pub level: f64,
    pub edof: bool,
    pub crit: CriticalValue,
}

impl InferenceConfig {
    pub fn new(hband: HBand) -> Self {
        Self {
            hband,
            level: 0.95,
            edof: false,
            crit: CriticalValue::Normal,
        }
    }
}

/// Full pipeline at the curve level: Hajek point estimates plus spatial-HAC
/// standard errors and confidence intervals at every distance.
pub fn hajek_curve_with_inference(
    table: &CircleAverageTable,
    z: &AssignmentVector,
    pts: &InterventionSet,
    cfg: &InferenceConfig,
) -> Result<AmrCurve> {
    let d = table.n_distances();
    let mut estimate = Vec::with_capacity(d);
    let mut se = Vec::with_capacity(d);
    let mut ci_low = Vec::with_capacity(d);
    let mut ci_high = Vec::with_capacity(d);
    let mut n1s = Vec::with_capacity(d);
    let mut n0s = Vec::with_capacity(d);
    for k in 0..d {
        let dist = table.distances()[k];
        let reg = regress_circle_means(table, z, k)?;
        let h = cfg.hband.at(dist)?;
        let nb = build_neighborhoods(pts, dist, h);
        let adj = restrict_adjacency(&nb.adjacency, &reg.units);
        let var = spatial_hac_variance(&reg, &adj)?;
        let eta = if cfg.edof { edof_scale(&reg.z, &adj)? } else { 1.0 };
        let (lo, hi) =
            confidence_interval(reg.slope, var.var_tau, eta, cfg.level, cfg.edof, cfg.crit)?;
        estimate.push(reg.slope);
        se.push((var.var_tau / if cfg.edof { eta } else { 1.0 }).sqrt());
        ci_low.push(lo);
        ci_high.push(hi);
        n1s.push(reg.n1);
        n0s.push(reg.n0);
    }
    Ok(AmrCurve {
        distances: table.distances().to_vec(),
        estimate,
        se: Some(se),
        ci_low: Some(ci_low),
        ci_high: Some(ci_high),
        method: EstimatorMethod::Hajek,
        edof_adjusted: cfg.edof,
        n1: n1s,
        n0: n0s,
    })
}
