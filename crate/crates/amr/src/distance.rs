//! Distance coarsening and the distance grid over which curves are estimated.
//!
//! Outcome cells rarely sit exactly on the edge of a circle, so distances are
//! snapped to a lattice of width `10^-kappa` before ring membership is
//! decided: `coarsen(r) = floor(r * 10^kappa + 0.5) * 10^-kappa`.

use serde::{Deserialize, Serialize};

use crate::error::{AmrError, Result};

/// Rounds the Euclidean distance between `a` and `b` to the nearest multiple
/// of `10^-kappa`.
pub fn coarsened_distance(a: (f64, f64), b: (f64, f64), kappa: u32) -> f64 {
    let r = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    coarsen(r, kappa)
}

/// Snaps a nonnegative distance to the coarsening lattice.
pub fn coarsen(r: f64, kappa: u32) -> f64 {
    let scale = 10f64.powi(kappa as i32);
    (r * scale + 0.5).floor() / scale
}

/// Integer key of a distance on the `10^-kappa` lattice. Two distances share
/// a ring iff their keys are equal, which avoids float-equality pitfalls.
pub(crate) fn lattice_key(r: f64, kappa: u32) -> i64 {
    let scale = 10f64.powi(kappa as i32);
    (r * scale + 0.5).floor() as i64
}

/// Whether `d` lies (numerically) on the `10^-kappa` lattice, i.e. could be
/// hit exactly by a coarsened distance.
pub(crate) fn on_lattice(d: f64, kappa: u32) -> bool {
    let scale = 10f64.powi(kappa as i32);
    (d * scale - (d * scale).round()).abs() < 1e-6
}

/// Strictly increasing evaluation distances plus the coarsening parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceGrid {
    distances: Vec<f64>,
    kappa: u32,
}

impl DistanceGrid {
    pub fn new(distances: Vec<f64>, kappa: u32) -> Result<Self> {
        if distances.is_empty() {
            return Err(AmrError::InvalidInput(
                "distance grid must contain at least one distance".into(),
            ));
        }
        if distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(AmrError::InvalidInput(
                "distances must be finite and nonnegative".into(),
            ));
        }
        if distances.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AmrError::InvalidInput(
                "distances must be strictly increasing".into(),
            ));
        }
        Ok(Self { distances, kappa })
    }

    /// Builds `dmin, dmin+dstep, ..., <= dmax` (inclusive up to rounding).
    pub fn from_range(dmin: f64, dmax: f64, dstep: f64, kappa: u32) -> Result<Self> {
        if dstep <= 0.0 || dmax < dmin {
            return Err(AmrError::InvalidInput(format!(
                "bad distance range: dmin={dmin}, dmax={dmax}, dstep={dstep}"
            )));
        }
        let n = ((dmax - dmin) / dstep + 1.0 + 1e-9).floor() as usize;
        let distances = (0..n).map(|k| dmin + k as f64 * dstep).collect();
        Self::new(distances, kappa)
    }

    /// Default coarsening for a raster: ring width of about one cell,
    /// `kappa = ceil(-log10(cell_size))` clamped to `[0, 6]`.
    pub fn default_kappa(cell_size: f64) -> u32 {
        let k = (-cell_size.log10()).ceil();
        k.clamp(0.0, 6.0) as u32
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_distance_is_zero() {
        assert_eq!(coarsened_distance((0.0, 0.0), (0.0, 0.0), 1), 0.0);
    }

    #[test]
    fn diagonal_coarsens_to_1_4() {
        // ||(1,1)|| = 1.41421..., floor(14.1421 + 0.5)/10 = 1.4
        assert_eq!(coarsened_distance((0.0, 0.0), (1.0, 1.0), 1), 1.4);
    }

    #[test]
    fn kappa_zero_rounds_to_integers() {
        // floor(1.25 + 0.5) = 1
        assert_eq!(coarsened_distance((0.0, 0.0), (0.0, 1.25), 0), 1.0);
    }

    #[test]
    fn default_kappa_clamps() {
        assert_eq!(DistanceGrid::default_kappa(1.0), 0);
        assert_eq!(DistanceGrid::default_kappa(0.1), 1);
        assert_eq!(DistanceGrid::default_kappa(0.03), 2);
        assert_eq!(DistanceGrid::default_kappa(1e-9), 6);
        assert_eq!(DistanceGrid::default_kappa(50.0), 0);
    }

    #[test]
    fn range_grid_is_inclusive() {
        let dg = DistanceGrid::from_range(0.0, 10.0, 0.5, 1).unwrap();
        assert_eq!(dg.len(), 21);
        assert_eq!(dg.distances()[20], 10.0);
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(DistanceGrid::new(vec![1.0, 1.0], 0).is_err());
        assert!(DistanceGrid::new(vec![], 0).is_err());
    }

    #[test]
    fn coarsening_consistency_refinement() {
        // A cell on ring d under kappa stays within 10^-kappa of d under kappa' > kappa.
        let a = (0.0, 0.0);
        for &(bx, by) in &[(1.23, 0.77), (2.5, 0.1), (0.9, 0.9)] {
            for kappa in 0..3u32 {
                let d = coarsened_distance(a, (bx, by), kappa);
                let d_fine = coarsened_distance(a, (bx, by), kappa + 2);
                assert!((d_fine - d).abs() <= 10f64.powi(-(kappa as i32)) / 2.0 + 1e-12);
            }
        }
    }
}
