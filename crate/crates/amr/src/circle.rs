//! Circle averages: mean outcomes along coarsened-distance rings around each
//! intervention point.
//!
//! A cell belongs to the ring `(i, d_k)` when its coarsened distance to
//! intervention point `i` equals `d_k` exactly. Cells outside the raster
//! never contribute; empty rings are flagged as missing, not errors.

use rayon::prelude::*;

use crate::distance::{lattice_key, on_lattice, DistanceGrid};
use crate::error::{AmrError, Result};
use crate::points::InterventionSet;
use crate::raster::RasterGrid;

/// N x D table of ring means with counts and missingness flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleAverageTable {
    n: usize,
    distances: Vec<f64>,
    /// Row-major N x D; NaN where missing.
    mu: Vec<f64>,
    ring_count: Vec<usize>,
}

impl CircleAverageTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_distances(&self) -> usize {
        self.distances.len()
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn mu(&self, i: usize, k: usize) -> f64 {
        self.mu[i * self.distances.len() + k]
    }

    pub fn ring_count(&self, i: usize, k: usize) -> usize {
        self.ring_count[i * self.distances.len() + k]
    }

    pub fn is_missing(&self, i: usize, k: usize) -> bool {
        self.ring_count(i, k) == 0
    }

    /// Ring means at distance index `k` for all points (NaN where missing).
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.mu(i, k)).collect()
    }

    /// Builds a table directly from per-(i, k) means; used by the simulator's
    /// fast path. `mu` is row-major N x D with NaN for missing rings.
    pub fn from_parts(distances: Vec<f64>, mu: Vec<f64>, ring_count: Vec<usize>) -> Result<Self> {
        if mu.len() != ring_count.len() || mu.len() % distances.len() != 0 {
            return Err(AmrError::InvalidInput("inconsistent table dimensions".into()));
        }
        let n = mu.len() / distances.len();
        Ok(Self {
            n,
            distances,
            mu,
            ring_count,
        })
    }
}

/// Precomputed ring membership: for each `(i, k)`, the raster cell indices
/// (row-major) whose coarsened distance to point `i` equals `d_k`.
///
/// Building this once and reusing it across assignments is what makes the
/// simulation experiments fast: under a fixed geometry the rings never change.
#[derive(Debug, Clone)]
pub struct RingIndex {
    n: usize,
    distances: Vec<f64>,
    /// Indexed `i * D + k`.
    cells: Vec<Vec<u32>>,
}

impl RingIndex {
    pub fn build(grid: &RasterGrid, pts: &InterventionSet, dg: &DistanceGrid) -> Self {
        let kappa = dg.kappa();
        let dd = dg.distances();
        // Distances off the coarsening lattice can never match a ring.
        let keys: Vec<Option<i64>> = dd
            .iter()
            .map(|&d| on_lattice(d, kappa).then(|| lattice_key(d, kappa)))
            .collect();
        let n = pts.len();
        let scale = 10f64.powi(kappa as i32);

        let rows: Vec<Vec<Vec<u32>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (px, py) = pts.coord(i);
                let mut rings: Vec<Vec<u32>> = vec![Vec::new(); dd.len()];
                let mut idx = 0u32;
                for r in 0..grid.n_rows() {
                    for c in 0..grid.n_cols() {
                        let (x, y) = grid.cell_center(r, c);
                        let dist = ((x - px).powi(2) + (y - py).powi(2)).sqrt();
                        let key = (dist * scale + 0.5).floor() as i64;
                        for (k, dk) in keys.iter().enumerate() {
                            if *dk == Some(key) {
                                rings[k].push(idx);
                            }
                        }
                        idx += 1;
                    }
                }
                rings
            })
            .collect();

        Self {
            n,
            distances: dd.to_vec(),
            cells: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn ring(&self, i: usize, k: usize) -> &[u32] {
        &self.cells[i * self.distances.len() + k]
    }

    /// Ring means over an arbitrary value vector laid out like the raster
    /// (row-major cell order). Aggregation order is fixed, so results are
    /// bitwise deterministic.
    pub fn averages(&self, cell_values: &[f64]) -> Result<CircleAverageTable> {
        let d = self.distances.len();
        let mut mu = vec![f64::NAN; self.n * d];
        let mut count = vec![0usize; self.n * d];
        for i in 0..self.n {
            for k in 0..d {
                let ring = self.ring(i, k);
                if !ring.is_empty() {
                    let sum: f64 = ring.iter().map(|&c| cell_values[c as usize]).sum();
                    mu[i * d + k] = sum / ring.len() as f64;
                    count[i * d + k] = ring.len();
                }
            }
        }
        for k in 0..d {
            if (0..self.n).all(|i| count[i * d + k] == 0) {
                return Err(AmrError::AllRingsEmpty {
                    distance: self.distances[k],
                });
            }
        }
        CircleAverageTable::from_parts(self.distances.clone(), mu, count)
    }
}

/// Computes the circle-average table for a raster and intervention set.
pub fn circle_averages(
    grid: &RasterGrid,
    pts: &InterventionSet,
    dg: &DistanceGrid,
) -> Result<CircleAverageTable> {
    RingIndex::build(grid, pts, dg).averages(grid.values())
}
