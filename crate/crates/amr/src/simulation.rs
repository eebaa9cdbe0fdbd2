//! Synthetic data-generating processes, exact small-instance oracles for the
//! true distance-response curve, and the Monte Carlo experiment harness.
//!
//! A scene fixes everything except the assignment: an outcome lattice, a
//! regular sublattice of intervention points, a smooth baseline surface, and
//! an effect profile built by mixing two gamma-density kernels (positive
//! short range, negative medium range). Treatment effects superpose
//! additively, or interact through each unit's nearest treated neighbor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Gamma};

use crate::circle::{CircleAverageTable, RingIndex};
use crate::design::{
    draw_assignment, enumerate_assignments, stream_rng, AssignmentDesign, AssignmentVector,
    ENUMERATION_LIMIT,
};
use crate::distance::DistanceGrid;
use crate::error::{AmrError, Result};
use crate::estimators::{estimate_ht, regress_circle_means};
use crate::points::{InterventionPoint, InterventionSet};
use crate::raster::RasterGrid;
use crate::variance::{
    build_neighborhoods, confidence_interval, edof_scale, restrict_adjacency,
    spatial_hac_variance, CriticalValue, HBand,
};

use rand::Rng;

/// Stream indices reserved for scene construction and truth computation, far
/// away from the replicate streams `0..R`.
const STREAM_MULTIPLIERS: u64 = 1 << 48;
const STREAM_PHASES: u64 = (1 << 48) + 1;
const STREAM_TRUTH_BASE: u64 = 1 << 40;

/// Distance profile `g(d) = A [ w G(d; k1, t1) - (1 - w) G(d; k2, t2) ]`
/// where `G` is the gamma density: positive at short range, a negative
/// trough at medium range, vanishing in the tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMixProfile {
    pub shape_pos: f64,
    pub scale_pos: f64,
    pub shape_neg: f64,
    pub scale_neg: f64,
    pub weight: f64,
    /// Overall amplitude; `standard(a)` normalizes so `max |g| = a`.
    pub amplitude: f64,
}

impl GammaMixProfile {
    /// The default mix: shapes (2, 6), scales (0.5, 0.5), weight 0.6,
    /// normalized so the profile peaks at `amplitude` in absolute value.
    pub fn standard(amplitude: f64) -> Self {
        let mut profile = Self {
            shape_pos: 2.0,
            scale_pos: 0.5,
            shape_neg: 6.0,
            scale_neg: 0.5,
            weight: 0.6,
            amplitude: 1.0,
        };
        let peak = profile.peak_magnitude();
        profile.amplitude = amplitude / peak;
        profile
    }

    fn gamma_pdf(d: f64, shape: f64, scale: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        Gamma::new(shape, 1.0 / scale).expect("valid gamma").pdf(d)
    }

    pub fn value(&self, d: f64) -> f64 {
        self.amplitude
            * (self.weight * Self::gamma_pdf(d, self.shape_pos, self.scale_pos)
                - (1.0 - self.weight) * Self::gamma_pdf(d, self.shape_neg, self.scale_neg))
    }

    /// The positive (short-range) component alone.
    pub fn positive_component(&self, d: f64) -> f64 {
        self.amplitude * self.weight * Self::gamma_pdf(d, self.shape_pos, self.scale_pos)
    }

    fn peak_magnitude(&self) -> f64 {
        (0..=40_000)
            .map(|k| self.value(k as f64 * 5e-4).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest radius beyond which `|g| < rel_tol * max|g|` everywhere.
    pub fn support_radius(&self, rel_tol: f64) -> f64 {
        let peak = (0..=40_000)
            .map(|k| self.value(k as f64 * 5e-4).abs())
            .fold(0.0, f64::max);
        let tol = rel_tol * peak;
        let mut r = 100.0;
        while r > 0.0 && self.value(r).abs() < tol && self.value(r - 5e-4).abs() < tol {
            r -= 5e-4;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Effects superpose: `Y_x = f(x) + sum_i z_i g_i(x)`.
    Additive,
    /// A treated unit whose nearest neighbor is also treated contributes
    /// only the positive component, scaled by its unit multiplier.
    Interactive,
    /// No effect at all; outcomes equal the baseline under every assignment.
    Null,
}

/// Serializable scene configuration; `Scene::build` derives everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Cells per side; the lattice is square with unit cells.
    pub grid_cells: usize,
    /// Number of intervention points; must be a perfect square whose side
    /// divides `grid_cells`.
    pub n_points: usize,
    pub design: AssignmentDesign,
    pub scene_seed: u64,
    pub baseline_amplitude: f64,
    pub effect_amplitude: f64,
    pub dmax: f64,
    pub dstep: f64,
}

impl SceneSpec {
    /// The default laboratory scene: an `80 x 80` lattice (6400 outcome
    /// cells) with 64 intervention points under Bernoulli(1/2).
    pub fn standard(kind: SceneKind, scene_seed: u64) -> Self {
        Self {
            kind,
            grid_cells: 80,
            n_points: 64,
            design: AssignmentDesign::Bernoulli { p: 0.5 },
            scene_seed,
            baseline_amplitude: 1.0,
            effect_amplitude: 1.0,
            dmax: 4.0,
            dstep: 1.0,
        }
    }

    /// Same scene family at a different size, keeping point spacing fixed
    /// (the grid side scales with `sqrt(n_points)`).
    pub fn with_points(mut self, n_points: usize) -> Result<Self> {
        let side = (n_points as f64).sqrt().round() as usize;
        if side * side != n_points {
            return Err(AmrError::InvalidInput(format!(
                "n_points must be a perfect square, got {n_points}"
            )));
        }
        let spacing = self.grid_cells / (self.n_points as f64).sqrt().round() as usize;
        self.n_points = n_points;
        self.grid_cells = spacing * side;
        Ok(self)
    }
}

/// The oracle mode for the true curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruthMode {
    /// Exact under additivity: the ring average of `g_i`, averaged over
    /// units. Does not depend on the design.
    AnalyticAdditive,
    /// Exact marginalization over all `2^(N-1)` co-assignments per unit,
    /// weighted by Bernoulli probabilities. Requires small N.
    Enumerate,
    /// Monte Carlo marginalization with the given number of draws.
    MonteCarlo(usize),
}

/// True curve values, with standard errors in Monte Carlo mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueAmr {
    pub distances: Vec<f64>,
    pub values: Vec<f64>,
    pub se: Option<Vec<f64>>,
}

/// A fully built scene: geometry, profiles, and precomputed rings.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    pts: InterventionSet,
    dg: DistanceGrid,
    profile: GammaMixProfile,
    baseline: Vec<f64>,
    ring_index: RingIndex,
    /// Per unit, per cell: the additive contribution `g_i(x)`.
    additive_profiles: Vec<Vec<f64>>,
    /// Per unit, per cell: the interactive-branch contribution
    /// `m_i * positive_component(d)`.
    positive_profiles: Vec<Vec<f64>>,
    nearest_neighbor: Vec<usize>,
    multipliers: Vec<f64>,
    hband: HBand,
    n_rows: usize,
    n_cols: usize,
}

impl Scene {
    pub fn build(spec: SceneSpec) -> Result<Self> {
        let side = (spec.n_points as f64).sqrt().round() as usize;
        if side * side != spec.n_points || spec.n_points < 2 {
            return Err(AmrError::InvalidInput(format!(
                "n_points must be a perfect square >= 4, got {}",
                spec.n_points
            )));
        }
        if spec.grid_cells % side != 0 {
            return Err(AmrError::InvalidInput(format!(
                "grid side {} is not divisible by sqrt(n_points) = {side}",
                spec.grid_cells
            )));
        }
        let g = spec.grid_cells;
        let spacing = g / side;

        // Intervention points at cell centers on a regular sublattice;
        // spacing >= 2 guarantees a positive spacing floor d0.
        let mut points = Vec::with_capacity(spec.n_points);
        for b in 0..side {
            for a in 0..side {
                let col = spacing * a + spacing / 2;
                let row = spacing * b + spacing / 2;
                points.push(InterventionPoint {
                    id: format!("i{:03}", b * side + a),
                    x: col as f64 + 0.5,
                    y: row as f64 + 0.5,
                });
            }
        }
        let pts = InterventionSet::new(points, None)?;

        // Baseline: two fixed planar sinusoids with seed-dependent phases.
        let mut rng = stream_rng(spec.scene_seed, STREAM_PHASES);
        let phase1 = rng.random::<f64>() * std::f64::consts::TAU;
        let phase2 = rng.random::<f64>() * std::f64::consts::TAU;
        let amp = spec.baseline_amplitude / 2.0;
        let mut baseline = Vec::with_capacity(g * g);
        for r in 0..g {
            for c in 0..g {
                let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                let w1 = std::f64::consts::TAU * (0.6 * x + 0.8 * y) / 23.0 + phase1;
                let w2 = std::f64::consts::TAU * (0.8 * x - 0.6 * y) / 41.0 + phase2;
                baseline.push(amp * (w1.sin() + w2.cos()));
            }
        }

        let profile = GammaMixProfile::standard(match spec.kind {
            SceneKind::Null => 0.0,
            _ => spec.effect_amplitude,
        });

        // Unit multipliers for the interactive branch, fixed at construction.
        let mut rng = stream_rng(spec.scene_seed, STREAM_MULTIPLIERS);
        let multipliers: Vec<f64> = (0..spec.n_points)
            .map(|_| 0.5 + rng.random::<f64>())
            .collect();

        // Per-unit effect fields over the lattice.
        let n = spec.n_points;
        let fields: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (px, py) = pts.coord(i);
                let mut add = Vec::with_capacity(g * g);
                let mut pos = Vec::with_capacity(g * g);
                for r in 0..g {
                    for c in 0..g {
                        let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                        let d = ((x - px).powi(2) + (y - py).powi(2)).sqrt();
                        add.push(profile.value(d));
                        pos.push(multipliers[i] * profile.positive_component(d));
                    }
                }
                (add, pos)
            })
            .collect();
        let (additive_profiles, positive_profiles): (Vec<_>, Vec<_>) =
            fields.into_iter().unzip();

        // Nearest other intervention point; ties broken by lowest index.
        let nearest_neighbor = (0..n)
            .map(|i| {
                let (xi, yi) = pts.coord(i);
                (0..n)
                    .filter(|&j| j != i)
                    .min_by(|&a, &b| {
                        let da = {
                            let (x, y) = pts.coord(a);
                            (x - xi).powi(2) + (y - yi).powi(2)
                        };
                        let db = {
                            let (x, y) = pts.coord(b);
                            (x - xi).powi(2) + (y - yi).powi(2)
                        };
                        da.partial_cmp(&db).unwrap()
                    })
                    .expect("N >= 2")
            })
            .collect();

        let dg = DistanceGrid::from_range(0.0, spec.dmax, spec.dstep, 0)?;
        let support = if matches!(spec.kind, SceneKind::Null) {
            0.0
        } else {
            profile.support_radius(1e-6)
        };
        // The scene knows its own interference structure: h(d) = r* + d.
        let hband = HBand::Table(
            dg.distances()
                .iter()
                .map(|&d| (d, support + d))
                .collect(),
        );

        let dummy_grid = RasterGrid::constant(0.0, 0.0, 1.0, g, g, 0.0)?;
        let ring_index = RingIndex::build(&dummy_grid, &pts, &dg);

        Ok(Self {
            spec,
            pts,
            dg,
            profile,
            baseline,
            ring_index,
            additive_profiles,
            positive_profiles,
            nearest_neighbor,
            multipliers,
            hband,
            n_rows: g,
            n_cols: g,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn points(&self) -> &InterventionSet {
        &self.pts
    }

    pub fn distance_grid(&self) -> &DistanceGrid {
        &self.dg
    }

    pub fn profile(&self) -> &GammaMixProfile {
        &self.profile
    }

    pub fn hband(&self) -> &HBand {
        &self.hband
    }

    pub fn n_points(&self) -> usize {
        self.spec.n_points
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    /// Outcome values per cell (row-major) under assignment `z`.
    pub fn outcome_values(&self, z: &AssignmentVector) -> Vec<f64> {
        let mut y = self.baseline.clone();
        for i in 0..self.n_points() {
            if !z.is_treated(i) {
                continue;
            }
            let field = match self.spec.kind {
                SceneKind::Null => continue,
                SceneKind::Additive => &self.additive_profiles[i],
                SceneKind::Interactive => {
                    if z.is_treated(self.nearest_neighbor[i]) {
                        &self.positive_profiles[i]
                    } else {
                        &self.additive_profiles[i]
                    }
                }
            };
            for (yc, gc) in y.iter_mut().zip(field) {
                *yc += gc;
            }
        }
        y
    }

    /// Outcomes as a georeferenced raster.
    pub fn generate_outcomes(&self, z: &AssignmentVector) -> Result<RasterGrid> {
        RasterGrid::new(
            0.0,
            0.0,
            1.0,
            self.n_rows,
            self.n_cols,
            self.outcome_values(z),
        )
    }

    /// Circle-average table under assignment `z` via the precomputed rings.
    pub fn circle_table(&self, z: &AssignmentVector) -> Result<CircleAverageTable> {
        self.ring_index.averages(&self.outcome_values(z))
    }

    /// The true distance-response curve.
    pub fn true_amr(&self, mode: TruthMode) -> Result<TrueAmr> {
        let distances = self.dg.distances().to_vec();
        match mode {
            TruthMode::AnalyticAdditive => {
                if matches!(self.spec.kind, SceneKind::Interactive) {
                    return Err(AmrError::InvalidInput(
                        "analytic truth only holds for additive scenes".into(),
                    ));
                }
                let n = self.n_points();
                let dcount = distances.len();
                let mut values = vec![0.0; dcount];
                for (k, val) in values.iter_mut().enumerate() {
                    let mut total = 0.0;
                    let mut used = 0usize;
                    for i in 0..n {
                        let ring = self.ring_index.ring(i, k);
                        if ring.is_empty() {
                            continue;
                        }
                        let sum: f64 = ring
                            .iter()
                            .map(|&c| self.additive_profiles[i][c as usize])
                            .sum();
                        total += sum / ring.len() as f64;
                        used += 1;
                    }
                    *val = total / used as f64;
                }
                Ok(TrueAmr {
                    distances,
                    values,
                    se: None,
                })
            }
            TruthMode::Enumerate => self.true_amr_enumerate(),
            TruthMode::MonteCarlo(m) => self.true_amr_monte_carlo(m),
        }
    }

    /// Exact marginalization: for each unit `i` and each co-assignment of
    /// the other units, difference the unit-`i` ring means with `z_i`
    /// switched on versus off, weighted by the Bernoulli probability of the
    /// co-assignment.
    fn true_amr_enumerate(&self) -> Result<TrueAmr> {
        let n = self.n_points();
        if n > ENUMERATION_LIMIT {
            return Err(AmrError::TooLarge {
                n,
                max: ENUMERATION_LIMIT,
            });
        }
        let p = match self.spec.design {
            AssignmentDesign::Bernoulli { p } => p,
            AssignmentDesign::Complete { .. } => {
                return Err(AmrError::InvalidInput(
                    "exact enumeration is defined for Bernoulli designs".into(),
                ))
            }
        };
        let dcount = self.dg.len();
        let mut tau_sum = vec![0.0; dcount];
        let mut used = vec![0usize; dcount];
        for i in 0..n {
            let mut tau_i = vec![0.0; dcount];
            for others in enumerate_assignments(n - 1)? {
                // Probability of the co-assignment under the design.
                let weight = others.bernoulli_probability(p);
                let mut z_on: Vec<u8> = others.z().to_vec();
                z_on.insert(i, 1);
                let mut z_off: Vec<u8> = others.z().to_vec();
                z_off.insert(i, 0);
                let y_on = self.outcome_values(&AssignmentVector::new(z_on)?);
                let y_off = self.outcome_values(&AssignmentVector::new(z_off)?);
                for k in 0..dcount {
                    let ring = self.ring_index.ring(i, k);
                    if ring.is_empty() {
                        continue;
                    }
                    let mu_on: f64 = ring.iter().map(|&c| y_on[c as usize]).sum::<f64>()
                        / ring.len() as f64;
                    let mu_off: f64 = ring.iter().map(|&c| y_off[c as usize]).sum::<f64>()
                        / ring.len() as f64;
                    tau_i[k] += weight * (mu_on - mu_off);
                }
            }
            for k in 0..dcount {
                if !self.ring_index.ring(i, k).is_empty() {
                    tau_sum[k] += tau_i[k];
                    used[k] += 1;
                }
            }
        }
        let values = tau_sum
            .iter()
            .zip(&used)
            .map(|(&s, &u)| s / u as f64)
            .collect();
        Ok(TrueAmr {
            distances: self.dg.distances().to_vec(),
            values,
            se: None,
        })
    }

    /// Monte Carlo marginalization: the mean of inverse-probability-weighted
    /// estimates over `m` assignment draws, with standard errors.
    fn true_amr_monte_carlo(&self, m: usize) -> Result<TrueAmr> {
        if m == 0 {
            return Err(AmrError::InvalidInput("need at least 1 draw".into()));
        }
        let p = self.spec.design.probability(self.n_points());
        let estimates: Vec<Vec<f64>> = (0..m as u64)
            .into_par_iter()
            .map(|r| -> Result<Vec<f64>> {
                let z = draw_assignment(
                    &self.spec.design,
                    self.n_points(),
                    self.spec.scene_seed,
                    STREAM_TRUTH_BASE + r,
                )?;
                let table = self.circle_table(&z)?;
                Ok(estimate_ht(&table, &z, p)?.estimate)
            })
            .collect::<Result<_>>()?;
        let dcount = self.dg.len();
        let mut values = vec![0.0; dcount];
        let mut se = vec![0.0; dcount];
        for k in 0..dcount {
            let mean = estimates.iter().map(|e| e[k]).sum::<f64>() / m as f64;
            let var = estimates
                .iter()
                .map(|e| (e[k] - mean).powi(2))
                .sum::<f64>()
                / (m as f64 - 1.0).max(1.0);
            values[k] = mean;
            se[k] = (var / m as f64).sqrt();
        }
        Ok(TrueAmr {
            distances: self.dg.distances().to_vec(),
            values,
            se: Some(se),
        })
    }
}

/// Per-distance summary of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub distance: f64,
    pub true_amr: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mse: f64,
    /// Monte Carlo variance of the estimates across replicates.
    pub mc_variance: f64,
    /// Standard error of `mean_estimate`.
    pub mc_se_of_mean: f64,
    pub mean_var_hat: f64,
    pub mean_eta: f64,
    pub coverage: f64,
    pub coverage_edof: f64,
    pub mean_ci_low: f64,
    pub mean_ci_high: f64,
    pub mean_ci_low_edof: f64,
    pub mean_ci_high_edof: f64,
}

/// Full experiment output, including replicate-level estimates for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_points: usize,
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
    pub distances: Vec<f64>,
    pub summaries: Vec<DistanceSummary>,
    /// Replicate-level estimates, `estimates[r][k]`.
    pub estimates: Vec<Vec<f64>>,
    /// Replicates whose estimator failed (degenerate arm), flagged not fatal.
    pub failed_replicates: Vec<u64>,
}

struct ReplicateOutcome {
    estimate: Vec<f64>,
    var_hat: Vec<f64>,
    eta: Vec<f64>,
    ci: Vec<(f64, f64)>,
    ci_edof: Vec<(f64, f64)>,
}

/// Runs `replications` assignment draws through the full estimation and
/// inference pipeline and summarizes against the scene's true curve.
pub fn run_experiment(
    scene: &Scene,
    replications: usize,
    seed: u64,
    level: f64,
    truth: Option<&TrueAmr>,
) -> Result<ExperimentReport> {
    if replications < 100 {
        return Err(AmrError::InvalidInput(format!(
            "need at least 100 replications, got {replications}"
        )));
    }
    let owned_truth;
    let truth = match truth {
        Some(t) => t,
        None => {
            owned_truth = match scene.spec().kind {
                SceneKind::Interactive => scene.true_amr(TruthMode::MonteCarlo(20_000))?,
                _ => scene.true_amr(TruthMode::AnalyticAdditive)?,
            };
            &owned_truth
        }
    };

    let dcount = scene.distance_grid().len();
    // Dependency neighborhoods are fixed across replicates.
    let adjacency: Vec<Vec<Vec<usize>>> = scene
        .distance_grid()
        .distances()
        .iter()
        .map(|&d| {
            let h = scene.hband().at(d)?;
            Ok(build_neighborhoods(scene.points(), d, h).adjacency)
        })
        .collect::<Result<_>>()?;

    let outcomes: Vec<(u64, Result<ReplicateOutcome>)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<ReplicateOutcome> {
                let z = draw_assignment(&scene.spec().design, scene.n_points(), seed, r)?;
                let table = scene.circle_table(&z)?;
                let mut estimate = Vec::with_capacity(dcount);
                let mut var_hat = Vec::with_capacity(dcount);
                let mut eta = Vec::with_capacity(dcount);
                let mut ci = Vec::with_capacity(dcount);
                let mut ci_edof = Vec::with_capacity(dcount);
                for k in 0..dcount {
                    let reg = regress_circle_means(&table, &z, k)?;
                    let adj = restrict_adjacency(&adjacency[k], &reg.units);
                    let v = spatial_hac_variance(&reg, &adj)?;
                    let e = edof_scale(&reg.z, &adj)?;
                    estimate.push(reg.slope);
                    var_hat.push(v.var_tau);
                    eta.push(e);
                    ci.push(confidence_interval(
                        reg.slope,
                        v.var_tau,
                        1.0,
                        level,
                        false,
                        CriticalValue::Normal,
                    )?);
                    ci_edof.push(confidence_interval(
                        reg.slope,
                        v.var_tau,
                        e,
                        level,
                        true,
                        CriticalValue::Normal,
                    )?);
                }
                Ok(ReplicateOutcome {
                    estimate,
                    var_hat,
                    eta,
                    ci,
                    ci_edof,
                })
            };
            (r, run())
        })
        .collect();

    let mut ok = Vec::with_capacity(replications);
    let mut failed = Vec::new();
    for (r, res) in outcomes {
        match res {
            Ok(o) => ok.push(o),
            Err(AmrError::DegenerateArm { .. }) | Err(AmrError::SingularDesign { .. }) => {
                failed.push(r)
            }
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(AmrError::InvalidInput(
            "every replicate failed; check the design".into(),
        ));
    }
    let used = ok.len() as f64;

    let mut summaries = Vec::with_capacity(dcount);
    for k in 0..dcount {
        let t = truth.values[k];
        let mean = ok.iter().map(|o| o.estimate[k]).sum::<f64>() / used;
        let mse = ok.iter().map(|o| (o.estimate[k] - t).powi(2)).sum::<f64>() / used;
        let mc_var = ok
            .iter()
            .map(|o| (o.estimate[k] - mean).powi(2))
            .sum::<f64>()
            / (used - 1.0).max(1.0);
        let cover = |get: &dyn Fn(&ReplicateOutcome) -> (f64, f64)| {
            ok.iter()
                .filter(|o| {
                    let (lo, hi) = get(o);
                    lo <= t && t <= hi
                })
                .count() as f64
                / used
        };
        let mean_lo = ok.iter().map(|o| o.ci[k].0).sum::<f64>() / used;
        let mean_hi = ok.iter().map(|o| o.ci[k].1).sum::<f64>() / used;
        let mean_lo_e = ok.iter().map(|o| o.ci_edof[k].0).sum::<f64>() / used;
        let mean_hi_e = ok.iter().map(|o| o.ci_edof[k].1).sum::<f64>() / used;
        summaries.push(DistanceSummary {
            distance: scene.distance_grid().distances()[k],
            true_amr: t,
            mean_estimate: mean,
            bias: mean - t,
            mse,
            mc_variance: mc_var,
            mc_se_of_mean: (mc_var / used).sqrt(),
            mean_var_hat: ok.iter().map(|o| o.var_hat[k]).sum::<f64>() / used,
            mean_eta: ok.iter().map(|o| o.eta[k]).sum::<f64>() / used,
            coverage: cover(&|o| o.ci[k]),
            coverage_edof: cover(&|o| o.ci_edof[k]),
            mean_ci_low: mean_lo,
            mean_ci_high: mean_hi,
            mean_ci_low_edof: mean_lo_e,
            mean_ci_high_edof: mean_hi_e,
        });
    }

    Ok(ExperimentReport {
        n_points: scene.n_points(),
        replications,
        seed,
        level,
        distances: scene.distance_grid().distances().to_vec(),
        summaries,
        estimates: ok.into_iter().map(|o| o.estimate).collect(),
        failed_replicates: failed,
    })
}
