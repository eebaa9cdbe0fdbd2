//! Design-based estimation of distance-response curves for spatial
//! experiments with interference.
//!
//! The workflow: load a raster of outcomes and a set of intervention points,
//! average outcomes along coarsened-distance rings around each point
//! ([`circle_averages`]), estimate the average response at each distance
//! ([`estimate_hajek`], [`estimate_ht`]), and attach design-based uncertainty
//! via spatial-HAC standard errors ([`hajek_curve_with_inference`]) or
//! randomization tests ([`permutation_test`]). A simulation laboratory
//! ([`simulation`]) provides synthetic scenes with known truth for
//! calibration studies.
//!
//! ```
//! use amr::{circle_averages, estimate_hajek, AssignmentVector, DistanceGrid, RasterGrid};
//! use amr::{InterventionPoint, InterventionSet};
//!
//! let grid = RasterGrid::constant(0.0, 0.0, 1.0, 9, 9, 2.0)?;
//! let pts = InterventionSet::new(
//!     vec![
//!         InterventionPoint { id: "a".into(), x: 2.5, y: 2.5 },
//!         InterventionPoint { id: "b".into(), x: 6.5, y: 2.5 },
//!         InterventionPoint { id: "c".into(), x: 2.5, y: 6.5 },
//!         InterventionPoint { id: "d".into(), x: 6.5, y: 6.5 },
//!     ],
//!     None,
//! )?;
//! let dg = DistanceGrid::new(vec![0.0, 1.0, 2.0], 0)?;
//! let table = circle_averages(&grid, &pts, &dg)?;
//! let z = AssignmentVector::new(vec![1, 0, 0, 1])?;
//! let curve = estimate_hajek(&table, &z)?;
//! // A constant raster has a flat zero response at every distance.
//! assert!(curve.estimate.iter().all(|t| t.abs() < 1e-12));
//! # Ok::<(), amr::AmrError>(())
//! ```

pub mod circle;
pub mod design;
pub mod distance;
pub mod error;
pub mod estimators;
pub mod output;
pub mod permutation;
pub mod points;
pub mod raster;
pub mod simulation;
pub mod smoothing;
pub mod variance;

pub use circle::{circle_averages, CircleAverageTable, RingIndex};
pub use design::{
    draw_assignment, enumerate_assignments, stream_rng, AssignmentDesign, AssignmentVector,
    ENUMERATION_LIMIT,
};
pub use distance::{coarsen, coarsened_distance, DistanceGrid};
pub use error::{AmrError, ErrorKind, Result};
pub use estimators::{
    estimate_hajek, estimate_ht, regress_circle_means, AmrCurve, EstimatorMethod,
};
pub use output::{curve_csv_string, json_report, write_curve_csv, RunManifest, SCHEMA_VERSION};
pub use permutation::{permutation_test, PermutationResult, PermutationStatistic, Tail};
pub use points::{InterventionPoint, InterventionSet};
pub use raster::RasterGrid;
pub use simulation::{
    run_experiment, ExperimentReport, GammaMixProfile, Scene, SceneKind, SceneSpec, TruthMode,
};
pub use smoothing::{smooth_amr, Bandwidth, SmoothFit, SmoothSpec};
pub use variance::{
    build_neighborhoods, confidence_interval, edof_scale, hajek_curve_with_inference,
    restrict_adjacency, singleton_neighborhoods, spatial_hac_variance, CriticalValue, HBand,
    InferenceConfig, Neighborhoods, VarianceEstimate,
};

/// The user guide, embedded so its code examples compile and run with the
/// test suite. The same chapters build into the rendered book under `book/`.
pub mod guide {
    #![allow(unused_imports)]

    #[doc = include_str!("../../../book/src/overview.md")]
    pub mod overview {}

    #[doc = include_str!("../../../book/src/circles.md")]
    pub mod circles {}

    #[doc = include_str!("../../../book/src/estimation.md")]
    pub mod estimation {}

    #[doc = include_str!("../../../book/src/inference.md")]
    pub mod inference {}

    #[doc = include_str!("../../../book/src/randomization.md")]
    pub mod randomization {}

    #[doc = include_str!("../../../book/src/smoothing.md")]
    pub mod smoothing {}

    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}

    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
