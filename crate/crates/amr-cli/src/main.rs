//! `amr`: distance-response estimation for spatial experiments, over files.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 degenerate
//! configuration (empty arm, empty rings, singular fit).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use amr::{
    circle_averages, hajek_curve_with_inference, permutation_test, run_experiment, smooth_amr,
    AmrError, AssignmentDesign, AssignmentVector, CriticalValue, DistanceGrid,
    ErrorKind, estimate_hajek, HBand, InferenceConfig, InterventionSet, PermutationStatistic,
    RasterGrid, Result, RunManifest, Scene, SceneKind, SceneSpec, SmoothSpec, Tail, TruthMode,
};

#[derive(Parser)]
#[command(name = "amr", version, about = "Distance-response curves for spatial experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the curve from a raster and an observed assignment
    Estimate(EstimateArgs),
    /// Sharp-null randomization test
    Permute(PermuteArgs),
    /// Monte Carlo experiment on a synthetic scene
    Simulate(SimulateArgs),
    /// True curve of a synthetic scene
    Oracle(OracleArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Outcome raster (ESRI ASCII grid)
    #[arg(long)]
    raster: PathBuf,
    /// Intervention points CSV with header id,x,y[,z]
    #[arg(long)]
    points: PathBuf,
    /// Evaluation distances as MIN:MAX:STEP
    #[arg(long)]
    distances: String,
    /// Coarsening resolution (decimal digits); default derived from cell size
    #[arg(long)]
    kappa: Option<u32>,
    /// Assignment design: bernoulli:<p> or complete:<n1>
    #[arg(long)]
    design: String,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Constant interference bound h
    #[arg(long)]
    hband: Option<f64>,
    /// CSV of per-distance bounds with header d,h
    #[arg(long, conflicts_with = "hband")]
    hband_table: Option<PathBuf>,
    /// Confidence level
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Divide the variance by the effective-DoF scale
    #[arg(long)]
    edof: bool,
    /// Critical value: normal or t:<dof>
    #[arg(long, default_value = "normal")]
    crit: String,
    /// Use the kernel-smoothed local-linear estimator
    #[arg(long)]
    smooth: bool,
    /// Fixed smoothing bandwidth
    #[arg(long, requires = "smooth")]
    bandwidth: Option<f64>,
    /// Candidate bandwidths for cross-validation, comma-separated
    #[arg(long, requires = "smooth", conflicts_with = "bandwidth")]
    bw_grid: Option<String>,
    /// Cross-validation folds
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PermuteArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Statistic: d=<distance> or window=<lo>:<hi>
    #[arg(long)]
    stat: String,
    /// Number of assignment redraws
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Tail: upper, lower, or two
    #[arg(long, default_value = "two")]
    tail: String,
    /// Randomization seed (required for reproducibility)
    #[arg(long)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene kind: additive, interactive, or null
    #[arg(long)]
    kind: String,
    /// Number of intervention points (perfect square)
    #[arg(long, default_value_t = 64)]
    n_points: usize,
    /// Raster cells per side
    #[arg(long, default_value_t = 80)]
    grid: usize,
    /// Seed fixing the scene (baseline phases, unit multipliers)
    #[arg(long, default_value_t = 0)]
    scene_seed: u64,
    /// Assignment design: bernoulli:<p> or complete:<n1>
    #[arg(long, default_value = "bernoulli:0.5")]
    design: String,
    /// Largest evaluation distance
    #[arg(long, default_value_t = 4.0)]
    dmax: f64,
    /// Distance step
    #[arg(long, default_value_t = 1.0)]
    dstep: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Number of replicated assignments
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Confidence level
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Randomization seed for the replicate draws
    #[arg(long)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Truth mode: analytic, enumerate, or mc:<draws>
    #[arg(long)]
    mode: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Permute(a) => cmd_permute(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Degenerate => 4,
            })
        }
    }
}

fn parse_distances(spec: &str, kappa: u32) -> Result<DistanceGrid> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(AmrError::InvalidInput(format!(
            "bad --distances `{spec}`; expected MIN:MAX:STEP"
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| AmrError::InvalidInput(format!("cannot parse distance `{s}`")))
    };
    DistanceGrid::from_range(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?, kappa)
}

fn parse_crit(spec: &str) -> Result<CriticalValue> {
    if spec == "normal" {
        return Ok(CriticalValue::Normal);
    }
    if let Some(dof) = spec.strip_prefix("t:") {
        let dof: f64 = dof
            .parse()
            .map_err(|_| AmrError::InvalidInput(format!("cannot parse dof `{dof}`")))?;
        if !(dof > 0.0) {
            return Err(AmrError::InvalidInput(format!("dof must be positive, got {dof}")));
        }
        return Ok(CriticalValue::StudentT { dof });
    }
    Err(AmrError::InvalidInput(format!(
        "bad --crit `{spec}`; expected normal or t:<dof>"
    )))
}

fn parse_tail(spec: &str) -> Result<Tail> {
    match spec {
        "upper" => Ok(Tail::Upper),
        "lower" => Ok(Tail::Lower),
        "two" => Ok(Tail::Two),
        other => Err(AmrError::InvalidInput(format!(
            "bad --tail `{other}`; expected upper, lower, or two"
        ))),
    }
}

fn parse_stat(spec: &str) -> Result<PermutationStatistic> {
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| AmrError::InvalidInput(format!("cannot parse distance `{s}`")))
    };
    if let Some(d) = spec.strip_prefix("d=") {
        return Ok(PermutationStatistic::AmrAtDistance(parse(d)?));
    }
    if let Some(w) = spec.strip_prefix("window=") {
        if let Some((lo, hi)) = w.split_once(':') {
            return Ok(PermutationStatistic::MeanAmrOver(parse(lo)?, parse(hi)?));
        }
    }
    Err(AmrError::InvalidInput(format!(
        "bad --stat `{spec}`; expected d=<distance> or window=<lo>:<hi>"
    )))
}

fn parse_kind(spec: &str) -> Result<SceneKind> {
    match spec {
        "additive" => Ok(SceneKind::Additive),
        "interactive" => Ok(SceneKind::Interactive),
        "null" => Ok(SceneKind::Null),
        other => Err(AmrError::InvalidInput(format!(
            "bad --kind `{other}`; expected additive, interactive, or null"
        ))),
    }
}

fn read_hband_table(path: &Path) -> Result<HBand> {
    let text = std::fs::read_to_string(path).map_err(|source| AmrError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("d,h")) {
            continue;
        }
        let (d, h) = line.split_once(',').ok_or_else(|| AmrError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("expected `d,h`, got `{line}`"),
        })?;
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| AmrError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("cannot parse `{s}`"),
            })
        };
        rows.push((parse(d)?, parse(h)?));
    }
    if rows.is_empty() {
        return Err(AmrError::InvalidInput(format!(
            "{}: empty h(d) table",
            path.display()
        )));
    }
    Ok(HBand::Table(rows))
}

struct LoadedData {
    pts: InterventionSet,
    z: AssignmentVector,
    design: AssignmentDesign,
    table: amr::CircleAverageTable,
    kappa: u32,
}

fn load_data(args: &DataArgs) -> Result<LoadedData> {
    let grid = RasterGrid::from_ascii_grid(&args.raster)?;
    let pts = InterventionSet::from_csv(&args.points)?;
    let z = AssignmentVector::new(
        pts.assignment()
            .ok_or_else(|| {
                AmrError::InvalidInput(format!(
                    "{}: a `z` column with the observed assignment is required",
                    args.points.display()
                ))
            })?
            .to_vec(),
    )?;
    let design: AssignmentDesign = args.design.parse()?;
    let kappa = args
        .kappa
        .unwrap_or_else(|| DistanceGrid::default_kappa(grid.cell_size()));
    let dg = parse_distances(&args.distances, kappa)?;
    let table = circle_averages(&grid, &pts, &dg)?;
    Ok(LoadedData {
        pts,
        z,
        design,
        table,
        kappa,
    })
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| AmrError::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| AmrError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let crit = parse_crit(&args.crit)?;

    let hband = match (&args.hband, &args.hband_table) {
        (Some(h), None) => Some(HBand::Constant(*h)),
        (None, Some(path)) => Some(read_hband_table(path)?),
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("clap conflict"),
    };

    if hband.is_some() {
        if let AssignmentDesign::Complete { .. } = data.design {
            eprintln!(
                "warning: variance theory assumes a Bernoulli design; \
                 treating complete:<n1> as approximately Bernoulli(n1/n)"
            );
        }
    }

    let curve = if args.smooth {
        let spec = match (&args.bandwidth, &args.bw_grid) {
            (Some(h), None) => SmoothSpec::fixed(*h)?,
            (None, Some(grid)) => {
                let candidates: Vec<f64> = grid
                    .split(',')
                    .map(|s| {
                        s.trim().parse().map_err(|_| {
                            AmrError::InvalidInput(format!("cannot parse bandwidth `{s}`"))
                        })
                    })
                    .collect::<Result<_>>()?;
                SmoothSpec::cross_validated(args.folds, candidates)?
            }
            _ => {
                return Err(AmrError::InvalidInput(
                    "--smooth needs --bandwidth or --bw-grid".into(),
                ))
            }
        };
        let mut cfg_holder = None;
        let inference = hband.as_ref().map(|hb| {
            cfg_holder = Some(InferenceConfig {
                hband: hb.clone(),
                level: args.level,
                edof: false,
                crit,
            });
            (&data.pts, cfg_holder.as_ref().unwrap())
        });
        let inference = inference.map(|(p, c)| (p, &*c as &InferenceConfig));
        let fit = smooth_amr(&data.table, &data.z, &spec, inference)?;
        if !fit.ridged_targets.is_empty() {
            eprintln!(
                "warning: near-singular local fit at distances {:?}; ridge applied",
                fit.ridged_targets
            );
        }
        fit.curve
    } else {
        match &hband {
            Some(hb) => {
                let cfg = InferenceConfig {
                    hband: hb.clone(),
                    level: args.level,
                    edof: args.edof,
                    crit,
                };
                hajek_curve_with_inference(&data.table, &data.z, &data.pts, &cfg)?
            }
            None => estimate_hajek(&data.table, &data.z)?,
        }
    };

    prepare_out(&args.out)?;
    let curve_path = args.out.join("curve.csv");
    write_text(&curve_path, &amr::curve_csv_string(&curve)?)?;
    write_text(
        &args.out.join("curve.json"),
        &amr::json_report("curve", &curve)?,
    )?;

    let mut manifest = RunManifest::new(
        "estimate",
        None,
        serde_json::json!({
            "distances": args.data.distances,
            "kappa": data.kappa,
            "design": args.data.design,
            "hband": hband,
            "level": args.level,
            "edof": args.edof,
            "crit": args.crit,
            "smooth": args.smooth,
            "bandwidth": args.bandwidth,
            "bw_grid": args.bw_grid,
            "folds": args.folds,
        }),
    );
    manifest.inputs = vec![
        args.data.raster.display().to_string(),
        args.data.points.display().to_string(),
    ];
    manifest.outputs = vec![
        curve_path.display().to_string(),
        args.out.join("curve.json").display().to_string(),
    ];
    manifest.write(&args.out.join("manifest.json"))?;
    println!("wrote {}", curve_path.display());
    Ok(())
}

fn cmd_permute(args: PermuteArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let stat = parse_stat(&args.stat)?;
    let tail = parse_tail(&args.tail)?;

    let result = permutation_test(
        &data.table,
        &data.z,
        &data.design,
        stat,
        args.reps,
        args.seed,
        tail,
    )?;

    prepare_out(&args.out)?;
    let out_path = args.out.join("permutation.json");
    write_text(&out_path, &amr::json_report("permutation", &result)?)?;

    let mut manifest = RunManifest::new(
        "permute",
        Some(args.seed),
        serde_json::json!({
            "distances": args.data.distances,
            "kappa": data.kappa,
            "design": args.data.design,
            "stat": args.stat,
            "reps": args.reps,
            "tail": args.tail,
        }),
    );
    manifest.inputs = vec![
        args.data.raster.display().to_string(),
        args.data.points.display().to_string(),
    ];
    manifest.outputs = vec![out_path.display().to_string()];
    manifest.write(&args.out.join("manifest.json"))?;
    println!(
        "observed = {:.6}, p = {:.6} ({} replicates)",
        result.observed, result.p_value, result.replicates
    );
    Ok(())
}

fn scene_from_args(args: &SceneArgs) -> Result<Scene> {
    let spec = SceneSpec {
        kind: parse_kind(&args.kind)?,
        grid_cells: args.grid,
        n_points: args.n_points,
        design: args.design.parse()?,
        scene_seed: args.scene_seed,
        baseline_amplitude: 1.0,
        effect_amplitude: 1.0,
        dmax: args.dmax,
        dstep: args.dstep,
    };
    Scene::build(spec)
}

fn scene_json(args: &SceneArgs) -> serde_json::Value {
    serde_json::json!({
        "kind": args.kind,
        "n_points": args.n_points,
        "grid": args.grid,
        "scene_seed": args.scene_seed,
        "design": args.design,
        "dmax": args.dmax,
        "dstep": args.dstep,
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let scene = scene_from_args(&args.scene)?;
    let report = run_experiment(&scene, args.reps, args.seed, args.level, None)?;

    prepare_out(&args.out)?;
    let out_path = args.out.join("experiment.json");
    write_text(&out_path, &amr::json_report("experiment", &report)?)?;

    let mut manifest = RunManifest::new(
        "simulate",
        Some(args.seed),
        serde_json::json!({
            "scene": scene_json(&args.scene),
            "reps": args.reps,
            "level": args.level,
        }),
    );
    manifest.outputs = vec![out_path.display().to_string()];
    manifest.write(&args.out.join("manifest.json"))?;

    for s in &report.summaries {
        println!(
            "d={:<5} bias={:+.5} mse={:.6} coverage={:.3} edof-coverage={:.3}",
            s.distance, s.bias, s.mse, s.coverage, s.coverage_edof
        );
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let scene = scene_from_args(&args.scene)?;
    let mode = if args.mode == "analytic" {
        TruthMode::AnalyticAdditive
    } else if args.mode == "enumerate" {
        TruthMode::Enumerate
    } else if let Some(m) = args.mode.strip_prefix("mc:") {
        let draws: usize = m
            .parse()
            .map_err(|_| AmrError::InvalidInput(format!("cannot parse draw count `{m}`")))?;
        TruthMode::MonteCarlo(draws)
    } else {
        return Err(AmrError::InvalidInput(format!(
            "bad --mode `{}`; expected analytic, enumerate, or mc:<draws>",
            args.mode
        )));
    };

    let truth = scene.true_amr(mode)?;

    prepare_out(&args.out)?;
    let out_path = args.out.join("truth.json");
    write_text(&out_path, &amr::json_report("truth", &truth)?)?;

    let mut manifest = RunManifest::new(
        "oracle",
        None,
        serde_json::json!({
            "scene": scene_json(&args.scene),
            "mode": args.mode,
        }),
    );
    manifest.outputs = vec![out_path.display().to_string()];
    manifest.write(&args.out.join("manifest.json"))?;

    for (d, v) in truth.distances.iter().zip(&truth.values) {
        println!("d={d:<5} amr={v:+.6}");
    }
    Ok(())
}
