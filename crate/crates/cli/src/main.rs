#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use emcurve::curves::quadrature::TensorGauss;
use emcurve::curves::{
    bias_l1, cell_assignment, em_star_class, empirical_em_curve, empirical_mv_curve,
    empirical_rademacher, model_em_curve_under, oracle_em_star, penalty, project_density,
    AbscissaGrid, Axis, BiasMethod, CurveSamples, DensityOracle, UniformBox,
};
use emcurve::em_fit::{choose_t1, geometric_schedule, geometric_schedule_to_floor, min_density_ratio};
use emcurve::synth::{toy_fixture, HeavyTail2D, PiecewiseConstantDensity};
use emcurve::{
    fit, GridSpec, NestedClusterModel, Partition, PointSet, SparseHistogram, ThresholdSchedule,
};

#[derive(Parser, Debug)]
#[command(name = "emcurve", version, about = "Excess-mass anomaly ranking and EM/MV curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw synthetic points.
    Generate(GenerateArgs),
    /// Fit nested excess-mass clusters on a grid.
    Fit(FitArgs),
    /// Score points with a fitted model and rank them.
    Score(ScoreArgs),
    /// Evaluate an EM or MV curve.
    Curve(CurveArgs),
    /// Rademacher penalty, model bias and per-level EM gaps.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Family {
    HeavyTail,
    Piecewise,
    Toy,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    /// Ground-truth density.
    #[arg(long, value_enum)]
    oracle: Option<Family>,
    /// Piecewise density JSON, required with `--oracle piecewise`.
    #[arg(long)]
    density: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Number of points. The toy family defaults to its 20 fixed points.
    #[arg(long, short = 'n', value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Piecewise density JSON, required for the piecewise family.
    #[arg(long)]
    density: Option<PathBuf>,
    /// Also write the toy box partition as JSON.
    #[arg(long)]
    partition_out: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Side length l of the hypercube grid.
    #[arg(long, conflicts_with = "partition")]
    grid_side: Option<f64>,
    /// Grid origin, comma separated. Defaults to 0.
    #[arg(long, value_delimiter = ',', requires = "grid_side", allow_negative_numbers = true)]
    origin: Option<Vec<f64>>,
    /// Partition JSON (a grid spec or a list of boxes) instead of a grid.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Number of levels N of the geometric schedule.
    #[arg(long, conflicts_with_all = ["t_min", "levels"])]
    depth: Option<usize>,
    /// Extend the schedule until t_N <= t_min. Defaults to the smallest
    /// occupied density ratio.
    #[arg(long, conflicts_with = "levels")]
    t_min: Option<f64>,
    /// Override t_1 (default: largest density ratio).
    #[arg(long, conflicts_with = "levels")]
    t1: Option<f64>,
    /// Explicit decreasing levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[arg(long, short)]
    model: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CurveKind {
    /// Model level sets with masses from `--eval-input`.
    EmEmpirical,
    /// EM* of the oracle density.
    EmOracle,
    /// Best excess mass within the grid class, EM*_F.
    EmClass,
    /// Model level sets with true masses under the oracle.
    EmModel,
    /// MV curve of the model on `--eval-input`.
    MvEmpirical,
}

#[derive(Args, Debug, Serialize)]
struct CurveArgs {
    #[arg(long, value_enum)]
    kind: CurveKind,
    /// Abscissas as lo:hi:count:spacing (linear or log).
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[arg(long, short)]
    model: Option<PathBuf>,
    #[arg(long)]
    eval_input: Option<PathBuf>,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Grid side for `em-class`.
    #[arg(long)]
    grid_side: Option<f64>,
    /// Cube `lo:hi` over which the class is projected.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long, default_value_t = 8)]
    quad_order: usize,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DiagnoseArgs {
    /// Training points the penalty refers to.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Rademacher Monte-Carlo rounds M.
    #[arg(long, default_value_t = 200)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use this Rademacher average instead of estimating it.
    #[arg(long)]
    rademacher_override: Option<f64>,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Cube `lo:hi` for the bias integral.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long, default_value_t = 8)]
    quad_order: usize,
    #[arg(long, default_value_t = 2)]
    quad_subdivisions: usize,
    /// Estimate the bias by Monte Carlo with this many draws instead.
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long, short)]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<emcurve::Error> for Failure {
    fn from(e: emcurve::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Score(a) => score(a),
        Command::Curve(a) => curve(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("EM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("EM_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Writes `<output>.config.json` with the resolved parameters.
fn echo_config(output: &Path, command: &str, args: &impl Serialize, extra: serde_json::Value) -> Outcome {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let config = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "resolved": extra,
        "timestamp": timestamp,
    });
    let mut path = output.as_os_str().to_owned();
    path.push(".config.json");
    std::fs::write(PathBuf::from(path), serde_json::to_string_pretty(&config)? + "\n")?;
    Ok(())
}

/// An oracle with a bounded region holding its mass (or most of it).
struct Loaded {
    oracle: Box<dyn DensityOracle>,
    region: UniformBox,
}

fn load_oracle(family: Family, density: Option<&Path>) -> Outcome<Loaded> {
    let (oracle, region): (Box<dyn DensityOracle>, UniformBox) = match family {
        Family::HeavyTail => (Box::new(HeavyTail2D), UniformBox::cube(2, -20.0, 20.0)?),
        Family::Toy => (
            Box::new(toy_fixture().mixture()),
            UniformBox::new(vec![-1.0, 0.0], vec![2.0, 1.5])?,
        ),
        Family::Piecewise => {
            let path = density.ok_or_else(|| usage("the piecewise family needs --density"))?;
            let d = PiecewiseConstantDensity::read_json_path(path)?;
            let (lo, hi) = d.support_bounds();
            (Box::new(d), UniformBox::new(lo, hi)?)
        }
    };
    Ok(Loaded { oracle, region })
}

fn require_oracle(args: &OracleArgs) -> Outcome<Loaded> {
    let family = args.oracle.ok_or_else(|| usage("this command needs --oracle"))?;
    load_oracle(family, args.density.as_deref())
}

/// `--region lo:hi` as a cube, or the oracle's default region.
fn region_for(s: Option<&str>, loaded: &Loaded) -> Outcome<UniformBox> {
    let Some(s) = s else {
        return Ok(loaded.region.clone());
    };
    let nums: Vec<f64> = s.split(':').filter_map(|p| p.trim().parse().ok()).collect();
    if s.split(':').count() != 2 || nums.len() != 2 {
        return Err(usage(format!("region `{s}` must look like lo:hi")));
    }
    UniformBox::cube(loaded.oracle.dim(), nums[0], nums[1]).map_err(|e| usage(e.to_string()))
}

fn generate(a: &GenerateArgs) -> Outcome {
    let (points, metadata) = match a.family {
        Family::Toy => {
            let toy = toy_fixture();
            if let Some(p) = &a.partition_out {
                std::fs::write(p, serde_json::to_string_pretty(&Partition::Boxes(toy.partition.clone()))? + "\n")?;
            }
            let mixture = toy.mixture();
            let pts = match a.n {
                None => toy.points,
                Some(n) => mixture.sample(n as usize, a.seed),
            };
            (pts, mixture.metadata())
        }
        family => {
            let n = a.n.ok_or_else(|| usage("--n is required for this family"))?;
            let oracle = load_oracle(family, a.density.as_deref())?.oracle;
            (oracle.sample(n as usize, a.seed), oracle.metadata())
        }
    };
    points.write_csv_path(&a.output)?;
    echo_config(&a.output, "generate", a, json!({ "rows": points.len(), "oracle": metadata }))
}

fn fit_cmd(a: &FitArgs) -> Outcome {
    if a.depth == Some(0) {
        return Err(usage("--depth must be at least 1"));
    }
    if a.partition.is_none() && a.grid_side.is_none() {
        return Err(usage("fit needs --grid-side or --partition"));
    }
    let points = PointSet::read_csv_path(&a.input)?;
    let partition: Partition = match (&a.partition, a.grid_side) {
        (Some(p), _) => serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(p)?))?,
        (None, l) => {
            let l = l.unwrap_or_default();
            let grid = match &a.origin {
                Some(o) => GridSpec::with_origin(l, o.clone()),
                None => GridSpec::new(points.dim(), l),
            };
            Partition::Grid(grid.map_err(|e| usage(e.to_string()))?)
        }
    };
    let hist = SparseHistogram::ingest_sharded(partition, &points, rayon::current_num_threads())?;
    let schedule = match &a.levels {
        Some(levels) => ThresholdSchedule::new(levels.clone(), hist.n()).map_err(|e| usage(e.to_string()))?,
        None => {
            let t1 = match a.t1 {
                Some(t) if !(t > 0.0 && t.is_finite()) => return Err(usage("--t1 must be positive")),
                Some(t) => t,
                None => choose_t1(&hist)?,
            };
            match (a.depth, a.t_min) {
                (Some(n), _) => geometric_schedule(t1, hist.n(), n)?,
                (None, t_min) => {
                    let t_min = match t_min {
                        Some(t) if !(t > 0.0) => return Err(usage("--t-min must be positive")),
                        Some(t) => t,
                        None => min_density_ratio(&hist)?,
                    };
                    geometric_schedule_to_floor(t1, hist.n(), t_min, 1_000_000)?
                }
            }
        }
    };
    let model = fit(&hist, &schedule)?;
    model.write_json_path(&a.output)?;
    let sizes: Vec<usize> = (0..model.depth()).map(|k| model.cluster_len(k)).collect();
    println!("t1 = {}", schedule.first());
    println!("N = {}", schedule.len());
    println!("t_N = {}", schedule.last());
    println!("cells = {}, n = {}", hist.len(), hist.n());
    if sizes.len() <= 12 {
        println!("cluster sizes = {sizes:?}");
    } else {
        println!(
            "cluster sizes = {:?} ... {:?}",
            &sizes[..6],
            &sizes[sizes.len() - 6..]
        );
    }
    echo_config(
        &a.output,
        "fit",
        a,
        json!({
            "partition": hist.partition(),
            "n": hist.n(),
            "occupied_cells": hist.len(),
            "t1": schedule.first(),
            "depth": schedule.len(),
            "t_last": schedule.last(),
        }),
    )
}

fn score(a: &ScoreArgs) -> Outcome {
    let model = NestedClusterModel::read_json_path(&a.model)?;
    let points = PointSet::read_csv_path(&a.input)?;
    let scores = model.score_all(&points)?;
    let order = emcurve::em_fit::rank_by_scores(&scores);
    let mut rank = vec![0usize; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut out = String::new();
    out.push_str("index,");
    for j in 0..points.dim() {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("score,rank\n");
    for (i, p) in points.iter().enumerate() {
        out.push_str(&i.to_string());
        for v in p {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push_str(&format!(",{},{}\n", scores[i], rank[i]));
    }
    std::fs::write(&a.output, out)?;
    echo_config(&a.output, "score", a, json!({ "rows": points.len(), "depth": model.depth() }))
}

fn read_model(path: Option<&PathBuf>) -> Outcome<NestedClusterModel> {
    let path = path.ok_or_else(|| usage("this curve needs --model"))?;
    Ok(NestedClusterModel::read_json_path(path)?)
}

fn read_eval(path: Option<&PathBuf>) -> Outcome<PointSet> {
    let path = path.ok_or_else(|| usage("this curve needs --eval-input"))?;
    Ok(PointSet::read_csv_path(path)?)
}

fn curve(a: &CurveArgs) -> Outcome {
    let grid: AbscissaGrid = a.grid.parse().map_err(|e: emcurve::Error| usage(e.to_string()))?;
    let xs = grid.values();
    if a.quad_order == 0 {
        return Err(usage("--quad-order must be positive"));
    }
    match a.kind {
        CurveKind::MvEmpirical => {
            if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                return Err(usage(format!("mass level {x} is outside (0, 1]")));
            }
        }
        _ => {
            if let Some(x) = xs.iter().find(|x| !(**x > 0.0)) {
                return Err(usage(format!("level {x} must be positive")));
            }
        }
    }
    let quad = TensorGauss::new(a.quad_order, 1);
    let samples = match a.kind {
        CurveKind::EmEmpirical => {
            empirical_em_curve(&read_model(a.model.as_ref())?, &read_eval(a.eval_input.as_ref())?, &xs)?
        }
        CurveKind::MvEmpirical => {
            empirical_mv_curve(&read_model(a.model.as_ref())?, &read_eval(a.eval_input.as_ref())?, &xs)?
        }
        CurveKind::EmOracle => {
            let loaded = require_oracle(&a.oracle)?;
            let pts = xs
                .iter()
                .map(|&t| Ok((t, oracle_em_star(loaded.oracle.as_ref(), t)?)))
                .collect::<Outcome<Vec<_>>>()?;
            CurveSamples::new(Axis::Threshold, pts)?
        }
        CurveKind::EmModel => {
            let loaded = require_oracle(&a.oracle)?;
            model_em_curve_under(&read_model(a.model.as_ref())?, loaded.oracle.as_ref(), &xs, &quad)?
        }
        CurveKind::EmClass => {
            let loaded = require_oracle(&a.oracle)?;
            let l = a.grid_side.ok_or_else(|| usage("em-class needs --grid-side"))?;
            let spec = GridSpec::new(loaded.oracle.dim(), l).map_err(|e| usage(e.to_string()))?;
            let region = region_for(a.region.as_deref(), &loaded)?;
            let projected = project_density(loaded.oracle.as_ref(), &spec, &region, &quad)?;
            let pts = xs
                .iter()
                .map(|&t| Ok((t, em_star_class(&projected, t)?)))
                .collect::<Outcome<Vec<_>>>()?;
            CurveSamples::new(Axis::Threshold, pts)?
        }
    };
    samples.write_csv_path(&a.output)?;
    echo_config(&a.output, "curve", a, json!({ "abscissas": xs.len(), "grid": grid }))
}

#[derive(Serialize)]
struct LevelGap {
    level: usize,
    t: f64,
    em_star: f64,
    em_model: f64,
    gap: f64,
    within_two_phi: bool,
}

fn diagnose(a: &DiagnoseArgs) -> Outcome {
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(usage("--delta must lie in (0, 1)"));
    }
    if a.rounds == 0 {
        return Err(usage("--rounds must be at least 1"));
    }
    if a.quad_order == 0 || a.quad_subdivisions == 0 {
        return Err(usage("quadrature order and subdivisions must be positive"));
    }
    if let Some(r) = a.rademacher_override {
        if !(r >= 0.0) {
            return Err(usage("--rademacher-override must be nonnegative"));
        }
    }
    let model = NestedClusterModel::read_json_path(&a.model)?;
    let points = PointSet::read_csv_path(&a.input)?;
    let n = points.len() as u64;
    if n == 0 {
        return Err(Failure::Data("no points".into()));
    }
    let rademacher = match a.rademacher_override {
        Some(r) => json!({ "mean": r, "overridden": true }),
        None => {
            let est = empirical_rademacher(&cell_assignment(model.partition(), &points)?, a.rounds, a.seed)?;
            json!({ "mean": est.mean, "std_error": est.std_error, "rounds": est.rounds, "seed": a.seed })
        }
    };
    let r = rademacher["mean"].as_f64().unwrap_or(0.0);
    let phi = penalty(r, n, a.delta)?;

    let mut report = json!({
        "n": n,
        "delta": a.delta,
        "rademacher": rademacher,
        "penalty": phi,
    });
    if a.oracle.oracle.is_some() {
        let loaded = require_oracle(&a.oracle)?;
        let oracle = &loaded.oracle;
        let quad = TensorGauss::new(a.quad_order, a.quad_subdivisions);
        let curve = model_em_curve_under(&model, oracle.as_ref(), model.levels(), &quad)?;
        let gaps = curve
            .points
            .iter()
            .enumerate()
            .map(|(k, &(t, em_model))| {
                let em_star = oracle_em_star(oracle.as_ref(), t)?;
                let gap = em_star - em_model;
                Ok(LevelGap { level: k + 1, t, em_star, em_model, gap, within_two_phi: gap <= 2.0 * phi })
            })
            .collect::<Outcome<Vec<_>>>()?;
        report["level_gaps"] = serde_json::to_value(gaps)?;
        if let Some(grid) = model.partition().as_grid() {
            let region = region_for(a.region.as_deref(), &loaded)?;
            let method = match a.mc_samples {
                Some(samples) => BiasMethod::MonteCarlo { samples, seed: a.seed },
                None => BiasMethod::Quadrature { order: a.quad_order, subdivisions: a.quad_subdivisions },
            };
            report["bias"] = serde_json::to_value(bias_l1(oracle.as_ref(), grid, &region, method)?)?;
            report["region"] = json!({ "lo": region.lo(), "hi": region.hi() });
        }
    }
    std::fs::write(&a.output, serde_json::to_string_pretty(&report)? + "\n")?;
    echo_config(&a.output, "diagnose", a, json!({ "penalty": phi }))
}
