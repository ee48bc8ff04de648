//! Command-line front end: simulate, estimate, tune, evaluate, reproduce.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimators::{estimate_glasso, estimate_mb, estimate_si, estimate_thr, CombinationRule, EdgeSet};
use crate::evaluation::{agreement_percent, hamming, roc_over_path, split_half_reproducibility};
use crate::experiments::{figure1, figure2, table1, DistanceStudyConfig, Figure1Config, Manifest, Table1Config};
use crate::io::{
    format_number, read_coordinates, read_distances, read_edges, read_link_table, read_matrix, write_edges,
    write_instance, write_json,
};
use crate::parallel::with_jobs;
use crate::penalty::{DistanceInfo, LinkFunction};
use crate::simulation::{distance_bernoulli_instance, pa_condnum_instance};
use crate::solver::{DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::tuning::{
    match_edge_count_threshold, oracle_tune, BicGlasso, CalibratedEstimator, CvConfig, CvNeighborhood, GraphicalLasso,
    NeighborhoodSelection, PathEstimator, Thresholding, DEFAULT_FOLDS, DEFAULT_GRID_FLOOR, DEFAULT_GRID_SIZE,
    GLASSO_DEFAULT_TOL,
};

#[derive(Debug, Parser)]
#[command(
    name = "structgraph",
    version,
    about = "Gaussian graphical models with structural side information"
)]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic instance directory.
    Simulate(SimulateArgs),
    /// Estimate a graph from a data file.
    Estimate(EstimateArgs),
    /// Report the tuning curve of a method without writing a graph.
    Tune(TuneArgs),
    /// Score estimates or run an evaluation protocol.
    Evaluate(EvaluateArgs),
    /// Run one of the packaged simulation studies.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    PaCondnum,
    DistanceBernoulli,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub generator: Generator,
    #[arg(long, default_value_t = 116)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Node coordinates for distance-bernoulli; random ones otherwise.
    #[arg(long)]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Si,
    Mb,
    Thr,
    Glasso,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// n x p data matrix (CSV).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, default_value = "and")]
    pub rule: CombinationRule,
    /// power:<k>, identity or table:<file>.
    #[arg(long, default_value = "power:3")]
    pub link: String,
    /// p x 3 node coordinates (CSV).
    #[arg(long, conflicts_with = "dist")]
    pub coords: Option<PathBuf>,
    /// p x p distance matrix (CSV).
    #[arg(long)]
    pub dist: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_FLOOR)]
    pub grid_floor: f64,
    /// Scale every column to unit variance before estimation. Columns are
    /// always centered.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Seed of the cross-validation folds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use this scale for every node instead of cross-validation (si, mb).
    #[arg(long)]
    pub scale_all: Option<f64>,
    /// Graphical-lasso penalty instead of BIC selection.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Partial-correlation threshold (thr).
    #[arg(long, conflicts_with = "match_edges")]
    pub threshold: Option<f64>,
    /// Pick the threshold that keeps this many edges (thr).
    #[arg(long)]
    pub match_edges: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tune against a known edge list (Hamming oracle) instead of
    /// cross-validation or BIC.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Hamming,
    Agreement,
    Roc,
    Reproducibility,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    #[arg(long)]
    pub seed: u64,
    /// Estimated edge list (hamming, agreement).
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// True or reference edge list.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Number of nodes for edge-list metrics.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub splits: usize,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, default_value = "and")]
    pub rule: CombinationRule,
    #[arg(long, default_value = "power:3")]
    pub link: String,
    #[arg(long, conflicts_with = "dist")]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub dist: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_FLOOR)]
    pub grid_floor: f64,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Figure1,
    Figure2,
    #[value(name = "table1-sim")]
    Table1Sim,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicate counts as key=value: reps (figure1 replicates, figure2 and
    /// table1-sim instances) and splits (table1-sim). Repeatable.
    #[arg(long)]
    pub scale: Vec<String>,
    /// Sample sizes for figure1, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit status for an error: 2 for configuration and input
/// problems, 3 when more samples are needed, 4 on solver non-convergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::RequiresMoreSamples { .. } => 3,
        Error::DidNotConverge { .. } | Error::GlassoDidNotConverge { .. } | Error::ConvergenceFailure { .. } => 4,
        Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::NotSymmetric { .. }
        | Error::Csv(_)
        | Error::Json(_)
        | Error::AllWeightsZero { .. }
        | Error::EmptyTruth
        | Error::LengthMismatch(..) => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs;
    with_jobs(jobs, || match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Tune(a) => tune(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Reproduce(a) => reproduce(a),
    })
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn provenance(out: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    write_json(
        &out.join("provenance.json"),
        &json!({
            "tool": "structgraph",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
        }),
    )
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.p < 2 {
        return Err(config_error(format!("--p must be at least 2, got {}", a.p)));
    }
    if a.n < 1 {
        return Err(config_error("--n must be at least 1"));
    }
    let inst = match a.generator {
        Generator::PaCondnum => {
            if a.coords.is_some() {
                return Err(config_error("--coords only applies to distance-bernoulli"));
            }
            pa_condnum_instance(a.p, a.n, a.seed)?
        }
        Generator::DistanceBernoulli => {
            let coords = a.coords.as_deref().map(read_coordinates).transpose()?;
            if let Some(c) = &coords {
                if c.dim() != a.p {
                    return Err(config_error(format!(
                        "--coords has {} rows but --p is {}",
                        c.dim(),
                        a.p
                    )));
                }
            }
            distance_bernoulli_instance(a.p, a.n, a.seed, coords)?
        }
    };
    write_instance(&a.out, &inst)
}

struct Loaded {
    data: DataMatrix,
    side: Option<(DistanceInfo, LinkFunction)>,
}

fn parse_link(spec: &str) -> Result<LinkFunction> {
    match spec.strip_prefix("table:") {
        Some(file) => Ok(LinkFunction::Table(read_link_table(Path::new(file))?)),
        None => spec.parse(),
    }
}

fn load_side(
    method: Method,
    link: &str,
    coords: Option<&Path>,
    dist: Option<&Path>,
    p: usize,
) -> Result<Option<(DistanceInfo, LinkFunction)>> {
    if method != Method::Si {
        return Ok(None);
    }
    let d = match (coords, dist) {
        (Some(c), None) => read_coordinates(c)?,
        (None, Some(d)) => read_distances(d)?,
        _ => return Err(config_error("--method si needs exactly one of --coords or --dist")),
    };
    if d.dim() != p {
        return Err(Error::DimensionMismatch {
            what: "side information nodes",
            expected: p,
            found: d.dim(),
        });
    }
    Ok(Some((d, parse_link(link)?)))
}

fn load_data(path: &Path, standardize: bool) -> Result<DataMatrix> {
    let data = DataMatrix::new(read_matrix(path)?)?;
    if data.n_samples() < 2 || data.n_nodes() < 2 {
        return Err(config_error(format!(
            "--data needs at least 2 rows and 2 columns, got {} x {}",
            data.n_samples(),
            data.n_nodes()
        )));
    }
    Ok(if standardize { data.standardized() } else { data })
}

fn load(input: &InputArgs) -> Result<Loaded> {
    let data = load_data(&input.data, input.standardize)?;
    let side = load_side(
        input.method,
        &input.link,
        input.coords.as_deref(),
        input.dist.as_deref(),
        data.n_nodes(),
    )?;
    Ok(Loaded { data, side })
}

fn selection(
    method: Method,
    rule: CombinationRule,
    side: &Option<(DistanceInfo, LinkFunction)>,
) -> NeighborhoodSelection {
    match side {
        Some((d, f)) if method == Method::Si => NeighborhoodSelection::si(d.clone(), f.clone(), rule),
        _ => NeighborhoodSelection::mb(rule),
    }
}

fn path_estimator(
    method: Method,
    rule: CombinationRule,
    side: &Option<(DistanceInfo, LinkFunction)>,
) -> Box<dyn PathEstimator> {
    match method {
        Method::Si | Method::Mb => Box::new(selection(method, rule, side)),
        Method::Thr => Box::new(Thresholding),
        Method::Glasso => Box::new(GraphicalLasso::default()),
    }
}

fn calibrated(
    method: Method,
    rule: CombinationRule,
    side: &Option<(DistanceInfo, LinkFunction)>,
    cv: CvConfig,
) -> Result<Box<dyn CalibratedEstimator>> {
    match method {
        Method::Si | Method::Mb => Ok(Box::new(CvNeighborhood {
            selection: selection(method, rule, side),
            cv,
        })),
        Method::Glasso => Ok(Box::new(BicGlasso {
            grid_size: cv.grid_size,
            grid_floor_ratio: cv.grid_floor_ratio,
            ..BicGlasso::default()
        })),
        Method::Thr => Err(config_error("thr has no self-calibration; use si, mb or glasso")),
    }
}

fn cv_config(seed: u64, input: &InputArgs) -> CvConfig {
    CvConfig {
        folds: input.folds,
        seed,
        grid_size: input.grid_size,
        grid_floor_ratio: input.grid_floor,
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Calibration {
    CrossValidation {
        nodes: Vec<crate::tuning::CvResult>,
    },
    FixedScale {
        scale: f64,
    },
    Bic {
        result: crate::tuning::BicResult,
    },
    Lambda {
        lambda: f64,
    },
    Threshold {
        threshold: f64,
        target_edges: Option<usize>,
    },
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let started = Instant::now();
    let input = &a.input;
    let Loaded { data, side } = load(input)?;
    let (n, p) = (data.n_samples(), data.n_nodes());
    let (edges, calibration) = match input.method {
        Method::Si | Method::Mb => {
            if a.lambda.is_some() || a.threshold.is_some() || a.match_edges.is_some() {
                return Err(config_error(
                    "--lambda, --threshold and --match-edges do not apply to si or mb",
                ));
            }
            match a.scale_all {
                Some(s) if !(s.is_finite() && s >= 0.0) => {
                    return Err(config_error(format!(
                        "--scale-all must be a nonnegative number, got {s}"
                    )))
                }
                Some(s) => {
                    let scales = vec![s; p];
                    let edges = match &side {
                        Some((d, f)) => estimate_si(&data, d, f, &scales, input.rule)?,
                        None => estimate_mb(&data, &scales, input.rule)?,
                    };
                    (edges, Calibration::FixedScale { scale: s })
                }
                None => {
                    let est = CvNeighborhood {
                        selection: selection(input.method, input.rule, &side),
                        cv: cv_config(a.seed, input),
                    };
                    let fit = est.fit(&data)?;
                    (fit.edges, Calibration::CrossValidation { nodes: fit.nodes })
                }
            }
        }
        Method::Thr => {
            if a.scale_all.is_some() || a.lambda.is_some() {
                return Err(config_error("--scale-all and --lambda do not apply to thr"));
            }
            let threshold = match (a.threshold, a.match_edges) {
                (Some(t), None) => t,
                (None, Some(k)) => match_edge_count_threshold(&data, k)?,
                _ => return Err(config_error("--method thr needs --threshold or --match-edges")),
            };
            let edges = estimate_thr(&data, threshold)?;
            (
                edges,
                Calibration::Threshold {
                    threshold,
                    target_edges: a.match_edges,
                },
            )
        }
        Method::Glasso => {
            if a.scale_all.is_some() || a.threshold.is_some() || a.match_edges.is_some() {
                return Err(config_error(
                    "--scale-all, --threshold and --match-edges do not apply to glasso",
                ));
            }
            match a.lambda {
                Some(l) => {
                    let fit = estimate_glasso(&data, l, GLASSO_DEFAULT_TOL, DEFAULT_MAX_SWEEPS)?;
                    (fit.edges, Calibration::Lambda { lambda: l })
                }
                None => {
                    let est = BicGlasso {
                        grid_size: input.grid_size,
                        grid_floor_ratio: input.grid_floor,
                        ..BicGlasso::default()
                    };
                    let result = est.fit(&data)?;
                    (result.fit.edges.clone(), Calibration::Bic { result })
                }
            }
        }
    };
    fs::create_dir_all(&a.out)?;
    write_edges(&a.out.join("edges.csv"), &edges)?;
    write_json(
        &a.out.join("report.json"),
        &json!({
            "method": input.method,
            "rule": input.rule,
            "n": n,
            "p": p,
            "edges": edges.len(),
            "calibration": calibration,
        }),
    )?;
    write_json(
        &a.out.join("timings.json"),
        &json!({ "seconds": started.elapsed().as_secs_f64() }),
    )?;
    provenance(
        &a.out,
        "estimate",
        json!({
            "input": input,
            "seed": a.seed,
            "scale_all": a.scale_all,
            "lambda": a.lambda,
            "threshold": a.threshold,
            "match_edges": a.match_edges,
            "tol": DEFAULT_TOL,
        }),
    )
}

fn tune(a: TuneArgs) -> Result<()> {
    let input = &a.input;
    let Loaded { data, side } = load(input)?;
    fs::create_dir_all(&a.out)?;
    if let Some(truth) = &a.truth {
        let truth = read_edges(truth, data.n_nodes())?;
        let method = path_estimator(input.method, input.rule, &side);
        let grid = method.default_grid(&data, input.grid_size, input.grid_floor)?;
        let r = oracle_tune(method.as_ref(), &data, &truth, &grid)?;
        let mut csv = String::from("index,param,hamming\n");
        for (k, (v, h)) in grid.values().iter().zip(&r.hamming_curve).enumerate() {
            csv.push_str(&format!("{k},{},{h}\n", format_number(*v)));
        }
        fs::write(a.out.join("curve.csv"), csv)?;
        write_json(
            &a.out.join("tuning.json"),
            &json!({ "method": method.name(), "kind": "oracle", "result": r }),
        )?;
    } else {
        match input.method {
            Method::Si | Method::Mb => {
                let est = CvNeighborhood {
                    selection: selection(input.method, input.rule, &side),
                    cv: cv_config(a.seed, input),
                };
                let fit = est.fit(&data)?;
                let mut csv = String::from("node,scale,index\n");
                for r in &fit.nodes {
                    let idx = r.index.map(|i| i.to_string()).unwrap_or_default();
                    csv.push_str(&format!("{},{},{idx}\n", r.node + 1, format_number(r.scale)));
                }
                fs::write(a.out.join("scales.csv"), csv)?;
                write_json(
                    &a.out.join("tuning.json"),
                    &json!({ "method": est.name(), "kind": "cross-validation", "nodes": fit.nodes }),
                )?;
            }
            Method::Glasso => {
                let est = BicGlasso {
                    grid_size: input.grid_size,
                    grid_floor_ratio: input.grid_floor,
                    ..BicGlasso::default()
                };
                let r = est.fit(&data)?;
                let mut csv = String::from("index,lambda,bic,edges\n");
                for (k, ((l, b), e)) in r.grid.iter().zip(&r.bic_curve).zip(&r.edge_counts).enumerate() {
                    csv.push_str(&format!("{k},{},{},{e}\n", format_number(*l), format_number(*b)));
                }
                fs::write(a.out.join("curve.csv"), csv)?;
                write_json(
                    &a.out.join("tuning.json"),
                    &json!({ "method": "glasso", "kind": "bic", "result": r }),
                )?;
            }
            Method::Thr => {
                return Err(config_error(
                    "thr is tuned with --truth (oracle) or estimate --match-edges",
                ));
            }
        }
    }
    provenance(
        &a.out,
        "tune",
        json!({ "input": input, "seed": a.seed, "truth": a.truth }),
    )
}

fn edge_pair(a: &EvaluateArgs) -> Result<(EdgeSet, EdgeSet)> {
    let (Some(e), Some(t)) = (&a.estimate, &a.truth) else {
        return Err(config_error("this metric needs --estimate and --truth"));
    };
    let p = a.nodes.ok_or_else(|| config_error("this metric needs --nodes"))?;
    Ok((read_edges(e, p)?, read_edges(t, p)?))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    match a.metric {
        Metric::Hamming => {
            let (e, t) = edge_pair(&a)?;
            let d = hamming(&e, &t)?;
            write_json(&a.out.join("metric.json"), &json!({ "metric": "hamming", "value": d }))?;
        }
        Metric::Agreement => {
            let (e, t) = edge_pair(&a)?;
            let v = match agreement_percent(&e, &t) {
                Ok(v) => json!({ "metric": "agreement", "value": v }),
                Err(Error::BothEmpty) => json!({ "metric": "agreement", "value": null, "both_empty": true }),
                Err(err) => return Err(err),
            };
            write_json(&a.out.join("metric.json"), &v)?;
        }
        Metric::Roc => {
            let data_path = a
                .data
                .as_deref()
                .ok_or_else(|| config_error("--metric roc needs --data"))?;
            let truth_path = a
                .truth
                .as_deref()
                .ok_or_else(|| config_error("--metric roc needs --truth"))?;
            let method = a.method.ok_or_else(|| config_error("--metric roc needs --method"))?;
            let data = load_data(data_path, a.standardize)?;
            let truth = read_edges(truth_path, data.n_nodes())?;
            let side = load_side(method, &a.link, a.coords.as_deref(), a.dist.as_deref(), data.n_nodes())?;
            let est = path_estimator(method, a.rule, &side);
            let grid = est.default_grid(&data, a.grid_size, a.grid_floor)?;
            let curve = roc_over_path(est.as_ref(), &data, &truth, &grid)?;
            let mut csv = String::from("index,param,fpr,tpr\n");
            for (k, pt) in curve.points.iter().enumerate() {
                let param = pt.param.map(format_number).unwrap_or_default();
                csv.push_str(&format!(
                    "{k},{param},{},{}\n",
                    format_number(pt.fpr),
                    format_number(pt.tpr)
                ));
            }
            fs::write(a.out.join("roc.csv"), csv)?;
            write_json(
                &a.out.join("metric.json"),
                &json!({ "metric": "roc", "method": est.name(), "curve": curve }),
            )?;
        }
        Metric::Reproducibility => {
            let data_path = a
                .data
                .as_deref()
                .ok_or_else(|| config_error("--metric reproducibility needs --data"))?;
            let method = a
                .method
                .ok_or_else(|| config_error("--metric reproducibility needs --method"))?;
            let data = load_data(data_path, a.standardize)?;
            let side = load_side(method, &a.link, a.coords.as_deref(), a.dist.as_deref(), data.n_nodes())?;
            let cv = CvConfig {
                folds: a.folds,
                seed: a.seed,
                grid_size: a.grid_size,
                grid_floor_ratio: a.grid_floor,
            };
            let est = calibrated(method, a.rule, &side, cv)?;
            let report = split_half_reproducibility(est.as_ref(), &data, a.splits, a.seed)?;
            let mut csv = String::from("split,agreement\n");
            for (k, v) in report.per_split.iter().enumerate() {
                csv.push_str(&format!("{k},{}\n", v.map(format_number).unwrap_or_default()));
            }
            fs::write(a.out.join("splits.csv"), csv)?;
            write_json(
                &a.out.join("metric.json"),
                &json!({ "metric": "reproducibility", "report": report }),
            )?;
        }
    }
    provenance(
        &a.out,
        "evaluate",
        json!({
            "metric": a.metric,
            "seed": a.seed,
            "estimate": a.estimate,
            "truth": a.truth,
            "nodes": a.nodes,
            "data": a.data,
            "method": a.method,
            "rule": a.rule,
            "link": a.link,
            "coords": a.coords,
            "dist": a.dist,
            "splits": a.splits,
            "folds": a.folds,
            "grid_size": a.grid_size,
            "grid_floor": a.grid_floor,
            "standardize": a.standardize,
        }),
    )
}

fn parse_scale(items: &[String]) -> Result<(Option<usize>, Option<usize>)> {
    let (mut reps, mut splits) = (None, None);
    for item in items {
        for part in item.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| config_error(format!("--scale expects key=value, got '{part}'")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| config_error(format!("--scale {k} needs a positive integer, got '{v}'")))?;
            if v == 0 {
                return Err(config_error(format!("--scale {k} must be positive")));
            }
            match k.trim() {
                "reps" => reps = Some(v),
                "splits" => splits = Some(v),
                other => {
                    return Err(config_error(format!(
                        "unknown --scale key '{other}' (expected reps or splits)"
                    )))
                }
            }
        }
    }
    Ok((reps, splits))
}

fn reproduce(a: ReproduceArgs) -> Result<()> {
    let (reps, splits) = parse_scale(&a.scale)?;
    fs::create_dir_all(&a.out)?;
    let manifest: Manifest = match a.experiment {
        Experiment::Figure1 => {
            if splits.is_some() {
                return Err(config_error("--scale splits applies to table1-sim only"));
            }
            let mut cfg = Figure1Config::new(a.seed);
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(s) = &a.sizes {
                if s.is_empty() || s.iter().any(|&n| n < 2) {
                    return Err(config_error("--sizes needs sample sizes of at least 2"));
                }
                cfg.sizes = s.clone();
            }
            provenance(&a.out, "reproduce figure1", serde_json::to_value(&cfg)?)?;
            let r = figure1(&cfg)?;
            r.write(&a.out)?;
            r.manifest()
        }
        Experiment::Figure2 => {
            if splits.is_some() || a.sizes.is_some() {
                return Err(config_error("figure2 accepts only --scale reps"));
            }
            let mut cfg = DistanceStudyConfig::figure2(a.seed);
            if let Some(r) = reps {
                cfg.instances = r;
            }
            provenance(&a.out, "reproduce figure2", serde_json::to_value(&cfg)?)?;
            let r = figure2(&cfg)?;
            r.write(&a.out)?;
            r.manifest()
        }
        Experiment::Table1Sim => {
            if a.sizes.is_some() {
                return Err(config_error("--sizes applies to figure1 only"));
            }
            let mut cfg = Table1Config::new(a.seed);
            if let Some(r) = reps {
                cfg.study.instances = r;
            }
            if let Some(s) = splits {
                cfg.splits = s;
            }
            provenance(&a.out, "reproduce table1-sim", serde_json::to_value(&cfg)?)?;
            let r = table1(&cfg)?;
            r.write(&a.out)?;
            r.manifest()
        }
    };
    if manifest.complete() {
        Ok(())
    } else {
        let failed: Vec<String> = manifest
            .cells
            .iter()
            .filter(|c| matches!(c.status, crate::experiments::CellState::Failed(_)))
            .map(|c| c.cell.clone())
            .collect();
        Err(Error::Io(std::io::Error::other(format!(
            "cells failed: {} (completed cells are in manifest.json)",
            failed.join(", ")
        ))))
    }
}
