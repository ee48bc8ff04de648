//! End-to-end simulation studies: oracle-tuned Hamming distance against
//! sample size, averaged ROC curves on distance-driven graphs, and
//! split-half reproducibility. Every cell runs on its own seed stream, so
//! results do not depend on how many threads execute them.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::CombinationRule;
use crate::evaluation::{average_roc, roc_over_path, split_half_reproducibility, ReproducibilityReport, RocCurve};
use crate::io::{format_number, write_json};
use crate::parallel::map_indexed;
use crate::penalty::LinkFunction;
use crate::rng::stream_seed;
use crate::simulation::{distance_bernoulli_instance, pa_condnum_instance, SimulatedInstance};
use crate::tuning::{
    oracle_tune, BicGlasso, CalibratedEstimator, CvConfig, CvNeighborhood, GraphicalLasso, NeighborhoodSelection,
    PathAnchor, PathEstimator, Thresholding, DEFAULT_FOLDS, DEFAULT_GRID_FLOOR, DEFAULT_GRID_SIZE,
};

pub const FIGURE1_SIZES: [usize; 10] = [50, 100, 200, 400, 600, 800, 1000, 1200, 1400, 1600];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "state", content = "detail")]
pub enum CellState {
    Done,
    /// The method cannot run at this size (thresholding with `n <= p`).
    Unavailable,
    Failed(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub cell: String,
    pub status: CellState,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub cells: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn complete(&self) -> bool {
        self.cells.iter().all(|c| !matches!(c.status, CellState::Failed(_)))
    }
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let sd = if xs.len() > 1 {
        Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Config {
    pub p: usize,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub grid_floor: f64,
}

impl Figure1Config {
    pub fn new(seed: u64) -> Self {
        Self {
            p: 116,
            sizes: FIGURE1_SIZES.to_vec(),
            reps: 20,
            seed,
            grid_size: DEFAULT_GRID_SIZE,
            grid_floor: DEFAULT_GRID_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Cell {
    pub method: String,
    pub n: usize,
    pub status: CellState,
    /// Oracle Hamming distance per completed replicate.
    pub hamming: Vec<usize>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Result {
    pub config: Figure1Config,
    pub methods: Vec<String>,
    pub cells: Vec<Figure1Cell>,
}

impl Figure1Result {
    pub fn cell(&self, method: &str, n: usize) -> Option<&Figure1Cell> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            experiment: "figure1".into(),
            seed: self.config.seed,
            cells: self
                .cells
                .iter()
                .map(|c| ManifestEntry {
                    cell: format!("{}/n={}", c.method, c.n),
                    status: c.status.clone(),
                })
                .collect(),
        }
    }

    /// `heatmap.csv` (methods by sample sizes, mean Hamming), `cells.csv`,
    /// `report.json` and `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut heat = String::from("method");
        for n in &self.config.sizes {
            heat.push_str(&format!(",{n}"));
        }
        heat.push('\n');
        for m in &self.methods {
            heat.push_str(m);
            for &n in &self.config.sizes {
                let c = self.cell(m, n).expect("every cell present");
                let v = match (&c.status, c.mean) {
                    (CellState::Unavailable, _) => "unavailable".to_string(),
                    (_, Some(x)) => format_number(x),
                    (_, None) => "failed".to_string(),
                };
                heat.push_str(&format!(",{v}"));
            }
            heat.push('\n');
        }
        fs::write(dir.join("heatmap.csv"), heat)?;
        let mut cells = String::from("method,n,reps,mean_hamming,sd_hamming,status\n");
        for c in &self.cells {
            let status = match &c.status {
                CellState::Done => "done",
                CellState::Unavailable => "unavailable",
                CellState::Failed(_) => "failed",
            };
            cells.push_str(&format!(
                "{},{},{},{},{},{status}\n",
                c.method,
                c.n,
                c.hamming.len(),
                opt(c.mean),
                opt(c.sd)
            ));
        }
        fs::write(dir.join("cells.csv"), cells)?;
        write_json(&dir.join("report.json"), self)?;
        write_json(&dir.join("manifest.json"), &self.manifest())
    }
}

fn figure1_methods() -> Vec<Box<dyn PathEstimator>> {
    vec![
        Box::new(Thresholding),
        Box::new(NeighborhoodSelection::mb(CombinationRule::Or).with_anchor(PathAnchor::Common)),
        Box::new(NeighborhoodSelection::mb(CombinationRule::And).with_anchor(PathAnchor::Common)),
        Box::new(GraphicalLasso::default()),
    ]
}

type RepOutcome = std::result::Result<usize, CellState>;

/// Oracle-tuned Hamming distance of THR, MB(or), MB(and) and GLASSO on
/// preferential-attachment instances. Replicate `r` uses the same graph
/// and precision at every sample size. Data are standardized per column
/// before estimation.
pub fn figure1(cfg: &Figure1Config) -> Result<Figure1Result> {
    if cfg.reps == 0 || cfg.sizes.is_empty() {
        return Err(Error::InvalidInput(
            "figure1 needs at least one replicate and one sample size".into(),
        ));
    }
    let methods = figure1_methods();
    let names: Vec<String> = methods.iter().map(|m| m.name()).collect();
    let tasks: Vec<(usize, usize)> = (0..cfg.sizes.len())
        .flat_map(|s| (0..cfg.reps).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<Vec<RepOutcome>> = map_indexed(tasks.len(), |t| {
        let (s, r) = tasks[t];
        let inst = match pa_condnum_instance(cfg.p, cfg.sizes[s], stream_seed(cfg.seed, r as u64)) {
            Ok(i) => i,
            Err(e) => return vec![Err(CellState::Failed(e.to_string())); methods.len()],
        };
        let data = inst.data.standardized();
        methods
            .iter()
            .map(|m| {
                let run = || -> Result<usize> {
                    let grid = m.default_grid(&data, cfg.grid_size, cfg.grid_floor)?;
                    Ok(oracle_tune(m.as_ref(), &data, &inst.truth, &grid)?.hamming)
                };
                run().map_err(|e| match e {
                    Error::RequiresMoreSamples { .. } => CellState::Unavailable,
                    other => CellState::Failed(other.to_string()),
                })
            })
            .collect()
    });
    let mut cells = Vec::new();
    for (k, name) in names.iter().enumerate() {
        for (s, &n) in cfg.sizes.iter().enumerate() {
            let reps: Vec<&RepOutcome> = (0..cfg.reps).map(|r| &outcomes[s * cfg.reps + r][k]).collect();
            let hamming: Vec<usize> = reps.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
            let failure = reps.iter().find_map(|o| match o {
                Err(CellState::Failed(m)) => Some(m.clone()),
                _ => None,
            });
            let status = if let Some(m) = failure {
                CellState::Failed(m)
            } else if hamming.is_empty() {
                CellState::Unavailable
            } else {
                CellState::Done
            };
            let xs: Vec<f64> = hamming.iter().map(|&h| h as f64).collect();
            let (mean, sd) = mean_sd(&xs);
            cells.push(Figure1Cell {
                method: name.clone(),
                n,
                status,
                hamming,
                mean,
                sd,
            });
        }
    }
    Ok(Figure1Result {
        config: cfg.clone(),
        methods: names,
        cells,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceStudyConfig {
    pub p: usize,
    pub n: usize,
    pub instances: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub grid_floor: f64,
    pub link_power: f64,
}

impl DistanceStudyConfig {
    pub fn figure2(seed: u64) -> Self {
        Self {
            p: 116,
            n: 210,
            instances: 20,
            seed,
            grid_size: DEFAULT_GRID_SIZE,
            grid_floor: DEFAULT_GRID_FLOOR,
            link_power: 3.0,
        }
    }

    pub fn table1(seed: u64) -> Self {
        Self {
            instances: 10,
            ..Self::figure2(seed)
        }
    }

    fn instance(&self, k: usize) -> Result<SimulatedInstance> {
        distance_bernoulli_instance(self.p, self.n, stream_seed(self.seed, k as u64), None)
    }

    fn link(&self) -> Result<LinkFunction> {
        LinkFunction::power(self.link_power)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodRoc {
    pub method: String,
    pub status: CellState,
    /// AUC of each instance's own curve.
    pub instance_auc: Vec<f64>,
    pub average: Option<RocCurve>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure2Result {
    pub config: DistanceStudyConfig,
    pub methods: Vec<MethodRoc>,
}

impl Figure2Result {
    pub fn method(&self, name: &str) -> Option<&MethodRoc> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            experiment: "figure2".into(),
            seed: self.config.seed,
            cells: self
                .methods
                .iter()
                .map(|m| ManifestEntry {
                    cell: m.method.clone(),
                    status: m.status.clone(),
                })
                .collect(),
        }
    }

    /// `roc.csv` (averaged curves, long format), `auc.csv`, `report.json`
    /// and `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut roc = String::from("method,index,param,fpr,tpr\n");
        let mut auc = String::from("method,auc_average_curve,auc_mean,auc_sd,instances\n");
        for m in &self.methods {
            if let Some(c) = &m.average {
                for (k, pt) in c.points.iter().enumerate() {
                    roc.push_str(&format!(
                        "{},{k},{},{},{}\n",
                        m.method,
                        opt(pt.param),
                        format_number(pt.fpr),
                        format_number(pt.tpr)
                    ));
                }
            }
            let (mean, sd) = mean_sd(&m.instance_auc);
            auc.push_str(&format!(
                "{},{},{},{},{}\n",
                m.method,
                opt(m.average.as_ref().map(|c| c.auc)),
                opt(mean),
                opt(sd),
                m.instance_auc.len()
            ));
        }
        fs::write(dir.join("roc.csv"), roc)?;
        fs::write(dir.join("auc.csv"), auc)?;
        write_json(&dir.join("report.json"), self)?;
        write_json(&dir.join("manifest.json"), &self.manifest())
    }
}

/// Averaged ROC curves of SI (and-rule), MB (and-rule), THR and GLASSO
/// along their default paths on distance-Bernoulli instances.
pub fn figure2(cfg: &DistanceStudyConfig) -> Result<Figure2Result> {
    if cfg.instances == 0 {
        return Err(Error::InvalidInput("figure2 needs at least one instance".into()));
    }
    let link = cfg.link()?;
    let names = ["si-and", "mb-and", "thr", "glasso"];
    let curves: Vec<Vec<Result<RocCurve>>> = map_indexed(cfg.instances, |k| {
        let inst = match cfg.instance(k) {
            Ok(i) => i,
            Err(e) => return names.iter().map(|_| Err(Error::InvalidInput(e.to_string()))).collect(),
        };
        let dist = inst.coordinates.clone().expect("distance instances carry coordinates");
        let methods: Vec<Box<dyn PathEstimator>> = vec![
            Box::new(NeighborhoodSelection::si(dist, link.clone(), CombinationRule::And)),
            Box::new(NeighborhoodSelection::mb(CombinationRule::And)),
            Box::new(Thresholding),
            Box::new(GraphicalLasso::default()),
        ];
        methods
            .iter()
            .map(|m| {
                let grid = m.default_grid(&inst.data, cfg.grid_size, cfg.grid_floor)?;
                roc_over_path(m.as_ref(), &inst.data, &inst.truth, &grid)
            })
            .collect()
    });
    let methods = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut ok = Vec::new();
            let mut failure = None;
            for per_instance in &curves {
                match &per_instance[k] {
                    Ok(c) => ok.push(c.clone()),
                    Err(e) => failure = failure.or_else(|| Some(e.to_string())),
                }
            }
            let average = if ok.is_empty() { None } else { average_roc(&ok).ok() };
            MethodRoc {
                method: name.to_string(),
                status: failure.map_or(CellState::Done, CellState::Failed),
                instance_auc: ok.iter().map(|c| c.auc).collect(),
                average,
            }
        })
        .collect();
    Ok(Figure2Result {
        config: cfg.clone(),
        methods,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Config {
    #[serde(flatten)]
    pub study: DistanceStudyConfig,
    pub splits: usize,
    pub folds: usize,
}

impl Table1Config {
    pub fn new(seed: u64) -> Self {
        Self {
            study: DistanceStudyConfig::table1(seed),
            splits: 20,
            folds: DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReproducibility {
    pub method: String,
    pub status: CellState,
    pub per_instance: Vec<ReproducibilityReport>,
    /// Over every split of every instance with a defined agreement.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub both_empty: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Result {
    pub config: Table1Config,
    pub methods: Vec<MethodReproducibility>,
}

impl Table1Result {
    pub fn method(&self, name: &str) -> Option<&MethodReproducibility> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            experiment: "table1-sim".into(),
            seed: self.config.study.seed,
            cells: self
                .methods
                .iter()
                .map(|m| ManifestEntry {
                    cell: m.method.clone(),
                    status: m.status.clone(),
                })
                .collect(),
        }
    }

    /// `summary.csv` (mean and SD per method), `splits.csv` (one row per
    /// split), `report.json` and `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut summary = String::from("method,mean_agreement,sd_agreement,splits,both_empty\n");
        let mut splits = String::from("method,instance,split,agreement\n");
        for m in &self.methods {
            let counted: usize = m.per_instance.iter().map(|r| r.n_splits).sum();
            summary.push_str(&format!(
                "{},{},{},{counted},{}\n",
                m.method,
                opt(m.mean),
                opt(m.sd),
                m.both_empty
            ));
            for (k, r) in m.per_instance.iter().enumerate() {
                for (s, v) in r.per_split.iter().enumerate() {
                    splits.push_str(&format!("{},{k},{s},{}\n", m.method, opt(*v)));
                }
            }
        }
        fs::write(dir.join("summary.csv"), summary)?;
        fs::write(dir.join("splits.csv"), splits)?;
        write_json(&dir.join("report.json"), self)?;
        write_json(&dir.join("manifest.json"), &self.manifest())
    }
}

/// Split-half reproducibility of cross-validated SI and MB (and-rule) and
/// BIC-tuned GLASSO on distance-Bernoulli instances.
pub fn table1(cfg: &Table1Config) -> Result<Table1Result> {
    let study = &cfg.study;
    if study.instances == 0 || cfg.splits == 0 {
        return Err(Error::InvalidInput(
            "table1-sim needs at least one instance and one split".into(),
        ));
    }
    let link = study.link()?;
    let names = ["si-and", "mb-and", "glasso"];
    let reports: Vec<Vec<Result<ReproducibilityReport>>> = map_indexed(study.instances, |k| {
        let inst = match study.instance(k) {
            Ok(i) => i,
            Err(e) => return names.iter().map(|_| Err(Error::InvalidInput(e.to_string()))).collect(),
        };
        let dist = inst.coordinates.clone().expect("distance instances carry coordinates");
        let task_seed = stream_seed(stream_seed(study.seed, k as u64), 1);
        let cv = CvConfig {
            folds: cfg.folds,
            grid_size: study.grid_size,
            grid_floor_ratio: study.grid_floor,
            ..CvConfig::new(task_seed)
        };
        let methods: Vec<Box<dyn CalibratedEstimator>> = vec![
            Box::new(CvNeighborhood {
                selection: NeighborhoodSelection::si(dist, link.clone(), CombinationRule::And),
                cv,
            }),
            Box::new(CvNeighborhood {
                selection: NeighborhoodSelection::mb(CombinationRule::And),
                cv,
            }),
            Box::new(BicGlasso {
                grid_size: study.grid_size,
                grid_floor_ratio: study.grid_floor,
                ..BicGlasso::default()
            }),
        ];
        methods
            .iter()
            .map(|m| split_half_reproducibility(m.as_ref(), &inst.data, cfg.splits, task_seed))
            .collect()
    });
    let methods = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut per_instance = Vec::new();
            let mut failure = None;
            for r in &reports {
                match &r[k] {
                    Ok(rep) => per_instance.push(rep.clone()),
                    Err(e) => failure = failure.or_else(|| Some(e.to_string())),
                }
            }
            let values: Vec<f64> = per_instance
                .iter()
                .flat_map(|r| r.per_split.iter().flatten().copied())
                .collect();
            let (mean, sd) = mean_sd(&values);
            MethodReproducibility {
                method: name.to_string(),
                status: failure.map_or(CellState::Done, CellState::Failed),
                both_empty: per_instance.iter().map(|r| r.both_empty).sum(),
                per_instance,
                mean,
                sd,
            }
        })
        .collect();
    Ok(Table1Result {
        config: cfg.clone(),
        methods,
    })
}
