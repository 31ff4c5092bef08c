use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupling::DEFAULT_MARGIN_TOL;
use crate::error::{Error, Result};
use crate::graph::{cycle_graph, knn_graph, path_graph, read_points, Graph, WeightMode};
use crate::operators::DfrftMode;
use crate::transforms::Family;
use crate::wiener::{default_lambda_grid, TrainConfig};

use super::synth::random_points;

/// How to obtain one factor graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Path {
        n: usize,
    },
    Cycle {
        n: usize,
    },
    /// k-NN graph over a points CSV (`id,x1,...`).
    Knn {
        points_file: PathBuf,
        k: usize,
        #[serde(default)]
        weights: WeightMode,
    },
    /// k-NN graph over `n` seeded uniform points in the unit square.
    RandomKnn {
        n: usize,
        k: usize,
        seed: u64,
        #[serde(default)]
        weights: WeightMode,
    },
    /// Edge-list CSV (`src,dst,weight`).
    EdgeList {
        file: PathBuf,
        #[serde(default)]
        n: Option<usize>,
    },
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphSpec::Path { n } => path_graph(*n),
            GraphSpec::Cycle { n } => cycle_graph(*n),
            GraphSpec::Knn { points_file, k, weights } => {
                let points = read_points(File::open(points_file)?)?;
                knn_graph(&points, *k, *weights)
            }
            GraphSpec::RandomKnn { n, k, seed, weights } => knn_graph(&random_points(*n, *seed), *k, *weights),
            GraphSpec::EdgeList { file, n } => Graph::read_edge_list(File::open(file)?, *n, file.display().to_string()),
        }
    }
}

fn default_spatial() -> GraphSpec {
    GraphSpec::RandomKnn {
        n: 30,
        k: 4,
        seed: 0,
        weights: WeightMode::Unit,
    }
}

fn default_temporal() -> GraphSpec {
    GraphSpec::Path { n: 10 }
}

fn default_sigmas() -> Vec<f64> {
    vec![0.6, 0.9, 1.2]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_families() -> Vec<Family> {
    Family::ALL.to_vec()
}

fn default_bandwidth() -> f64 {
    0.3
}

fn default_margin_tol() -> f64 {
    DEFAULT_MARGIN_TOL
}

/// A denoising sweep over families, noise levels and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_spatial")]
    pub spatial: GraphSpec,
    #[serde(default = "default_temporal")]
    pub temporal: GraphSpec,
    #[serde(default = "default_sigmas")]
    pub sigma_list: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_families")]
    pub families: Vec<Family>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    /// Peak value for PSNR/SSIM; defaults to the largest `|x|` of each clean signal.
    #[serde(default)]
    pub max_value: Option<f64>,
    #[serde(default)]
    pub dfrft_mode: DfrftMode,
    #[serde(default = "default_margin_tol")]
    pub margin_tol: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl BenchmarkConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: BenchmarkConfig = serde_json::from_reader(File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Config("families must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.sigma_list.is_empty() {
            return Err(Error::Config("sigma_list must be nonempty".into()));
        }
        if let Some(s) = self.sigma_list.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("noise level {s} must be finite and non-negative")));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda_grid must be nonempty".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("lambda grid value {l} outside [0, 1]")));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth <= 1.0) {
            return Err(Error::Config(format!("bandwidth must lie in (0, 1], got {}", self.bandwidth)));
        }
        if let Some(m) = self.max_value {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("max_value must be positive, got {m}")));
            }
        }
        if self.margin_tol.is_nan() || self.margin_tol < 0.0 {
            return Err(Error::Config("margin_tol must be non-negative".into()));
        }
        self.train.validate()
    }
}
