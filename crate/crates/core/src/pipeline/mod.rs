//! The grid-search protocol: standardize, derive scale candidates from a
//! BCa interval, fit KPCA for every kernel in the grid, add components while
//! the Dunn index improves, and report the best cell.

mod report;
mod robustness;
mod search;

use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{BootstrapError, DEFAULT_REPLICATES};
use crate::data::{load_catalog, load_matrix, ColumnAliases, DataError, GrbCatalog};
use crate::kernels::{ExponentValue, KernelError, KernelSpec};
use crate::kpca::EigenSolver;
use crate::validation::{ValidationError, DEFAULT_GAP_REFERENCES};

pub use report::{write_cells_csv, write_scores_csv};
pub use robustness::{robustness_check, AswRow, Robustness, DEFAULT_NEIGHBORS};
pub use search::{
    evaluate_cell, kpc_search, kpc_search_with, run_pipeline, CellOutcome, GridCell, PipelineReport,
};

/// Exponents searched for the proposed kernel.
pub const DEFAULT_P_VALUES: [f64; 4] = [2.0, 1.0, 1.0 / 1.5, 0.5];
pub const DEFAULT_MAX_KPCS: usize = 6;
pub const DEFAULT_KMAX: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("column {0} is constant and cannot be standardized")]
    ConstantColumn(usize),

    #[error("no rows to analyse")]
    EmptyData,

    #[error("empty hyperparameter grid: {0}")]
    EmptyGrid(String),

    #[error("every grid cell failed")]
    AllCellsFailed,

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Kernel(#[from] KernelError),

    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),

    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error(transparent)]
    Cluster(#[from] crate::clustering::ClusterError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Optional restrictions of the default kernel grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOverrides {
    /// Kernel families to keep, by config name (`proposed`, `rbf`, …).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<ExponentValue>>,
    /// Fixed scale candidates; when given, no bootstrap is run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polynomial_degrees: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub bootstrap_replicates: usize,
    pub alpha: f64,
    pub gap_references: usize,
    /// k-means restarts inside the gap statistic.
    pub gap_restarts: usize,
    pub kmax: usize,
    /// k-means restarts for the final partition of a cell.
    pub restarts: usize,
    pub max_kpcs: usize,
    pub neighbors: usize,
    pub solver: EigenSolver,
    pub format: DataFormat,
    pub grid: GridOverrides,
    pub columns: ColumnAliases,
}

/// How the `data` file is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// Burst catalog with the nine standard variables.
    #[default]
    Catalog,
    /// Any all-numeric CSV; every column is a variable.
    Matrix,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: 0,
            bootstrap_replicates: DEFAULT_REPLICATES,
            alpha: 0.05,
            gap_references: DEFAULT_GAP_REFERENCES,
            gap_restarts: 10,
            kmax: DEFAULT_KMAX,
            restarts: crate::clustering::DEFAULT_RESTARTS,
            max_kpcs: DEFAULT_MAX_KPCS,
            neighbors: DEFAULT_NEIGHBORS,
            solver: EigenSolver::default(),
            format: DataFormat::default(),
            grid: GridOverrides::default(),
            columns: ColumnAliases::default(),
        }
    }
}

impl PipelineConfig {
    /// Read a JSON config. A relative `data` path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config: PipelineConfig = serde_json::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let (Some(data), Some(dir)) = (&config.data, path.parent()) {
            if data.is_relative() {
                config.data = Some(dir.join(data));
            }
        }
        Ok(config)
    }
}

/// The analysis matrix, and the catalog it came from when there is one.
#[derive(Debug, Clone)]
pub struct Input {
    pub matrix: Array2<f64>,
    pub catalog: Option<GrbCatalog>,
}

pub fn load_input(config: &PipelineConfig) -> Result<Input> {
    let path = config.data.as_ref().ok_or_else(|| PipelineError::Config {
        path: "<config>".into(),
        message: "no data file given".into(),
    })?;
    match config.format {
        DataFormat::Catalog => {
            let catalog = load_catalog(path, &config.columns)?;
            Ok(Input {
                matrix: catalog.feature_matrix(),
                catalog: Some(catalog),
            })
        }
        DataFormat::Matrix => Ok(Input {
            matrix: load_matrix(path)?,
            catalog: None,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub data: Array2<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Center every column and scale it to unit sample standard deviation.
pub fn standardize(data: ArrayView2<'_, f64>) -> Result<Standardized> {
    let (m, n) = data.dim();
    if m < 2 {
        return Err(PipelineError::EmptyData);
    }
    let mut means = Vec::with_capacity(n);
    let mut sds = Vec::with_capacity(n);
    for (j, col) in data.columns().into_iter().enumerate() {
        let mean = col.sum() / m as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) {
            return Err(PipelineError::ConstantColumn(j));
        }
        means.push(mean);
        sds.push(sd);
    }
    let z = Array2::from_shape_fn((m, n), |(i, j)| (data[[i, j]] - means[j]) / sds[j]);
    Ok(Standardized { data: z, means, sds })
}

/// The default roster for scale candidates `sigmas` on `n_features`
/// variables: proposed kernels for every (σ, p), linear and quadratic
/// polynomial, RBF and Laplacian for every σ, and one sigmoid.
pub fn build_grid(sigmas: &[f64], n_features: usize) -> Result<Vec<KernelSpec>> {
    build_grid_with(sigmas, n_features, &GridOverrides::default())
}

pub fn build_grid_with(sigmas: &[f64], n_features: usize, overrides: &GridOverrides) -> Result<Vec<KernelSpec>> {
    let sigmas = overrides.sigmas.as_deref().unwrap_or(sigmas);
    if sigmas.is_empty() {
        return Err(PipelineError::EmptyGrid("no scale candidates".into()));
    }
    let p_values: Vec<f64> = match &overrides.p_values {
        Some(v) => v.iter().map(|p| p.value()).collect(),
        None => DEFAULT_P_VALUES.to_vec(),
    };
    let degrees = overrides.polynomial_degrees.clone().unwrap_or_else(|| vec![1, 2]);
    let keep = |family: &str| {
        overrides
            .families
            .as_ref()
            .is_none_or(|f| f.iter().any(|x| x.eq_ignore_ascii_case(family)))
    };

    let mut grid = Vec::new();
    if keep("proposed") {
        for &s in sigmas {
            for &p in &p_values {
                grid.push(KernelSpec::proposed_uniform(p, s, n_features)?);
            }
        }
    }
    if keep("polynomial") {
        for &d in &degrees {
            grid.push(KernelSpec::polynomial(0.0, d)?);
        }
    }
    if keep("rbf") {
        for &s in sigmas {
            grid.push(KernelSpec::rbf(s)?);
        }
    }
    if keep("laplacian") {
        for &s in sigmas {
            grid.push(KernelSpec::laplacian(s)?);
        }
    }
    if keep("sigmoid") {
        grid.push(KernelSpec::sigmoid(1.0, 0.0)?);
    }
    if grid.is_empty() {
        return Err(PipelineError::EmptyGrid("family filter removed every kernel".into()));
    }
    Ok(grid)
}
