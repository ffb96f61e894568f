//! Input data: the burst catalog and the simulation generators.

mod catalog;
pub mod plots;
mod synthetic;

use thiserror::Error;

pub use catalog::{
    cluster_summary, derive_burst, derived, load_catalog, lower_line, read_catalog, separating_class, upper_line,
    write_summary_csv, Burst, BurstClass, ClusterSummary, ColumnAliases, Derived, DropReason, GrbCatalog, MeanSem,
    VARIABLES,
};
pub use synthetic::{
    entangled_spirals, four_shapes, shapes, spiral_arm, GeneratorParams, LabeledPoints, Shape, SPIRAL_TURNS,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("catalog has no column for {0}")]
    MissingColumn(String),

    #[error("catalog has no valid rows ({rows_read} read)")]
    EmptyCatalog { rows_read: usize },

    #[error("labels cover {found} rows but the catalog has {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("fluence {total_fluence} and T90 {t90} must both be positive")]
    NonPositive { total_fluence: f64, t90: f64 },

    #[error("spiral point count must be even and positive, got {0}")]
    OddN(usize),

    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse { row: usize, column: String, value: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A headed CSV in which every column is numeric, as an M×N matrix.
pub fn read_matrix<R: std::io::Read>(input: R) -> Result<ndarray::Array2<f64>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let n = headers.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let v = field.trim().parse::<f64>().map_err(|_| DataError::Parse {
                row: i + 1,
                column: headers[j].to_string(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(DataError::EmptyCatalog { rows_read: 0 });
    }
    Ok(ndarray::Array2::from_shape_vec((rows, n), values).expect("csv enforces equal row lengths"))
}

pub fn load_matrix(path: impl AsRef<std::path::Path>) -> Result<ndarray::Array2<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Open {
        path: path.display().to_string(),
        source: e,
    })?;
    read_matrix(std::io::BufReader::new(file))
}
