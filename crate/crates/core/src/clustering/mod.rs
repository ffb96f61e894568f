//! Partitioning of KPC score matrices: Hartigan–Wong k-means and
//! average-linkage (UPGMA) agglomerative clustering.

mod hierarchical;
mod kmeans;

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hierarchical::{average_linkage, cut_dendrogram, Dendrogram, Merge};
pub use kmeans::{kmeans, kmeans_from_centers, KMeansRun, DEFAULT_RESTARTS};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no points to cluster")]
    EmptyInput,

    #[error("cannot form {k} clusters from {m} points")]
    KTooLarge { k: usize, m: usize },

    #[error("number of clusters must be at least 1")]
    ZeroClusters,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cluster export: {0}")]
    Io(#[from] std::io::Error),

    #[error("cluster export: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ClusterError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ClusterMethod {
    KMeans { seed: u64, restarts: usize },
    Hierarchical { cut_k: usize },
}

/// Point → cluster labels in `0..k`.
///
/// Labels are canonical: cluster 0 is the largest, ties broken by the
/// smallest member index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Total within-cluster sum of squares around cluster means.
    pub within_ss: Option<f64>,
    pub method: ClusterMethod,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "label"])?;
        for (i, l) in self.labels.iter().enumerate() {
            w.write_record([i.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Relabel arbitrary labels into `0..k`, largest cluster first, ties broken
/// by smallest member index. Returns the new labels and `k`.
pub fn canonicalize_labels(raw: &[usize]) -> (Vec<usize>, usize) {
    // (size, first index, raw label)
    let mut groups: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &r) in raw.iter().enumerate() {
        match groups.iter_mut().find(|g| g.2 == r) {
            Some(g) => g.0 += 1,
            None => groups.push((1, i, r)),
        }
    }
    groups.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let labels = raw
        .iter()
        .map(|r| groups.iter().position(|g| g.2 == *r).unwrap())
        .collect();
    (labels, groups.len())
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

pub(crate) fn rows_of(points: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    points.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Pairwise Euclidean distances, exactly symmetric with a zero diagonal.
pub fn distance_matrix(points: ArrayView2<'_, f64>) -> Array2<f64> {
    let rows = rows_of(points);
    let m = rows.len();
    let mut d = Array2::zeros((m, m));
    if let Some(flat) = d.as_slice_mut() {
        crate::par::for_each_row_mut(flat, m, |i, row| {
            for j in i + 1..m {
                row[j] = euclidean(&rows[i], &rows[j]);
            }
        });
    }
    for i in 0..m {
        for j in 0..i {
            d[[i, j]] = d[[j, i]];
        }
    }
    d
}

pub fn within_sum_of_squares(points: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> f64 {
    let rows = rows_of(points);
    within_ss_rows(&rows, labels, k)
}

pub(crate) fn within_ss_rows(rows: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = rows.first().map_or(0, |r| r.len());
    let mut centers = vec![0.0; k * n];
    let mut counts = vec![0usize; k];
    for (row, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (c, v) in centers[l * n..(l + 1) * n].iter_mut().zip(row) {
            *c += v;
        }
    }
    for l in 0..k {
        if counts[l] > 0 {
            for c in &mut centers[l * n..(l + 1) * n] {
                *c /= counts[l] as f64;
            }
        }
    }
    rows.iter()
        .zip(labels)
        .map(|(row, &l)| squared_distance(row, &centers[l * n..(l + 1) * n]))
        .sum()
}
