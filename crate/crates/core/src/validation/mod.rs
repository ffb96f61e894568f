//! Cluster validation: Dunn index, gap statistic, silhouette widths,
//! k-NN leave-one-out error and the adjusted Rand index.

mod gap;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::clustering::{euclidean, rows_of, ClusterError};
use crate::par;

pub use gap::{gap_statistic, gap_statistic_with, GapOptions, GapOutcome, GapRecord, GapResult, DEFAULT_GAP_REFERENCES};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("index needs at least two clusters")]
    SingleCluster,

    #[error("every cluster has zero diameter")]
    ZeroDiameter,

    #[error("no points")]
    EmptyInput,

    #[error("{neighbors} neighbours requested but only {m} points")]
    TooFewPoints { neighbors: usize, m: usize },

    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

pub type Result<T> = std::result::Result<T, ValidationError>;

fn label_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&l| l + 1)
}

fn check_nonempty(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if let Some(l) = sizes.iter().position(|&s| s == 0) {
        return Err(ValidationError::EmptyCluster(l));
    }
    Ok(sizes)
}

/// Dunn index: smallest distance between points of different clusters over
/// the largest cluster diameter.
pub fn dunn_index(points: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let m = points.nrows();
    if m == 0 {
        return Err(ValidationError::EmptyInput);
    }
    if labels.len() != m {
        return Err(ValidationError::LengthMismatch(m, labels.len()));
    }
    let k = label_count(labels);
    if k < 2 {
        return Err(ValidationError::SingleCluster);
    }
    check_nonempty(labels, k)?;
    let rows = rows_of(points);
    // Per-row (min separation, max diameter) against later rows.
    let partial = par::map_range(m, |i| {
        let mut sep = f64::INFINITY;
        let mut diam = 0.0f64;
        for j in i + 1..m {
            let d = euclidean(&rows[i], &rows[j]);
            if labels[i] == labels[j] {
                diam = diam.max(d);
            } else {
                sep = sep.min(d);
            }
        }
        (sep, diam)
    });
    let (sep, diam) = partial
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(s, d), (ps, pd)| (s.min(ps), d.max(pd)));
    if diam == 0.0 {
        return Err(ValidationError::ZeroDiameter);
    }
    Ok(sep / diam)
}

/// Per-point silhouette widths and their mean.
///
/// Points in singleton clusters get width 0, as do points whose
/// intra- and nearest-cluster mean distances are both 0.
pub fn silhouette(dist: &Array2<f64>, labels: &[usize]) -> Result<(Vec<f64>, f64)> {
    let m = dist.nrows();
    if m == 0 {
        return Err(ValidationError::EmptyInput);
    }
    if dist.ncols() != m || labels.len() != m {
        return Err(ValidationError::LengthMismatch(m, labels.len()));
    }
    let k = label_count(labels);
    if k < 2 {
        return Err(ValidationError::SingleCluster);
    }
    let sizes = check_nonempty(labels, k)?;

    let widths = par::map_range(m, |i| {
        let own = labels[i];
        if sizes[own] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        for j in 0..m {
            if j != i {
                sums[labels[j]] += dist[[i, j]];
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom == 0.0 {
            0.0
        } else {
            (b - a) / denom
        }
    });
    let asw = widths.iter().sum::<f64>() / m as f64;
    Ok((widths, asw))
}

/// Leave-one-out error of the k-nearest-neighbour majority vote.
///
/// Neighbours are ordered by (distance, index); a tied vote goes to the
/// smaller label.
pub fn knn_loocv_error(points: ArrayView2<'_, f64>, labels: &[usize], n_neighbors: usize) -> Result<f64> {
    let m = points.nrows();
    if m == 0 {
        return Err(ValidationError::EmptyInput);
    }
    if labels.len() != m {
        return Err(ValidationError::LengthMismatch(m, labels.len()));
    }
    if n_neighbors == 0 {
        return Err(ValidationError::InvalidArgument("n_neighbors must be at least 1".into()));
    }
    if n_neighbors >= m {
        return Err(ValidationError::TooFewPoints { neighbors: n_neighbors, m });
    }
    let k = label_count(labels);
    let rows = rows_of(points);
    let wrong = par::map_range(m, |i| {
        let mut cand: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| (euclidean(&rows[i], &rows[j]), j))
            .collect();
        cand.select_nth_unstable_by(n_neighbors - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; k];
        for &(_, j) in &cand[..n_neighbors] {
            votes[labels[j]] += 1;
        }
        let mut winner = 0;
        for (l, &v) in votes.iter().enumerate() {
            if v > votes[winner] {
                winner = l;
            }
        }
        usize::from(winner != labels[i])
    });
    Ok(wrong.iter().sum::<usize>() as f64 / m as f64)
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ValidationError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    let (ka, kb) = (label_count(a), label_count(b));
    let mut table = vec![0usize; ka * kb];
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n).max(f64::MIN_POSITIVE);
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        // Both partitions trivial (all singletons or one block).
        let (ca, _) = crate::clustering::canonicalize_labels(a);
        let (cb, _) = crate::clustering::canonicalize_labels(b);
        return Ok(if ca == cb { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max_index - expected))
}
