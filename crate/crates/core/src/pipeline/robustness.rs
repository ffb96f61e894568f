use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::Result;
use crate::clustering::{average_linkage, cut_dendrogram, distance_matrix, ClusterAssignment};
use crate::validation::{adjusted_rand, knn_loocv_error, silhouette, ValidationError};

pub const DEFAULT_NEIGHBORS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AswRow {
    pub k: usize,
    pub asw: f64,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub asw: Vec<AswRow>,
    /// Argmax of the average silhouette width; the smaller k wins ties.
    pub chosen_k: usize,
    pub hierarchical: ClusterAssignment,
    pub knn_error: f64,
    pub neighbors: usize,
    /// Agreement between the hierarchical partition at `chosen_k` and the
    /// k-means labels.
    pub ari_vs_kmeans: f64,
}

/// Average-linkage clustering of the selected scores, cut at every k in
/// `2..=kmax` and scored by average silhouette width, plus the leave-one-out
/// n-NN error of the k-means labels.
pub fn robustness_check(
    scores: ArrayView2<'_, f64>,
    kmeans_labels: &[usize],
    kmax: usize,
    neighbors: usize,
) -> Result<Robustness> {
    let m = scores.nrows();
    if kmeans_labels.len() != m {
        return Err(ValidationError::LengthMismatch(m, kmeans_labels.len()).into());
    }
    let kmax = kmax.min(m.saturating_sub(1));
    if kmax < 2 {
        return Err(ValidationError::InvalidArgument(format!("need kmax ≥ 2 and at least 3 points, got kmax {kmax}")).into());
    }
    let tree = average_linkage(scores)?;
    let dist = distance_matrix(scores);

    let mut asw = Vec::with_capacity(kmax - 1);
    let mut best: Option<(f64, ClusterAssignment)> = None;
    for k in 2..=kmax {
        let cut = cut_dendrogram(&tree, k)?;
        let (_, width) = silhouette(&dist, &cut.labels)?;
        asw.push(AswRow {
            k,
            asw: width,
            sizes: cut.sizes(),
        });
        if best.as_ref().is_none_or(|(b, _)| width > *b) {
            best = Some((width, cut));
        }
    }
    let (_, hierarchical) = best.expect("at least one cut");
    let knn_error = knn_loocv_error(scores, kmeans_labels, neighbors)?;
    let ari_vs_kmeans = adjusted_rand(&hierarchical.labels, kmeans_labels)?;
    Ok(Robustness {
        asw,
        chosen_k: hierarchical.k,
        hierarchical,
        knn_error,
        neighbors,
        ari_vs_kmeans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn two_tight_groups() {
        let mut x = Array2::zeros((24, 2));
        for i in 0..24 {
            let base = if i < 12 { 0.0 } else { 10.0 };
            x[[i, 0]] = base + (i % 4) as f64 * 0.1;
            x[[i, 1]] = (i % 3) as f64 * 0.1;
        }
        let labels: Vec<usize> = (0..24).map(|i| usize::from(i >= 12)).collect();
        let r = robustness_check(x.view(), &labels, 5, DEFAULT_NEIGHBORS).unwrap();
        assert_eq!(r.asw.iter().map(|a| a.k).collect::<Vec<_>>(), vec![2, 3, 4, 5]);
        assert_eq!(r.chosen_k, 2);
        assert_eq!(r.hierarchical.sizes(), vec![12, 12]);
        assert_eq!(r.knn_error, 0.0);
        assert_eq!(r.ari_vs_kmeans, 1.0);
        assert!(r.asw[0].asw > 0.9);
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = Array2::zeros((2, 2));
        assert!(robustness_check(x.view(), &[0, 1], 5, 1).is_err());
        let x = Array2::zeros((5, 2));
        assert!(robustness_check(x.view(), &[0, 1], 3, 1).is_err());
    }
}
