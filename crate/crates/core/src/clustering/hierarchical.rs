//! Average-linkage (UPGMA) agglomerative clustering.
//!
//! The distance between two clusters is the mean Euclidean distance over all
//! cross pairs. Merges are found with the nearest-neighbour chain algorithm,
//! which is exact for reducible linkages such as average linkage, and cluster
//! distances are maintained by the size-weighted Lance–Williams update
//! `d(k, i∪j) = (n_i·d(k,i) + n_j·d(k,j)) / (n_i + n_j)`.
//!
//! Node ids follow the usual convention: leaves are `0..m`, the cluster
//! created by merge `t` is `m + t`.

use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{canonicalize_labels, distance_matrix, ClusterAssignment, ClusterError, ClusterMethod, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller node id of the two merged nodes.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Number of leaves under the new node.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaves: usize,
}

impl Dendrogram {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "left", "right", "height", "size"])?;
        for (t, m) in self.merges.iter().enumerate() {
            w.write_record([
                t.to_string(),
                m.left.to_string(),
                m.right.to_string(),
                m.height.to_string(),
                m.size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }
}

pub fn average_linkage(points: ArrayView2<'_, f64>) -> Result<Dendrogram> {
    let m = points.nrows();
    if m == 0 {
        return Err(ClusterError::EmptyInput);
    }
    let dist = distance_matrix(points);
    // Condensed working copy indexed by active slot (original leaf index of
    // the cluster's representative).
    let mut d: Vec<f64> = dist.into_raw_vec_and_offset().0;
    let mut size = vec![1usize; m];
    let mut active = vec![true; m];

    // Raw merges in slot space: (slot a, slot b, height), b is absorbed into a.
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(m.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::with_capacity(m);

    for _ in 1..m {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).unwrap());
        }
        let (a, b, h) = loop {
            let x = *chain.last().unwrap();
            let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
            // Nearest active neighbour; prefer the previous chain element on
            // ties so that reciprocal pairs are detected.
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            if let Some(p) = prev {
                best = p;
                best_d = d[x * m + p];
            }
            for y in 0..m {
                if y == x || !active[y] {
                    continue;
                }
                let dy = d[x * m + y];
                if dy < best_d {
                    best_d = dy;
                    best = y;
                }
            }
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                break (x.min(best), x.max(best), best_d);
            }
            chain.push(best);
        };

        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..m {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nd = (na * d[a * m + k] + nb * d[b * m + k]) / (na + nb);
            d[a * m + k] = nd;
            d[k * m + a] = nd;
        }
        active[b] = false;
        size[a] += size[b];
        raw.push((a, b, h));
    }

    // Order merges by height (stable), then assign node ids with union-find.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].2.total_cmp(&raw[j].2));
    let mut parent: Vec<usize> = (0..m).collect();
    let mut node_of: Vec<usize> = (0..m).collect();
    let mut leaves_under = vec![1usize; m];
    let mut merges = Vec::with_capacity(raw.len());
    for (t, &i) in order.iter().enumerate() {
        let (a, b, h) = raw[i];
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let (na, nb) = (node_of[ra], node_of[rb]);
        let sz = leaves_under[ra] + leaves_under[rb];
        merges.push(Merge {
            left: na.min(nb),
            right: na.max(nb),
            height: h,
            size: sz,
        });
        parent[rb] = ra;
        node_of[ra] = m + t;
        leaves_under[ra] = sz;
    }
    Ok(Dendrogram { merges, leaves: m })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Flat partition into `k` clusters: apply the first `m − k` merges.
pub fn cut_dendrogram(tree: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let m = tree.leaves;
    if m == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > m {
        return Err(ClusterError::KTooLarge { k, m });
    }
    let mut parent: Vec<usize> = (0..2 * m).collect();
    for (t, mg) in tree.merges.iter().take(m - k).enumerate() {
        parent[mg.left] = m + t;
        parent[mg.right] = m + t;
    }
    let raw: Vec<usize> = (0..m).map(|i| find(&mut parent, i)).collect();
    let (labels, found) = canonicalize_labels(&raw);
    debug_assert_eq!(found, k);
    Ok(ClusterAssignment {
        labels,
        k,
        within_ss: None,
        method: ClusterMethod::Hierarchical { cut_k: k },
    })
}
