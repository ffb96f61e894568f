//! Gap statistic with uniform bounding-box reference data.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Result, ValidationError};
use crate::clustering::kmeans;
use crate::{par, rng};

pub const DEFAULT_GAP_REFERENCES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapOptions {
    pub kmax: usize,
    /// Number of reference datasets `B`.
    pub references: usize,
    pub seed: u64,
    /// k-means restarts for every W_k, data and reference alike.
    pub restarts: usize,
}

impl GapOptions {
    pub fn new(kmax: usize, references: usize, seed: u64) -> Self {
        Self {
            kmax,
            references,
            seed,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub k: usize,
    pub log_wk: f64,
    pub gap: f64,
    pub sk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GapOutcome {
    Clusters { k: usize },
    NoClustering,
}

impl GapOutcome {
    pub fn clusters(self) -> Option<usize> {
        match self {
            GapOutcome::Clusters { k } => Some(k),
            GapOutcome::NoClustering => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub records: Vec<GapRecord>,
    pub chosen: GapOutcome,
}

pub fn gap_statistic(points: ArrayView2<'_, f64>, kmax: usize, references: usize, seed: u64) -> Result<GapResult> {
    gap_statistic_with(points, &GapOptions::new(kmax, references, seed))
}

/// Gap statistic for `k = 1..=kmax`.
///
/// `kmax` is lowered when the data cannot support it: never above the number
/// of points, and the scan stops before the first `k` whose within-SS is
/// exactly zero (its logarithm is undefined).
pub fn gap_statistic_with(points: ArrayView2<'_, f64>, opts: &GapOptions) -> Result<GapResult> {
    let m = points.nrows();
    let n = points.ncols();
    if m == 0 || n == 0 {
        return Err(ValidationError::EmptyInput);
    }
    if opts.kmax == 0 || opts.references == 0 {
        return Err(ValidationError::InvalidArgument("kmax and B must be at least 1".into()));
    }
    let mut kmax = opts.kmax.min(m);

    let mut log_w = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let w = kmeans(points, k, opts.seed, opts.restarts)?
            .within_ss
            .unwrap_or(0.0);
        if w <= 0.0 {
            break;
        }
        log_w.push(w.ln());
    }
    if log_w.is_empty() {
        // All points coincide.
        return Ok(GapResult {
            records: Vec::new(),
            chosen: GapOutcome::NoClustering,
        });
    }
    kmax = log_w.len();

    let (lo, hi): (Vec<f64>, Vec<f64>) = points
        .columns()
        .into_iter()
        .map(|c| {
            c.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
        })
        .unzip();

    let base = rng::derive(opts.seed, &[rng::tag::GAP_REFERENCE]);
    let reference_logs: Vec<Result<Vec<f64>>> = par::map_range(opts.references, |b| {
        let mut stream = rng::stream(base, b as u64);
        let sample = Array2::from_shape_fn((m, n), |(_, j)| {
            if hi[j] > lo[j] {
                stream.random_range(lo[j]..hi[j])
            } else {
                lo[j]
            }
        });
        let kseed = rng::derive(base, &[b as u64]);
        (1..=kmax)
            .map(|k| {
                let w = kmeans(sample.view(), k, kseed, opts.restarts)?
                    .within_ss
                    .unwrap_or(0.0);
                // A reference set with duplicate points can reach zero;
                // floor at the smallest positive value to keep the log finite.
                Ok(w.max(f64::MIN_POSITIVE).ln())
            })
            .collect()
    });
    let reference_logs: Vec<Vec<f64>> = reference_logs.into_iter().collect::<Result<_>>()?;

    let bf = opts.references as f64;
    let records: Vec<GapRecord> = (0..kmax)
        .map(|i| {
            let mean = reference_logs.iter().map(|r| r[i]).sum::<f64>() / bf;
            let var = reference_logs.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / bf;
            GapRecord {
                k: i + 1,
                log_wk: log_w[i],
                gap: mean - log_w[i],
                sk: var.sqrt() * (1.0 + 1.0 / bf).sqrt(),
            }
        })
        .collect();

    let k = records
        .windows(2)
        .find(|w| w[0].gap >= w[1].gap - w[1].sk)
        .map_or(kmax, |w| w[0].k);
    let chosen = if k == 1 {
        GapOutcome::NoClustering
    } else {
        GapOutcome::Clusters { k }
    };
    Ok(GapResult { records, chosen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64) -> Array2<f64> {
        let centers = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.05).unwrap();
        Array2::from_shape_fn((90, 2), |(i, j)| {
            let c = centers[i / 30];
            (if j == 0 { c.0 } else { c.1 }) + noise.sample(&mut rng)
        })
    }

    #[test]
    fn three_blobs_choose_three() {
        let r = gap_statistic(blobs(1).view(), 6, 50, 7).unwrap();
        assert_eq!(r.chosen, GapOutcome::Clusters { k: 3 });
        assert_eq!(r.records.len(), 6);
        assert!(r.records.iter().enumerate().all(|(i, rec)| rec.k == i + 1 && rec.sk >= 0.0));
    }

    #[test]
    fn uniform_box_is_mostly_unclustered() {
        let mut hits = 0;
        for trial in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100 + trial);
            let pts = Array2::from_shape_fn((200, 2), |_| rng.random_range(0.0..1.0));
            let opts = GapOptions {
                restarts: 3,
                ..GapOptions::new(5, 20, trial)
            };
            if gap_statistic_with(pts.view(), &opts).unwrap().chosen == GapOutcome::NoClustering {
                hits += 1;
            }
        }
        assert!(hits >= 18, "NoClustering in {hits}/20 trials");
    }

    #[test]
    fn reproducible() {
        let pts = blobs(2);
        let a = gap_statistic(pts.view(), 4, 10, 3).unwrap();
        let b = gap_statistic(pts.view(), 4, 10, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_points_cap_kmax() {
        let pts = ndarray::array![[0.0], [0.0], [1.0], [1.0]];
        let r = gap_statistic(pts.view(), 4, 5, 0).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.chosen, GapOutcome::NoClustering);
        let same = ndarray::array![[2.0], [2.0]];
        let r = gap_statistic(same.view(), 2, 5, 0).unwrap();
        assert!(r.records.is_empty());
    }
}
