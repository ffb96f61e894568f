//! Hartigan–Wong k-means (Applied Statistics algorithm AS 136).
//!
//! A point moves from cluster L1 to L2 when
//! `n2/(n2+1)·‖x−c2‖² < n1/(n1−1)·‖x−c1‖²`, i.e. exactly when the move lowers
//! the total within-cluster sum of squares. The optimal-transfer stage scans
//! all clusters in the live set; the quick-transfer stage only tests each
//! point's runner-up cluster. Centroids are updated incrementally after every
//! move.
//!
//! Initial centers are `k` distinct points drawn uniformly without
//! replacement from a ChaCha8 stream. Restart `r` uses stream `r` under
//! the seed, and the run with the smallest within-SS wins (lowest restart
//! index on ties).

use ndarray::ArrayView2;
use rand::seq::index::sample;

use super::{
    canonicalize_labels, rows_of, squared_distance, within_ss_rows, ClusterAssignment, ClusterError,
    ClusterMethod, Result,
};
use crate::{par, rng};

pub const DEFAULT_RESTARTS: usize = 25;
const MAX_ITERATIONS: usize = 100;
const BIG: f64 = 1.0e30;

/// Outcome of one Hartigan–Wong run from given centers.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    /// Raw labels (cluster index of the starting center).
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub within_ss: f64,
    /// Within-SS after initialization and after every transfer stage.
    pub trace: Vec<f64>,
}

/// Best of `restarts` seeded Hartigan–Wong runs.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    let m = points.nrows();
    if m == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > m {
        return Err(ClusterError::KTooLarge { k, m });
    }
    let rows = rows_of(points);
    let restarts = restarts.max(1);
    let method = ClusterMethod::KMeans { seed, restarts };

    if k == 1 {
        let labels = vec![0; m];
        let within_ss = within_ss_rows(&rows, &labels, 1);
        return Ok(ClusterAssignment {
            labels,
            k: 1,
            within_ss: Some(within_ss),
            method,
        });
    }

    let base = rng::derive(seed, &[rng::tag::KMEANS]);
    let runs: Vec<(Vec<usize>, f64)> = par::map_range(restarts, |r| {
        let mut stream = rng::stream(base, r as u64);
        let picks = sample(&mut stream, m, k);
        let centers: Vec<Vec<f64>> = picks.iter().map(|i| rows[i].clone()).collect();
        let run = hartigan_wong(&rows, centers);
        (run.labels, run.within_ss)
    });
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = r;
        }
    }
    let (labels, k_found) = canonicalize_labels(&runs[best].0);
    debug_assert_eq!(k_found, k);
    Ok(ClusterAssignment {
        labels,
        k,
        within_ss: Some(runs[best].1),
        method,
    })
}

/// Single Hartigan–Wong run from explicit starting centers.
pub fn kmeans_from_centers(points: ArrayView2<'_, f64>, centers: Vec<Vec<f64>>) -> Result<KMeansRun> {
    let m = points.nrows();
    if m == 0 {
        return Err(ClusterError::EmptyInput);
    }
    let k = centers.len();
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > m {
        return Err(ClusterError::KTooLarge { k, m });
    }
    if let Some(c) = centers.iter().find(|c| c.len() != points.ncols()) {
        return Err(ClusterError::DimensionMismatch {
            expected: points.ncols(),
            found: c.len(),
        });
    }
    let rows = rows_of(points);
    if k == 1 {
        let labels = vec![0; m];
        let within_ss = within_ss_rows(&rows, &labels, 1);
        let center = mean_of(&rows, &labels, 0, points.ncols());
        return Ok(KMeansRun {
            labels,
            centers: vec![center],
            within_ss,
            trace: vec![within_ss],
        });
    }
    Ok(hartigan_wong(&rows, centers))
}

fn mean_of(rows: &[Vec<f64>], labels: &[usize], l: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    let mut count = 0usize;
    for (r, &lab) in rows.iter().zip(labels) {
        if lab == l {
            count += 1;
            for (a, b) in c.iter_mut().zip(r) {
                *a += b;
            }
        }
    }
    if count > 0 {
        for a in &mut c {
            *a /= count as f64;
        }
    }
    c
}

struct State<'a> {
    x: &'a [Vec<f64>],
    m: usize,
    k: usize,
    c: Vec<Vec<f64>>,
    ic1: Vec<usize>,
    ic2: Vec<usize>,
    nc: Vec<usize>,
    an1: Vec<f64>,
    an2: Vec<f64>,
    /// Step (1-based) at which each cluster was last updated; 0 = not updated
    /// in the current quick-transfer stage.
    ncp: Vec<i64>,
    d: Vec<f64>,
    itran: Vec<bool>,
    live: Vec<i64>,
    indx: usize,
}

/// Nearest and second-nearest center, ties toward the lower index.
fn two_nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, usize) {
    let (mut b1, mut b2) = (0usize, 1usize);
    let mut d1 = squared_distance(x, &centers[0]);
    let mut d2 = squared_distance(x, &centers[1]);
    if d2 < d1 {
        std::mem::swap(&mut b1, &mut b2);
        std::mem::swap(&mut d1, &mut d2);
    }
    for (l, c) in centers.iter().enumerate().skip(2) {
        let dl = squared_distance(x, c);
        if dl < d1 {
            b2 = b1;
            d2 = d1;
            b1 = l;
            d1 = dl;
        } else if dl < d2 {
            b2 = l;
            d2 = dl;
        }
    }
    (b1, b2)
}

fn hartigan_wong(x: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> KMeansRun {
    let m = x.len();
    let k = centers.len();
    let n = x[0].len();

    let mut ic1 = vec![0usize; m];
    for (i, xi) in x.iter().enumerate() {
        ic1[i] = two_nearest(xi, &centers).0;
    }
    repair_empty_clusters(x, &mut ic1, k);
    for (l, c) in centers.iter_mut().enumerate() {
        *c = mean_of(x, &ic1, l, n);
    }
    let ic2: Vec<usize> = x
        .iter()
        .zip(&ic1)
        .map(|(xi, &l1)| {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for (l, c) in centers.iter().enumerate() {
                if l == l1 {
                    continue;
                }
                let dl = squared_distance(xi, c);
                if dl < bd {
                    bd = dl;
                    best = l;
                }
            }
            best
        })
        .collect();

    let mut nc = vec![0usize; k];
    for &l in &ic1 {
        nc[l] += 1;
    }
    let mut an1 = vec![0.0; k];
    let mut an2 = vec![0.0; k];
    for l in 0..k {
        let aa = nc[l] as f64;
        an2[l] = aa / (aa + 1.0);
        an1[l] = if aa > 1.0 { aa / (aa - 1.0) } else { BIG };
    }

    let mut s = State {
        x,
        m,
        k,
        c: centers,
        ic1,
        ic2,
        nc,
        an1,
        an2,
        ncp: vec![-1; k],
        d: vec![0.0; m],
        itran: vec![true; k],
        live: vec![0; k],
        indx: 0,
    };

    let mut trace = vec![within_ss_rows(x, &s.ic1, k)];
    for _ in 0..MAX_ITERATIONS {
        s.optimal_transfer();
        trace.push(within_ss_rows(x, &s.ic1, k));
        if s.indx == m {
            break;
        }
        s.quick_transfer();
        trace.push(within_ss_rows(x, &s.ic1, k));
        if k == 2 {
            break;
        }
        for v in &mut s.ncp {
            *v = 0;
        }
    }

    let labels = s.ic1;
    let centers: Vec<Vec<f64>> = (0..k).map(|l| mean_of(x, &labels, l, n)).collect();
    let within_ss = within_ss_rows(x, &labels, k);
    KMeansRun {
        labels,
        centers,
        within_ss,
        trace,
    }
}

/// While some cluster is empty, move the point farthest from its own
/// centroid (among clusters with more than one member) into it.
fn repair_empty_clusters(x: &[Vec<f64>], labels: &mut [usize], k: usize) {
    let n = x[0].len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let centers: Vec<Vec<f64>> = (0..k).map(|l| mean_of(x, labels, l, n)).collect();
        let mut far = None;
        let mut far_d = -1.0;
        for (i, xi) in x.iter().enumerate() {
            let l = labels[i];
            if counts[l] < 2 {
                continue;
            }
            let d = squared_distance(xi, &centers[l]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        match far {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

impl State<'_> {
    fn transfer(&mut self, i: usize, l1: usize, l2: usize) {
        let al1 = self.nc[l1] as f64;
        let alw = al1 - 1.0;
        let al2 = self.nc[l2] as f64;
        let alt = al2 + 1.0;
        let xi = &self.x[i];
        for (c, v) in self.c[l1].iter_mut().zip(xi) {
            *c = (*c * al1 - v) / alw;
        }
        for (c, v) in self.c[l2].iter_mut().zip(xi) {
            *c = (*c * al2 + v) / alt;
        }
        self.nc[l1] -= 1;
        self.nc[l2] += 1;
        self.an2[l1] = alw / al1;
        self.an1[l1] = if alw > 1.0 { alw / (alw - 1.0) } else { BIG };
        self.an1[l2] = alt / al2;
        self.an2[l2] = alt / (alt + 1.0);
        self.ic1[i] = l2;
        self.ic2[i] = l1;
    }

    fn optimal_transfer(&mut self) {
        let m = self.m as i64;
        for l in 0..self.k {
            if self.itran[l] {
                self.live[l] = m + 1;
            }
        }
        for i in 0..self.m {
            let step = i as i64 + 1;
            self.indx += 1;
            let l1 = self.ic1[i];
            if self.nc[l1] != 1 {
                if self.ncp[l1] != 0 {
                    self.d[i] = squared_distance(&self.x[i], &self.c[l1]) * self.an1[l1];
                }
                let ll = self.ic2[i];
                let mut l2 = ll;
                let mut r2 = squared_distance(&self.x[i], &self.c[ll]) * self.an2[ll];
                for l in 0..self.k {
                    if (step >= self.live[l1] && step >= self.live[l]) || l == l1 || l == ll {
                        continue;
                    }
                    let rr = r2 / self.an2[l];
                    let mut dc = 0.0;
                    let mut pruned = false;
                    for (a, b) in self.x[i].iter().zip(&self.c[l]) {
                        let dd = a - b;
                        dc += dd * dd;
                        if dc >= rr {
                            pruned = true;
                            break;
                        }
                    }
                    if pruned {
                        continue;
                    }
                    r2 = dc * self.an2[l];
                    l2 = l;
                }
                if r2 >= self.d[i] {
                    self.ic2[i] = l2;
                } else {
                    self.indx = 0;
                    self.live[l1] = m + step;
                    self.live[l2] = m + step;
                    self.ncp[l1] = step;
                    self.ncp[l2] = step;
                    self.transfer(i, l1, l2);
                }
            }
            if self.indx == self.m {
                return;
            }
        }
        for l in 0..self.k {
            self.itran[l] = false;
            self.live[l] -= m;
        }
    }

    fn quick_transfer(&mut self) {
        let m = self.m as i64;
        let mut icoun = 0usize;
        let mut istep: i64 = 0;
        // Bound on total steps; a stalled cycle would otherwise never end.
        let max_steps = 50 * m.max(1);
        loop {
            for i in 0..self.m {
                icoun += 1;
                istep += 1;
                let l1 = self.ic1[i];
                let l2 = self.ic2[i];
                if self.nc[l1] != 1 {
                    if istep <= self.ncp[l1] {
                        self.d[i] = squared_distance(&self.x[i], &self.c[l1]) * self.an1[l1];
                    }
                    if istep < self.ncp[l1] || istep < self.ncp[l2] {
                        let r2 = self.d[i] / self.an2[l2];
                        let mut dd = 0.0;
                        let mut pruned = false;
                        for (a, b) in self.x[i].iter().zip(&self.c[l2]) {
                            let de = a - b;
                            dd += de * de;
                            if dd >= r2 {
                                pruned = true;
                                break;
                            }
                        }
                        if !pruned {
                            icoun = 0;
                            self.indx = 0;
                            self.itran[l1] = true;
                            self.itran[l2] = true;
                            self.ncp[l1] = istep + m;
                            self.ncp[l2] = istep + m;
                            self.transfer(i, l1, l2);
                        }
                    }
                }
                if icoun == self.m || istep >= max_steps {
                    return;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn blobs(per: usize, sd: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let centers = [(0.0, 0.0), (1.0, 0.0), (0.5, 0.866)];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut pts = Array2::zeros((per * 3, 2));
        let mut truth = Vec::new();
        for (c, (cx, cy)) in centers.iter().enumerate() {
            for i in 0..per {
                pts[[c * per + i, 0]] = cx + noise.sample(&mut rng);
                pts[[c * per + i, 1]] = cy + noise.sample(&mut rng);
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn one_dimensional_pairs() {
        let pts = array![[0.0], [1.0], [10.0], [11.0]];
        let a = kmeans(pts.view(), 2, 1, 5).unwrap();
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[2], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[2]);
        assert_eq!(a.within_ss, Some(1.0));
    }

    #[test]
    fn single_cluster_is_total_sum_of_squares() {
        let pts = array![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]];
        let a = kmeans(pts.view(), 1, 0, 3).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0]);
        // mean (2, 1): 4+0 + 0+4 + 4+4
        assert_eq!(a.within_ss, Some(16.0));
    }

    #[test]
    fn k_equal_m_has_zero_within_ss() {
        let pts = array![[0.0], [1.0], [3.0], [7.0]];
        let a = kmeans(pts.view(), 4, 3, 2).unwrap();
        assert_eq!(a.within_ss, Some(0.0));
        assert_eq!(a.labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn errors() {
        let pts = array![[0.0], [1.0]];
        assert!(matches!(kmeans(pts.view(), 3, 0, 1), Err(ClusterError::KTooLarge { k: 3, m: 2 })));
        assert!(matches!(kmeans(pts.view(), 0, 0, 1), Err(ClusterError::ZeroClusters)));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(kmeans(empty.view(), 1, 0, 1), Err(ClusterError::EmptyInput)));
    }

    #[test]
    fn recovers_three_blobs_and_matches_exhaustive_optimum() {
        let (pts, truth) = blobs(4, 0.1, 17);
        let a = kmeans(pts.view(), 3, 5, 10).unwrap();
        // Same partition as ground truth up to renaming.
        for i in 0..pts.nrows() {
            for j in 0..pts.nrows() {
                assert_eq!(a.labels[i] == a.labels[j], truth[i] == truth[j]);
            }
        }
        // Oracle: exhaustive search over all 3^12 labelings.
        let rows = rows_of(pts.view());
        let m = rows.len();
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; m];
        for code in 0..3usize.pow(m as u32) {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % 3;
                c /= 3;
            }
            let mut present = [false; 3];
            labels.iter().for_each(|&l| present[l] = true);
            if present.iter().all(|&p| p) {
                best = best.min(within_ss_rows(&rows, &labels, 3));
            }
        }
        assert!((a.within_ss.unwrap() - best).abs() < 1e-12);
    }

    #[test]
    fn within_ss_never_increases_across_stages() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let m = 30 + trial;
            let pts = Array2::from_shape_fn((m, 3), |_| rng.random_range(-1.0..1.0));
            let rows = rows_of(pts.view());
            let k = 2 + trial % 5;
            let centers: Vec<Vec<f64>> = rows[..k].to_vec();
            let run = kmeans_from_centers(pts.view(), centers).unwrap();
            for w in run.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", run.trace);
            }
        }
    }

    #[test]
    fn reproducible_and_permutation_invariant() {
        let (pts, _) = blobs(20, 0.1, 3);
        let a = kmeans(pts.view(), 3, 42, 8).unwrap();
        let b = kmeans(pts.view(), 3, 42, 8).unwrap();
        assert_eq!(a, b);

        let m = pts.nrows();
        let perm: Vec<usize> = (0..m).map(|i| (i * 7 + 3) % m).collect();
        let permuted = Array2::from_shape_fn((m, 2), |(i, j)| pts[[perm[i], j]]);
        let c = kmeans(permuted.view(), 3, 42, 8).unwrap();
        for i in 0..m {
            for j in 0..m {
                assert_eq!(
                    a.labels[perm[i]] == a.labels[perm[j]],
                    c.labels[i] == c.labels[j]
                );
            }
        }
        assert!((a.within_ss.unwrap() - c.within_ss.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters() {
        let pts = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let a = kmeans(pts.view(), 3, 0, 4).unwrap();
        assert_eq!(a.k, 3);
        assert!(a.sizes().iter().all(|&s| s > 0));
        assert_eq!(a.within_ss, Some(0.0));
    }

    #[test]
    fn agrees_with_lloyd_fixed_point_check() {
        // At a Hartigan–Wong optimum every point is at least as close to its
        // own centroid as to any other one.
        let (pts, _) = blobs(15, 0.3, 8);
        let rows = rows_of(pts.view());
        let run = kmeans_from_centers(pts.view(), rows[..3].to_vec()).unwrap();
        for (i, x) in rows.iter().enumerate() {
            let own = squared_distance(x, &run.centers[run.labels[i]]);
            for c in &run.centers {
                assert!(own <= squared_distance(x, c) + 1e-12);
            }
        }
    }
}
