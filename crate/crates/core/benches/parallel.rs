//! Data-parallel kernels against the sequential fallback.
//!
//! Criterion ids carry the build mode, so the two builds can be compared
//! through saved baselines:
//!
//! ```text
//! cargo bench -p kpcluster --bench parallel -- --save-baseline parallel
//! cargo bench -p kpcluster --bench parallel --no-default-features -- --baseline parallel
//! ```
//!
//! A parallel build also measures itself on a one-thread pool, which
//! isolates scheduling overhead from the sequential code path.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kpcluster::bootstrap::{bca_interval, pooled_scale, BcaOptions};
use kpcluster::clustering::kmeans;
use kpcluster::kernels::{kernel_matrix, KernelSpec};
use kpcluster::kpca::fit_kpca;
use kpcluster::par;
use kpcluster::validation::{gap_statistic_with, GapOptions};

fn data(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, n), |(i, _)| (i % 3) as f64 * 2.0 + rng.random::<f64>())
}

fn mode() -> &'static str {
    if par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

/// Run `f` once per configuration: the build's own mode, plus a one-thread
/// pool when rayon is available.
fn variants(c: &mut Criterion, group: &str, f: &(dyn Fn() + Sync)) {
    let mut g = c.benchmark_group(group);
    g.bench_function(BenchmarkId::from_parameter(mode()), |b| b.iter(f));
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::from_parameter("parallel-1thread"), |b| {
            b.iter(|| pool.install(f))
        });
    }
    g.finish();
}

fn gram(c: &mut Criterion) {
    let x = data(600, 9, 1);
    let spec = KernelSpec::proposed_uniform(0.5, 1.0, 9).unwrap();
    variants(c, "gram_600x9", &|| {
        std::hint::black_box(kernel_matrix(&spec, x.view()).unwrap());
    });
}

fn kpca_fit(c: &mut Criterion) {
    let x = data(300, 9, 2);
    let spec = KernelSpec::rbf(1.0).unwrap();
    variants(c, "kpca_fit_300", &|| {
        std::hint::black_box(fit_kpca(&spec, x.view(), 6).unwrap());
    });
}

fn kmeans_restarts(c: &mut Criterion) {
    let x = data(1000, 2, 3);
    variants(c, "kmeans_1000_k3_r25", &|| {
        std::hint::black_box(kmeans(x.view(), 3, 7, 25).unwrap());
    });
}

fn gap(c: &mut Criterion) {
    let x = data(200, 2, 4);
    let opts = GapOptions {
        kmax: 5,
        references: 20,
        seed: 1,
        restarts: 3,
    };
    variants(c, "gap_200_b20", &|| {
        std::hint::black_box(gap_statistic_with(x.view(), &opts).unwrap());
    });
}

fn bootstrap(c: &mut Criterion) {
    let x = data(300, 9, 5);
    let opts = BcaOptions {
        replicates: 500,
        alpha: 0.05,
        seed: 3,
    };
    variants(c, "bca_300x9_b500", &|| {
        std::hint::black_box(bca_interval(x.view(), |v| pooled_scale(v).unwrap(), &opts).unwrap());
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default()
        .sample_size(10)
        .warm_up_time(Duration::from_secs(1))
        .measurement_time(Duration::from_secs(5));
    targets = gram, kpca_fit, kmeans_restarts, gap, bootstrap
}
criterion_main!(benches);
