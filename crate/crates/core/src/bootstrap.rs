//! BCa bootstrap intervals and the pooled scale statistic.
//!
//! The interval endpoints sit at the percentiles
//! `Φ(z0 + (z0 + z_α)/(1 − a·(z0 + z_α)))` of the bootstrap distribution,
//! where `z0` measures median bias of the replicates and `a` is the
//! jackknife acceleration.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{par, rng};

pub const DEFAULT_REPLICATES: usize = 2000;
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("need at least two values, got {0}")]
    TooFewValues(usize),

    #[error("bootstrap distribution is degenerate; bias correction undefined")]
    DegenerateBootstrap,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("statistic returned a non-finite value")]
    NonFiniteStatistic,
}

pub type Result<T> = std::result::Result<T, BootstrapError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaOptions {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BcaOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaInterval {
    pub lower: f64,
    pub upper: f64,
    pub point_estimate: f64,
    pub replicates: usize,
    pub alpha: f64,
    pub z0: f64,
    pub accel: f64,
}

impl BcaInterval {
    /// False when extreme skew pushed the point estimate outside the interval.
    pub fn contains_estimate(&self) -> bool {
        self.lower <= self.point_estimate && self.point_estimate <= self.upper
    }
}

/// Sample standard deviation of all entries taken as one sample.
pub fn pooled_scale(data: ArrayView2<'_, f64>) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(BootstrapError::TooFewValues(n));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let ss: f64 = data.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// `(σ₁, σ₂, σ₃)` = lower limit, upper limit, and their midpoint.
pub fn hyperparameter_candidates(interval: &BcaInterval) -> (f64, f64, f64) {
    let (lo, hi) = (interval.lower, interval.upper);
    (lo, hi, 0.5 * (lo + hi))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), relative accuracy
/// about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Linear-interpolation quantile of sorted values (the "type 7" rule).
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Statistic recomputed on every bootstrap resample of whole rows.
pub fn bootstrap_replicates<F>(data: ArrayView2<'_, f64>, statistic: &F, replicates: usize, seed: u64) -> Vec<f64>
where
    F: Fn(ArrayView2<'_, f64>) -> f64 + Sync,
{
    let m = data.nrows();
    let n = data.ncols();
    let base = rng::derive(seed, &[rng::tag::BOOTSTRAP]);
    par::map_range(replicates, |r| {
        let mut stream = rng::stream(base, r as u64);
        let mut sample = Array2::zeros((m, n));
        for mut row in sample.rows_mut() {
            let pick = stream.random_range(0..m);
            row.assign(&data.row(pick));
        }
        statistic(sample.view())
    })
}

/// Leave-one-row-out values of the statistic.
pub fn jackknife<F>(data: ArrayView2<'_, f64>, statistic: &F) -> Vec<f64>
where
    F: Fn(ArrayView2<'_, f64>) -> f64 + Sync,
{
    let m = data.nrows();
    par::map_range(m, |i| {
        let keep: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        statistic(data.select(Axis(0), &keep).view())
    })
}

/// Acceleration from jackknife skewness; 0 when the jackknife values are
/// all equal.
pub fn acceleration(jack: &[f64]) -> f64 {
    let mean = jack.iter().sum::<f64>() / jack.len() as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &v in jack {
        let d = mean - v;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s3 / (6.0 * s2.powf(1.5))
    }
}

/// Non-parametric BCa interval for `statistic`, resampling rows of `data`.
pub fn bca_interval<F>(data: ArrayView2<'_, f64>, statistic: F, opts: &BcaOptions) -> Result<BcaInterval>
where
    F: Fn(ArrayView2<'_, f64>) -> f64 + Sync,
{
    if opts.replicates < MIN_REPLICATES {
        return Err(BootstrapError::InvalidArgument(format!(
            "B = {} is below the minimum of {MIN_REPLICATES}",
            opts.replicates
        )));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(BootstrapError::InvalidArgument(format!("alpha = {} outside (0, 1)", opts.alpha)));
    }
    if data.nrows() < 2 {
        return Err(BootstrapError::TooFewValues(data.nrows()));
    }

    let theta = statistic(data);
    if !theta.is_finite() {
        return Err(BootstrapError::NonFiniteStatistic);
    }
    let mut reps = bootstrap_replicates(data, &statistic, opts.replicates, opts.seed);
    if reps.iter().any(|v| !v.is_finite()) {
        return Err(BootstrapError::NonFiniteStatistic);
    }
    reps.sort_by(f64::total_cmp);
    if reps[0] == reps[reps.len() - 1] {
        return Err(BootstrapError::DegenerateBootstrap);
    }

    let below = reps.iter().filter(|&&v| v < theta).count() as f64;
    let ties = reps.iter().filter(|&&v| v == theta).count() as f64;
    let frac = (below + 0.5 * ties) / reps.len() as f64;
    if frac <= 0.0 || frac >= 1.0 {
        return Err(BootstrapError::DegenerateBootstrap);
    }
    let z0 = normal_quantile(frac);

    let accel = acceleration(&jackknife(data, &statistic));

    let adjusted = |z: f64| {
        let t = z0 + z;
        normal_cdf(z0 + t / (1.0 - accel * t))
    };
    let z_lo = normal_quantile(opts.alpha / 2.0);
    let z_hi = normal_quantile(1.0 - opts.alpha / 2.0);
    Ok(BcaInterval {
        lower: sorted_quantile(&reps, adjusted(z_lo)),
        upper: sorted_quantile(&reps, adjusted(z_hi)),
        point_estimate: theta,
        replicates: opts.replicates,
        alpha: opts.alpha,
        z0,
        accel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use statrs::distribution::{ContinuousCDF, Normal as StatrsNormal};

    fn column_mean(a: ArrayView2<'_, f64>) -> f64 {
        a.column(0).mean().unwrap()
    }

    #[test]
    fn pooled_scale_cases() {
        assert_eq!(pooled_scale(array![[-1.0, 1.0]].view()).unwrap(), 2f64.sqrt());
        assert!(matches!(pooled_scale(array![[3.0]].view()), Err(BootstrapError::TooFewValues(1))));
        // A z-scored column (population sd 1) has sample sd √(M/(M−1)).
        let m = 10;
        let raw: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let mean = raw.iter().sum::<f64>() / m as f64;
        let psd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
        let z = Array2::from_shape_fn((m, 1), |(i, _)| (raw[i] - mean) / psd);
        let expect = (m as f64 / (m as f64 - 1.0)).sqrt();
        assert!((pooled_scale(z.view()).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn candidates() {
        let iv = BcaInterval {
            lower: 0.94,
            upper: 1.08,
            point_estimate: 1.0,
            replicates: 2000,
            alpha: 0.05,
            z0: 0.0,
            accel: 0.0,
        };
        let (s1, s2, s3) = hyperparameter_candidates(&iv);
        assert_eq!((s1, s2), (0.94, 1.08));
        assert!((s3 - 1.01).abs() < 1e-15);
        let one = BcaInterval { lower: 1.0, upper: 1.0, ..iv };
        assert_eq!(hyperparameter_candidates(&one), (1.0, 1.0, 1.0));
        let iv = BcaInterval { lower: 0.5, upper: 2.0, ..iv };
        let (s1, s2, s3) = hyperparameter_candidates(&iv);
        assert_eq!(s3 - s1, s2 - s3);
    }

    #[test]
    fn quantile_matches_reference_distribution() {
        let oracle = StatrsNormal::new(0.0, 1.0).unwrap();
        for &p in &[1e-300, 1e-20, 1e-10, 1e-4, 0.01, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999, 1.0 - 1e-12] {
            let ours = normal_quantile(p);
            let theirs = oracle.inverse_cdf(p);
            assert!((ours - theirs).abs() <= 1e-9 * theirs.abs().max(1.0), "p={p}: {ours} vs {theirs}");
            assert!((normal_cdf(ours) - p).abs() <= 1e-12 * p.max(1e-300) + 1e-15, "round trip at {p}");
        }
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert_eq!(normal_quantile(0.5), 0.0);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let data = Array2::from_elem((30, 2), 4.0);
        let r = bca_interval(data.view(), column_mean, &BcaOptions { replicates: 200, ..Default::default() });
        assert!(matches!(r, Err(BootstrapError::DegenerateBootstrap)));
    }

    #[test]
    fn argument_checks() {
        let data = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let few = BcaOptions { replicates: 50, ..Default::default() };
        assert!(matches!(bca_interval(data.view(), column_mean, &few), Err(BootstrapError::InvalidArgument(_))));
        let bad = BcaOptions { alpha: 1.0, ..Default::default() };
        assert!(matches!(bca_interval(data.view(), column_mean, &bad), Err(BootstrapError::InvalidArgument(_))));
    }

    #[test]
    fn symmetric_case_approaches_percentile_interval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data = Array2::from_shape_fn((400, 1), |_| normal.sample(&mut rng));
        let opts = BcaOptions { replicates: 20_000, alpha: 0.1, seed: 3 };
        let iv = bca_interval(data.view(), column_mean, &opts).unwrap();
        assert!(iv.z0.abs() < 0.1 && iv.accel.abs() < 0.01);

        // Percentile interval on the same resamples, computed independently.
        let mut reps = bootstrap_replicates(data.view(), &column_mean, opts.replicates, opts.seed);
        reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pick = |p: f64| {
            let h = p * (reps.len() - 1) as f64;
            let i = h as usize;
            reps[i] + (h - i as f64) * (reps[i + 1] - reps[i])
        };
        let (plo, phi) = (pick(0.05), pick(0.95));
        let width = phi - plo;
        assert!((iv.lower - plo).abs() < 0.02 * width);
        assert!((iv.upper - phi).abs() < 0.02 * width);
        assert!(iv.contains_estimate());
    }

    #[test]
    fn reproducible_and_narrowing_in_alpha() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data = Array2::from_shape_fn((60, 3), |_| rng.random_range(-1.0..2.0));
        let stat = |a: ArrayView2<'_, f64>| pooled_scale(a).unwrap();
        let base = BcaOptions { replicates: 500, alpha: 0.05, seed: 9 };
        let a = bca_interval(data.view(), stat, &base).unwrap();
        let b = bca_interval(data.view(), stat, &base).unwrap();
        assert_eq!(a, b);
        let mut last = f64::INFINITY;
        for alpha in [0.05, 0.32, 0.8] {
            let iv = bca_interval(data.view(), stat, &BcaOptions { alpha, ..base }).unwrap();
            let w = iv.upper - iv.lower;
            assert!(w <= last);
            last = w;
        }
    }

    #[test]
    fn acceleration_conventions() {
        assert_eq!(acceleration(&[2.0, 2.0, 2.0]), 0.0);
        let jack = [1.0, 2.0, 3.0, 6.0];
        let mean = 3.0;
        let s2: f64 = jack.iter().map(|v| (mean - v) * (mean - v)).sum();
        let s3: f64 = jack.iter().map(|v| (mean - v) * (mean - v) * (mean - v)).sum();
        assert_eq!(acceleration(&jack), s3 / (6.0 * s2.powf(1.5)));
        assert!(acceleration(&jack) < 0.0);
    }
}
