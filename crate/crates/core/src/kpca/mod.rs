//! Kernel principal component analysis.
//!
//! The Gram matrix is double-centered, decomposed, and every retained
//! eigenvector `v_k` of the centered matrix is rescaled to the dual
//! coefficients `α_k = v_k / √λ_k`, so that `α_k · α_k = 1/λ_k`. The k-th
//! kernel principal component of a point `x` is then `Σ_i α_ik k̃(x_i, x)`.
//!
//! Eigenvalues are those of the centered Gram matrix itself; the factor `M`
//! that appears when the eigenproblem is written against the feature-space
//! covariance only rescales them and is not applied.

mod eigen;

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eigen::{
    symmetric_eigendecomposition, symmetric_eigendecomposition_with, EigenResult, EigenSolver,
    JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE,
};

use crate::kernels::{kernel_matrix, kernel_row, KernelError, KernelMatrix, KernelSpec};
use crate::par;

/// Eigenvalues at or below `RELATIVE_EIGEN_TOLERANCE · λ_max` count as zero.
pub const RELATIVE_EIGEN_TOLERANCE: f64 = 1e-9;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KpcaError {
    #[error(transparent)]
    Kernel(#[from] KernelError),

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("centered kernel matrix has no positive eigenvalue")]
    NoPositiveEigenvalues,

    #[error("kernel matrix is already centered")]
    AlreadyCentered,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("model file: {0}")]
    Io(#[from] std::io::Error),

    #[error("model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, KpcaError>;

/// Double-center raw Gram values: `K − 1_M K − K 1_M + 1_M K 1_M`.
///
/// Only the upper triangle is computed; it is mirrored so the output is
/// bitwise symmetric.
pub fn center_gram(k: &Array2<f64>) -> Array2<f64> {
    let m = k.nrows();
    let (means, grand) = column_means(k);
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = ((k[[i, j]] - means[i]) - means[j]) + grand;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Column means and grand mean of a symmetric matrix.
fn column_means(k: &Array2<f64>) -> (Vec<f64>, f64) {
    let m = k.nrows();
    // Row sums equal column sums bitwise for a bitwise-symmetric matrix.
    let means: Vec<f64> = k.rows().into_iter().map(|r| r.sum() / m as f64).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    (means, grand)
}

/// Center an uncentered Gram matrix.
pub fn center_kernel_matrix(k: &KernelMatrix) -> Result<KernelMatrix> {
    if k.is_centered() {
        return Err(KpcaError::AlreadyCentered);
    }
    Ok(KernelMatrix::from_parts_unchecked(
        center_gram(k.values()),
        true,
        k.spec().clone(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpcaOptions {
    pub max_components: usize,
    pub solver: EigenSolver,
}

impl KpcaOptions {
    pub fn new(max_components: usize) -> Self {
        Self {
            max_components,
            solver: EigenSolver::default(),
        }
    }
}

/// A fitted kernel PCA model. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpcaModel {
    spec: KernelSpec,
    training_data: Array2<f64>,
    /// Retained eigenvalues, descending.
    eigenvalues: Vec<f64>,
    /// M × l dual coefficients.
    alphas: Array2<f64>,
    kernel_column_means: Vec<f64>,
    kernel_grand_mean: f64,
    /// Sum of all eigenvalues above the zero threshold (not only retained ones).
    positive_eigenvalue_sum: f64,
    /// Number of eigenvalues above the zero threshold.
    positive_eigenvalue_count: usize,
    /// `K̃ α`, M × l.
    training_scores: Array2<f64>,
    /// max |K̃ α_k − λ_k α_k| over retained components.
    dual_residual: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: KpcaModel,
}

impl KpcaModel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn training_data(&self) -> &Array2<f64> {
        &self.training_data
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn alphas(&self) -> &Array2<f64> {
        &self.alphas
    }

    /// Number of retained components.
    pub fn components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues above the zero threshold before truncation.
    pub fn positive_eigenvalue_count(&self) -> usize {
        self.positive_eigenvalue_count
    }

    pub fn kernel_column_means(&self) -> &[f64] {
        &self.kernel_column_means
    }

    pub fn kernel_grand_mean(&self) -> f64 {
        self.kernel_grand_mean
    }

    /// Largest elementwise gap between `K̃ α_k` and `λ_k α_k` seen at fit time.
    pub fn dual_residual(&self) -> f64 {
        self.dual_residual
    }

    /// Keep only the first `l` components.
    pub fn truncated(&self, l: usize) -> KpcaModel {
        let l = l.min(self.components());
        let mut out = self.clone();
        out.eigenvalues.truncate(l);
        out.alphas = self.alphas.slice(ndarray::s![.., ..l]).to_owned();
        out.training_scores = self.training_scores.slice(ndarray::s![.., ..l]).to_owned();
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(
            file,
            &ModelFile {
                format_version: MODEL_FORMAT_VERSION,
                model: self.clone(),
            },
        )
        .map_err(|e| KpcaError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = BufReader::new(fs::File::open(path)?);
        let parsed: ModelFile =
            serde_json::from_reader(file).map_err(|e| KpcaError::Format(e.to_string()))?;
        if parsed.format_version != MODEL_FORMAT_VERSION {
            return Err(KpcaError::Format(format!(
                "unsupported model format version {}",
                parsed.format_version
            )));
        }
        Ok(parsed.model)
    }
}

/// Fit kernel PCA, keeping at most `max_components` components.
///
/// `data` is used as given; standardization happens upstream.
pub fn fit_kpca(spec: &KernelSpec, data: ArrayView2<'_, f64>, max_components: usize) -> Result<KpcaModel> {
    fit_kpca_with(spec, data, KpcaOptions::new(max_components))
}

pub fn fit_kpca_with(spec: &KernelSpec, data: ArrayView2<'_, f64>, options: KpcaOptions) -> Result<KpcaModel> {
    let gram = kernel_matrix(spec, data)?;
    let m = gram.size();
    let (means, grand) = column_means(gram.values());
    let max_abs = gram.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let centered = center_kernel_matrix(&gram)?;
    drop(gram);
    let eig = symmetric_eigendecomposition_with(centered.values(), options.solver)?;

    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    // Rounding in the centering step alone leaves eigenvalues of order
    // M·ε·max|K| even when the centered matrix is exactly zero.
    let noise_floor = m as f64 * f64::EPSILON * max_abs;
    if !(lambda_max > noise_floor) {
        return Err(KpcaError::NoPositiveEigenvalues);
    }
    let threshold = (RELATIVE_EIGEN_TOLERANCE * lambda_max).max(noise_floor);
    let positive: Vec<f64> = eig
        .eigenvalues
        .iter()
        .copied()
        .take_while(|&l| l > threshold)
        .collect();
    let positive_eigenvalue_sum = positive.iter().sum();
    let l = options.max_components.min(positive.len());

    let mut alphas = Array2::zeros((m, l));
    for k in 0..l {
        let v = eig.eigenvectors.column(k);
        // Sign convention: largest-magnitude entry positive (first on ties).
        let pivot = v
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign / positive[k].sqrt();
        for i in 0..m {
            alphas[[i, k]] = v[i] * scale;
        }
    }

    let training_scores = centered.values().dot(&alphas);
    let mut dual_residual = 0.0f64;
    for k in 0..l {
        for i in 0..m {
            let gap = (training_scores[[i, k]] - positive[k] * alphas[[i, k]]).abs();
            dual_residual = dual_residual.max(gap);
        }
    }

    Ok(KpcaModel {
        spec: spec.clone(),
        training_data: data.to_owned(),
        eigenvalues: positive[..l].to_vec(),
        alphas,
        kernel_column_means: means,
        kernel_grand_mean: grand,
        positive_eigenvalue_sum,
        positive_eigenvalue_count: positive.len(),
        training_scores,
        dual_residual,
    })
}

/// Kernel principal component scores of the training points, `K̃ α` (M × l).
pub fn training_scores(model: &KpcaModel) -> Array2<f64> {
    model.training_scores.clone()
}

/// The same scores through the eigen relation, `λ_k α_k`.
pub fn training_scores_from_eigenvalues(model: &KpcaModel) -> Array2<f64> {
    let mut out = model.alphas.clone();
    for (k, lambda) in model.eigenvalues.iter().enumerate() {
        out.column_mut(k).mapv_inplace(|a| a * lambda);
    }
    out
}

/// Project new points (Q × N) onto the retained components.
///
/// Test kernel rows are centered with the training statistics:
/// `k̃_j = k_j − mean_i K_ij − mean_i k_i + mean(K)`.
pub fn project(model: &KpcaModel, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = model.training_data.ncols();
    let l = model.components();
    if points.ncols() != n {
        return Err(KpcaError::DimensionMismatch {
            expected: n,
            found: points.ncols(),
        });
    }
    let q = points.nrows();
    if q == 0 {
        return Ok(Array2::zeros((0, l)));
    }
    let train: Vec<Vec<f64>> = model.training_data.rows().into_iter().map(|r| r.to_vec()).collect();
    let queries: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    let m = train.len();
    let rows: Vec<std::result::Result<Vec<f64>, KernelError>> = par::map_range(q, |r| {
        let kx = kernel_row(&model.spec, &train, &queries[r])?;
        let kbar = kx.iter().sum::<f64>() / m as f64;
        let mut scores = vec![0.0; l];
        for (j, kxj) in kx.iter().enumerate() {
            let c = kxj - model.kernel_column_means[j] - kbar + model.kernel_grand_mean;
            for (k, s) in scores.iter_mut().enumerate() {
                *s += model.alphas[[j, k]] * c;
            }
        }
        Ok(scores)
    });
    let mut out = Array2::zeros((q, l));
    for (r, row) in rows.into_iter().enumerate() {
        for (k, v) in row?.into_iter().enumerate() {
            out[[r, k]] = v;
        }
    }
    Ok(out)
}

/// `λ_k / Σ_j λ_j` over all positive eigenvalues, for each retained component.
pub fn explained_variance_ratio(model: &KpcaModel) -> Vec<f64> {
    model
        .eigenvalues
        .iter()
        .map(|l| l / model.positive_eigenvalue_sum)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn random_data(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn two_by_two_centering() {
        let a = 0.3;
        let spec = KernelSpec::rbf(1.0).unwrap();
        let k = KernelMatrix::from_values(array![[1.0, a], [a, 1.0]], false, spec).unwrap();
        let c = center_kernel_matrix(&k).unwrap();
        let h = (1.0 - a) / 2.0;
        let expected = array![[h, -h], [-h, h]];
        for (x, y) in c.values().iter().zip(expected.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
        assert!(c.is_centered());
        assert!(matches!(center_kernel_matrix(&c), Err(KpcaError::AlreadyCentered)));
    }

    #[test]
    fn constant_gram_centers_to_zero() {
        let k = Array2::from_elem((4, 4), 0.25);
        assert!(center_gram(&k).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_matches_explicit_matrix_products() {
        // Oracle: K − 1K − K1 + 1K1 with explicit 1_M = (1/M) J.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = 6;
        let mut k = Array2::zeros((m, m));
        for i in 0..m {
            for j in i..m {
                let v: f64 = rng.random_range(-2.0..2.0);
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
        }
        let one = Array2::from_elem((m, m), 1.0 / m as f64);
        let oracle = &k - &one.dot(&k) - &k.dot(&one) + &one.dot(&k).dot(&one);
        let c = center_gram(&k);
        for (x, y) in c.iter().zip(oracle.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        for row in c.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_have_no_components() {
        let data = Array2::from_elem((5, 2), 0.3);
        let spec = KernelSpec::proposed(1.0, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            fit_kpca(&spec, data.view(), 3),
            Err(KpcaError::NoPositiveEigenvalues)
        ));
    }

    #[test]
    fn dual_normalization_and_score_moments() {
        let data = random_data(40, 3, 9);
        let spec = KernelSpec::proposed(0.5, vec![0.8, 0.8, 0.8]).unwrap();
        let model = fit_kpca(&spec, data.view(), 5).unwrap();
        assert_eq!(model.components(), 5);
        let scores = training_scores(&model);
        let via_eig = training_scores_from_eigenvalues(&model);
        let m = data.nrows() as f64;
        for k in 0..5 {
            let a = model.alphas().column(k);
            assert!((a.dot(&a) * model.eigenvalues()[k] - 1.0).abs() < 1e-8);
            let col = scores.column(k);
            let mean = col.sum() / m;
            assert!(mean.abs() < 1e-9);
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m;
            assert_relative_eq!(var, model.eigenvalues()[k] / m, max_relative = 1e-8);
            for i in 0..data.nrows() {
                assert!((scores[[i, k]] - via_eig[[i, k]]).abs() < 1e-8);
            }
        }
        assert!(model.dual_residual() < 1e-8);
    }

    #[test]
    fn projecting_training_points_reproduces_scores() {
        let data = random_data(30, 2, 3);
        let spec = KernelSpec::laplacian(0.7).unwrap();
        let model = fit_kpca(&spec, data.view(), 4).unwrap();
        let projected = project(&model, data.view()).unwrap();
        let scores = training_scores(&model);
        for (a, b) in projected.iter().zip(scores.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let empty = project(&model, Array2::<f64>::zeros((0, 2)).view()).unwrap();
        assert_eq!(empty.dim(), (0, 4));
        assert!(matches!(
            project(&model, Array2::<f64>::zeros((1, 3)).view()),
            Err(KpcaError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn far_point_projection_matches_feature_space_algebra() {
        // Oracle: with k_x ≈ 0 the centered test vector is
        // c_j = −mean_i K_ij + mean(K), so the score is Σ_j α_jk c_j.
        let data = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let spec = KernelSpec::proposed(1.0, vec![1.0, 1.0]).unwrap();
        let model = fit_kpca(&spec, data.view(), 2).unwrap();
        let k = kernel_matrix(&spec, data.view()).unwrap();
        let kv = k.values();
        let grand = kv.sum() / 9.0;
        let far = array![[40.0, 0.0]];
        let out = project(&model, far.view()).unwrap();
        for c in 0..model.components() {
            let mut expected = 0.0;
            for j in 0..3 {
                let colmean = kv.column(j).sum() / 3.0;
                expected += model.alphas()[[j, c]] * (grand - colmean);
            }
            assert!((out[[0, c]] - expected).abs() < 1e-12, "{} vs {}", out[[0, c]], expected);
        }
    }

    #[test]
    fn explained_variance() {
        let data = random_data(25, 2, 4);
        let spec = KernelSpec::polynomial(0.0, 1).unwrap();
        let model = fit_kpca(&spec, data.view(), 5).unwrap();
        // Linear kernel on 2D data has rank ≤ 2 after centering.
        assert_eq!(model.components(), 2);
        let r = explained_variance_ratio(&model);
        assert_relative_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let one = model.truncated(1);
        assert_eq!(explained_variance_ratio(&one).len(), 1);
        assert!(explained_variance_ratio(&one)[0] < 1.0);
    }

    #[test]
    fn single_positive_eigenvalue_ratio_is_one() {
        let data = array![[0.0], [1.0], [2.0], [3.0]];
        let spec = KernelSpec::polynomial(0.0, 1).unwrap();
        let model = fit_kpca(&spec, data.view(), 3).unwrap();
        assert_eq!(explained_variance_ratio(&model), vec![1.0]);
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let data = random_data(12, 2, 8);
        let spec = KernelSpec::proposed(1.0 / 1.5, vec![0.3, 0.5]).unwrap();
        let model = fit_kpca(&spec, data.view(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = KpcaModel::load(&path).unwrap();
        assert_eq!(back, model);
    }
}
