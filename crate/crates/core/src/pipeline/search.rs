use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{build_grid_with, standardize, PipelineConfig, PipelineError, Result, Standardized};
use crate::bootstrap::{bca_interval, hyperparameter_candidates, pooled_scale, BcaInterval, BcaOptions};
use crate::clustering::kmeans;
use crate::kernels::{KernelError, KernelSpec};
use crate::kpca::{fit_kpca_with, training_scores, KpcaError, KpcaOptions};
use crate::par;
use crate::validation::{dunn_index, gap_statistic_with, GapOptions, GapOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CellOutcome {
    Clusters { k: usize, sizes: Vec<usize>, dunn: f64 },
    NoClustering,
    Failed { reason: String },
}

impl CellOutcome {
    pub fn dunn(&self) -> Option<f64> {
        match self {
            CellOutcome::Clusters { dunn, .. } => Some(*dunn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub spec: KernelSpec,
    pub kpc_count: usize,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the maximum-Dunn cell; the earliest wins ties.
    pub best: Option<usize>,
    /// `None` when the config fixes the scale candidates.
    pub bca: Option<BcaInterval>,
    pub candidates: Vec<f64>,
    pub standardization: Standardized,
    pub config: PipelineConfig,
    /// KPC scores and k-means labels of the best cell.
    #[serde(skip)]
    pub best_scores: Option<Array2<f64>>,
    #[serde(skip)]
    pub best_labels: Option<Vec<usize>>,
}

impl PipelineReport {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }
}

fn failure_reason(err: &KpcaError) -> String {
    match err {
        KpcaError::Kernel(KernelError::NonFinite { .. }) => "exponent diverges".to_string(),
        other => other.to_string(),
    }
}

/// Cluster the first `kpc_count` columns of `scores` and return the outcome
/// together with the k-means labels.
fn cluster_scores(scores: ArrayView2<'_, f64>, config: &PipelineConfig) -> (CellOutcome, Option<Vec<usize>>) {
    let gap_opts = GapOptions {
        kmax: config.kmax,
        references: config.gap_references,
        seed: config.seed,
        restarts: config.gap_restarts,
    };
    let k = match gap_statistic_with(scores, &gap_opts) {
        Ok(g) => match g.chosen {
            GapOutcome::NoClustering => return (CellOutcome::NoClustering, None),
            GapOutcome::Clusters { k } => k,
        },
        Err(e) => return (CellOutcome::Failed { reason: e.to_string() }, None),
    };
    let assignment = match kmeans(scores, k, config.seed, config.restarts) {
        Ok(a) => a,
        Err(e) => return (CellOutcome::Failed { reason: e.to_string() }, None),
    };
    let mut sizes = assignment.sizes();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    match dunn_index(scores, &assignment.labels) {
        Ok(dunn) => (
            CellOutcome::Clusters {
                k: assignment.k,
                sizes,
                dunn,
            },
            Some(assignment.labels),
        ),
        Err(e) => (CellOutcome::Failed { reason: e.to_string() }, None),
    }
}

fn fit_scores(spec: &KernelSpec, zdata: ArrayView2<'_, f64>, config: &PipelineConfig) -> std::result::Result<Array2<f64>, KpcaError> {
    let opts = KpcaOptions {
        max_components: config.max_kpcs.max(1),
        solver: config.solver,
    };
    let model = fit_kpca_with(spec, zdata, opts)?;
    Ok(training_scores(&model))
}

/// One grid cell: fit, keep `kpc_count` scores, pick k by the gap statistic,
/// partition with k-means and score with the Dunn index.
pub fn evaluate_cell(spec: &KernelSpec, zdata: ArrayView2<'_, f64>, kpc_count: usize, config: &PipelineConfig) -> GridCell {
    let outcome = match fit_scores(spec, zdata, config) {
        Err(e) => CellOutcome::Failed { reason: failure_reason(&e) },
        Ok(scores) if kpc_count == 0 || kpc_count > scores.ncols() => CellOutcome::Failed {
            reason: format!("{kpc_count} components requested, {} available", scores.ncols()),
        },
        Ok(scores) => cluster_scores(scores.slice(s![.., ..kpc_count]), config).0,
    };
    GridCell {
        spec: spec.clone(),
        kpc_count,
        outcome,
    }
}

/// Whether the search ends after `current`, given the best Dunn value seen
/// before it.
fn should_stop(count: usize, current: &CellOutcome, best_before: Option<f64>) -> bool {
    if count < 2 {
        return false;
    }
    match (best_before, current.dunn()) {
        (None, None) => true,
        (None, Some(_)) => false,
        (Some(_), None) => true,
        (Some(best), Some(d)) => d <= best,
    }
}

/// Incremental component search with a caller-supplied evaluator, which
/// receives each count in turn. Returns every evaluated cell's outcome.
pub fn kpc_search_with<F>(cap: usize, mut evaluate: F) -> Vec<(usize, CellOutcome)>
where
    F: FnMut(usize) -> CellOutcome,
{
    let mut out = Vec::new();
    let mut best: Option<f64> = None;
    for count in 1..=cap {
        let outcome = evaluate(count);
        let stop = should_stop(count, &outcome, best);
        if let Some(d) = outcome.dunn() {
            best = Some(best.map_or(d, |b: f64| b.max(d)));
        }
        out.push((count, outcome));
        if stop {
            break;
        }
    }
    out
}

fn search_spec(spec: &KernelSpec, zdata: ArrayView2<'_, f64>, config: &PipelineConfig) -> (Vec<GridCell>, Option<Array2<f64>>) {
    let scores = match fit_scores(spec, zdata, config) {
        Ok(s) => s,
        Err(e) => {
            let cell = GridCell {
                spec: spec.clone(),
                kpc_count: 1,
                outcome: CellOutcome::Failed { reason: failure_reason(&e) },
            };
            return (vec![cell], None);
        }
    };
    let cap = config.max_kpcs.min(scores.ncols());
    let cells = kpc_search_with(cap, |c| cluster_scores(scores.slice(s![.., ..c]), config).0)
        .into_iter()
        .map(|(kpc_count, outcome)| GridCell {
            spec: spec.clone(),
            kpc_count,
            outcome,
        })
        .collect();
    (cells, Some(scores))
}

/// Every cell the component search visits for one kernel.
pub fn kpc_search(spec: &KernelSpec, zdata: ArrayView2<'_, f64>, config: &PipelineConfig) -> Vec<GridCell> {
    search_spec(spec, zdata, config).0
}

fn select_best(cells: &[GridCell]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(d) = c.outcome.dunn() {
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((i, d));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// The full protocol on raw (unstandardized) data.
pub fn run_pipeline(data: ArrayView2<'_, f64>, config: &PipelineConfig) -> Result<PipelineReport> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(PipelineError::EmptyData);
    }
    let standardization = standardize(data)?;
    let z = standardization.data.view();

    let (bca, candidates) = match &config.grid.sigmas {
        Some(sigmas) => (None, sigmas.clone()),
        None => {
            let opts = BcaOptions {
                replicates: config.bootstrap_replicates,
                alpha: config.alpha,
                seed: config.seed,
            };
            let interval = bca_interval(z, |v| pooled_scale(v).unwrap_or(f64::NAN), &opts)?;
            let (lo, hi, mid) = hyperparameter_candidates(&interval);
            (Some(interval), vec![lo, hi, mid])
        }
    };
    let grid = build_grid_with(&candidates, z.ncols(), &config.grid)?;

    let per_spec = par::map_range(grid.len(), |i| search_spec(&grid[i], z, config));

    let mut cells = Vec::new();
    let mut owners = Vec::new();
    for (spec_index, (spec_cells, _)) in per_spec.iter().enumerate() {
        for c in spec_cells {
            cells.push(c.clone());
            owners.push(spec_index);
        }
    }
    if cells.iter().all(|c| matches!(c.outcome, CellOutcome::Failed { .. })) {
        return Err(PipelineError::AllCellsFailed);
    }
    let best = select_best(&cells);

    let (best_scores, best_labels) = match best {
        Some(i) => {
            let scores = per_spec[owners[i]].1.as_ref().expect("a clustered cell has scores");
            let view = scores.slice(s![.., ..cells[i].kpc_count]);
            let (_, labels) = cluster_scores(view, config);
            (Some(view.to_owned()), labels)
        }
        None => (None, None),
    };

    Ok(PipelineReport {
        cells,
        best,
        bca,
        candidates,
        standardization,
        config: config.clone(),
        best_scores,
        best_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::GridOverrides;
    use crate::validation::adjusted_rand;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use std::cell::Cell;

    fn clusters(dunn: f64) -> CellOutcome {
        CellOutcome::Clusters {
            k: 2,
            sizes: vec![1, 1],
            dunn,
        }
    }

    fn scripted(outcomes: Vec<CellOutcome>) -> (Vec<usize>, usize) {
        let calls = Cell::new(0);
        let cells = kpc_search_with(outcomes.len(), |c| {
            calls.set(calls.get() + 1);
            outcomes[c - 1].clone()
        });
        (cells.iter().map(|c| c.0).collect(), calls.get())
    }

    #[test]
    fn stop_rule_after_drop() {
        let (counts, calls) = scripted(vec![clusters(0.1), clusters(0.2), clusters(0.15), clusters(0.9)]);
        assert_eq!(counts, vec![1, 2, 3]);
        assert_eq!(calls, 3);
    }

    #[test]
    fn stop_rule_equal_dunn_does_not_improve() {
        let (counts, _) = scripted(vec![clusters(0.1), clusters(0.1), clusters(0.5)]);
        assert_eq!(counts, vec![1, 2]);
    }

    #[test]
    fn stop_rule_rescues_first_count() {
        let (counts, _) = scripted(vec![CellOutcome::NoClustering, clusters(0.2), clusters(0.3), CellOutcome::NoClustering, clusters(1.0)]);
        assert_eq!(counts, vec![1, 2, 3, 4]);
        let (counts, calls) = scripted(vec![CellOutcome::NoClustering, CellOutcome::NoClustering, clusters(0.3)]);
        assert_eq!(counts, vec![1, 2]);
        assert_eq!(calls, 2);
    }

    #[test]
    fn stop_rule_always_visits_two() {
        let (counts, _) = scripted(vec![clusters(0.5), clusters(0.1), clusters(0.9)]);
        assert_eq!(counts, vec![1, 2]);
        let (counts, _) = scripted(vec![clusters(0.5)]);
        assert_eq!(counts, vec![1]);
    }

    fn three_blobs(per: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let centres = [(0.0, 0.0), (6.0, 0.0), (3.0, 5.0)];
        let mut x = Array2::zeros((3 * per, 2));
        let mut truth = Vec::new();
        for (c, (cx, cy)) in centres.iter().enumerate() {
            for i in 0..per {
                x[[c * per + i, 0]] = cx + noise.sample(&mut rng);
                x[[c * per + i, 1]] = cy + noise.sample(&mut rng);
                truth.push(c);
            }
        }
        (x, truth)
    }

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            seed: 7,
            gap_references: 10,
            gap_restarts: 3,
            restarts: 5,
            kmax: 5,
            max_kpcs: 3,
            grid: GridOverrides {
                families: Some(vec!["rbf".into(), "polynomial".into()]),
                sigmas: Some(vec![1.0]),
                polynomial_degrees: Some(vec![1]),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn three_blobs_recovered() {
        let (x, truth) = three_blobs(30, 1);
        let report = run_pipeline(x.view(), &small_config()).unwrap();
        let best = report.best_cell().unwrap();
        match &best.outcome {
            CellOutcome::Clusters { k, sizes, .. } => {
                assert_eq!(*k, 3);
                assert_eq!(sizes, &vec![30, 30, 30]);
            }
            other => panic!("{other:?}"),
        }
        let labels = report.best_labels.as_ref().unwrap();
        assert_eq!(adjusted_rand(labels, &truth).unwrap(), 1.0);
        assert_eq!(report.best_scores.as_ref().unwrap().ncols(), best.kpc_count);
        for c in &report.cells {
            if let Some(d) = c.outcome.dunn() {
                assert!(best.outcome.dunn().unwrap() >= d);
            }
        }
    }

    #[test]
    fn pipeline_is_reproducible() {
        let (x, _) = three_blobs(20, 2);
        let mut cfg = small_config();
        cfg.grid.sigmas = None;
        cfg.bootstrap_replicates = 200;
        let a = run_pipeline(x.view(), &cfg).unwrap();
        let b = run_pipeline(x.view(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.candidates.len(), 3);
        assert!(a.bca.is_some());
    }

    #[test]
    fn repeated_row_is_fatal() {
        let x = Array2::from_elem((10, 3), 2.5);
        assert!(matches!(run_pipeline(x.view(), &small_config()), Err(PipelineError::ConstantColumn(0))));
    }

    #[test]
    fn diverging_kernel_is_recorded() {
        let (x, _) = three_blobs(10, 3);
        let z = standardize(x.view()).unwrap().data;
        let spec = KernelSpec::proposed_uniform(2.0, 1e-3, 2).unwrap();
        let cell = evaluate_cell(&spec, z.view(), 1, &small_config());
        assert_eq!(
            cell.outcome,
            CellOutcome::Failed {
                reason: "exponent diverges".into()
            }
        );
        assert_eq!(kpc_search(&spec, z.view(), &small_config()).len(), 1);
    }

    #[test]
    fn linear_kernel_on_one_blob_finds_no_clustering() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let u = rand_distr::Uniform::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((60, 2), |_| u.sample(&mut rng));
        let z = standardize(x.view()).unwrap().data;
        let spec = KernelSpec::polynomial(0.0, 1).unwrap();
        let cell = evaluate_cell(&spec, z.view(), 1, &small_config());
        assert_eq!(cell.outcome, CellOutcome::NoClustering);
    }
}
