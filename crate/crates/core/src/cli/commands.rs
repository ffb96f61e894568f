use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::{s, Array2, ArrayView2};
use serde::Serialize;

use super::manifest::{fingerprint, Invocation, RunManifest, Timing};
use super::{CliError, Generator, GridArgs, ReplayArgs, ReportArgs, SimulateArgs};
use crate::bootstrap::BcaInterval;
use crate::clustering::{average_linkage, cut_dendrogram, distance_matrix, kmeans};
use crate::data::{
    self, cluster_summary, derive_burst, entangled_spirals, four_shapes, load_catalog, plots, shapes, write_summary_csv,
    GeneratorParams, LabeledPoints, SPIRAL_TURNS,
};
use crate::kernels::KernelSpec;
use crate::kpca::{fit_kpca, training_scores};
use crate::pipeline::{
    load_input, robustness_check, run_pipeline, write_cells_csv, write_scores_csv, DataFormat, GridCell, PipelineConfig,
};
use crate::validation::{adjusted_rand, silhouette};

/// Scales of the proposed kernel (p = 1/2) for the two simulations.
pub const SPIRAL_SCALES: [f64; 2] = [0.07, 0.13];
pub const SHAPES_SCALES: [f64; 2] = [1.24, 1.89];

const MANIFEST: &str = "manifest.json";
const TIMING: &str = "timing.json";

/// Files written into one output directory, remembered for the manifest.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.names.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Compute(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&self.dir.join(name), e))
    }

    fn finish(mut self, mut manifest: RunManifest, started: (SystemTime, Instant)) -> Result<(), CliError> {
        let command = match &manifest.invocation {
            Invocation::Simulate { .. } => "simulate",
            Invocation::Grid { .. } => "grid",
            Invocation::Report { .. } => "report",
        };
        manifest.outputs = std::mem::take(&mut self.names);
        self.json(MANIFEST, &manifest)?;
        let timing = Timing {
            command: command.to_string(),
            started_unix_ms: started.0.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
            elapsed_ms: started.1.elapsed().as_millis(),
            threads: crate::par::current_threads(),
        };
        self.json(TIMING, &timing)
    }
}

fn now() -> (SystemTime, Instant) {
    (SystemTime::now(), Instant::now())
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::io(path, e))
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let invocation = Invocation::Simulate {
        generator: args.generator,
        n: args.n,
        noise_sd: args.noise,
        seed: args.seed,
        restarts: args.restarts,
    };
    execute(invocation, &args.out)
}

#[derive(Serialize)]
struct SimulationResult {
    params: GeneratorParams,
    kernel: KernelSpec,
    eigenvalues: Vec<f64>,
    k: usize,
    ari_first_kpc: f64,
    ari_first_two_kpcs: f64,
    layout: serde_json::Value,
}

fn layout(generator: Generator) -> serde_json::Value {
    match generator {
        Generator::Spirals => serde_json::json!({
            "radius": "(2w + 1) / 3",
            "angle": "2 pi w",
            "turns": SPIRAL_TURNS,
            "second_arm": "point reflection of the first",
        }),
        Generator::Shapes => serde_json::json!({
            "gaussian_center": shapes::GAUSSIAN_CENTER,
            "gaussian_sd": shapes::GAUSSIAN_SD,
            "square_origin": shapes::SQUARE_ORIGIN,
            "square_side": shapes::SQUARE_SIDE,
            "triangle": shapes::TRIANGLE,
            "wave_origin": shapes::WAVE_ORIGIN,
            "wave_length": shapes::WAVE_LENGTH,
            "wave_amplitude": shapes::WAVE_AMPLITUDE,
            "wave_frequency": shapes::WAVE_FREQUENCY,
            "wave_half_width": shapes::WAVE_HALF_WIDTH,
        }),
    }
}

fn run_simulation(
    generator: Generator,
    n: usize,
    noise_sd: f64,
    seed: u64,
    restarts: usize,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let (points, scales): (LabeledPoints, [f64; 2]) = match generator {
        Generator::Spirals => (entangled_spirals(n, noise_sd, seed)?, SPIRAL_SCALES),
        Generator::Shapes => (four_shapes(n, seed)?, SHAPES_SCALES),
    };
    let spec = KernelSpec::proposed(0.5, scales.to_vec()).map_err(|e| CliError::Compute(e.to_string()))?;
    let model = fit_kpca(&spec, points.points.view(), 2).map_err(|e| CliError::Compute(e.to_string()))?;
    let scores = training_scores(&model);
    if scores.ncols() < 2 {
        return Err(CliError::Compute(format!("only {} usable components", scores.ncols())));
    }
    let k = points.class_count();
    let one = kmeans(scores.slice(s![.., ..1]), k, seed, restarts).map_err(csv_err)?;
    let two = kmeans(scores.slice(s![.., ..2]), k, seed, restarts).map_err(csv_err)?;
    let ari = |labels: &[usize]| adjusted_rand(labels, &points.labels).map_err(csv_err);

    points.write_csv(out.file("points.csv")?)?;
    write_scores_csv(scores.view(), out.file("scores.csv")?)?;
    one.write_csv(out.file("labels_1kpc.csv")?).map_err(csv_err)?;
    two.write_csv(out.file("labels_2kpc.csv")?).map_err(csv_err)?;
    let mut plot = csv::Writer::from_writer(out.file("plot_data.csv")?);
    plot.write_record(["x", "y", "truth", "kpc1", "kpc2", "label_1kpc", "label_2kpc"])
        .map_err(csv_err)?;
    for i in 0..points.points.nrows() {
        plot.write_record([
            points.points[[i, 0]].to_string(),
            points.points[[i, 1]].to_string(),
            points.labels[i].to_string(),
            scores[[i, 0]].to_string(),
            scores[[i, 1]].to_string(),
            one.labels[i].to_string(),
            two.labels[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    plot.flush().map_err(|e| CliError::io(&out.dir, e))?;
    drop(plot);

    let result = SimulationResult {
        params: points.params,
        kernel: spec,
        eigenvalues: model.eigenvalues().to_vec(),
        k,
        ari_first_kpc: ari(&one.labels)?,
        ari_first_two_kpcs: ari(&two.labels)?,
        layout: layout(generator),
    };
    out.json("result.json", &result)?;
    println!(
        "{:?}: ARI first KPC {:.4}, first two KPCs {:.4}",
        generator, result.ari_first_kpc, result.ari_first_two_kpcs
    );
    Ok(())
}

pub fn grid(args: &GridArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &args.data {
        config.data = Some(d.clone());
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(k) = args.kmax {
        config.kmax = k;
    }
    if let Some(b) = args.bootstrap_b {
        config.bootstrap_replicates = b;
    }
    if let Some(r) = args.restarts {
        config.restarts = r;
    }
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("no data file: pass --data or set \"data\" in the config".into()))?;
    config.data = Some(absolute(data)?);
    execute(Invocation::Grid { config }, &args.out)
}

/// Summary of a grid run without the standardized data matrix.
#[derive(Serialize)]
struct GridSummary<'a> {
    rows: usize,
    variables: usize,
    rows_read: Option<usize>,
    dropped: Option<&'a std::collections::BTreeMap<data::DropReason, usize>>,
    means: &'a [f64],
    sds: &'a [f64],
    bca: Option<BcaInterval>,
    candidates: &'a [f64],
    best: Option<usize>,
    cells: &'a [GridCell],
}

fn run_grid(config: &PipelineConfig, manifest: &mut RunManifest, out: &mut Outputs) -> Result<(), CliError> {
    let data_path = config.data.as_ref().expect("grid invocations carry a data path");
    let input = load_input(config)?;
    manifest.inputs.push(fingerprint(data_path)?);
    if config.grid.sigmas.is_none() {
        manifest
            .notes
            .push("scale interval: data standardized once, bootstrap resamples whole standardized rows".into());
    }
    let report = run_pipeline(input.matrix.view(), config)?;

    write_cells_csv(&report.cells, out.file("table2.csv")?)?;
    let summary = GridSummary {
        rows: input.matrix.nrows(),
        variables: input.matrix.ncols(),
        rows_read: input.catalog.as_ref().map(|c| c.rows_read),
        dropped: input.catalog.as_ref().map(|c| &c.dropped),
        means: &report.standardization.means,
        sds: &report.standardization.sds,
        bca: report.bca,
        candidates: &report.candidates,
        best: report.best,
        cells: &report.cells,
    };
    out.json("pipeline.json", &summary)?;
    out.json("best.json", &report.best_cell())?;
    if let (Some(scores), Some(labels)) = (&report.best_scores, &report.best_labels) {
        write_scores_csv(scores.view(), out.file("best_scores.csv")?)?;
        write_labels(labels, out.file("kmeans_labels.csv")?)?;
    }
    match report.best_cell() {
        Some(c) => println!(
            "best: {} ({}) with {} KPC(s), Dunn {:e}",
            c.spec.family(),
            c.spec.hyperparameters(),
            c.kpc_count,
            c.outcome.dunn().unwrap_or(f64::NAN)
        ),
        None => println!("no grid cell found a clustering"),
    }
    Ok(())
}

fn write_labels<W: Write>(labels: &[usize], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "label"]).map_err(csv_err)?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn read_run_file(run: &Path, name: &str) -> Result<(Array2<f64>, PathBuf), CliError> {
    let path = run.join(name);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "run directory {} is incomplete: {name} is missing",
            run.display()
        )));
    }
    let m = data::load_matrix(&path)?;
    Ok((m.slice(s![.., 1..]).to_owned(), path))
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let out = args.out.clone().unwrap_or_else(|| args.run.join("report"));
    let invocation = Invocation::Report {
        run: absolute(&args.run)?,
        kmax: args.kmax,
        neighbors: args.neighbors,
        bins: args.bins,
    };
    execute(invocation, &out)
}

#[derive(Serialize)]
struct RobustnessSummary {
    chosen_k: usize,
    hierarchical_sizes: Vec<usize>,
    knn_error: f64,
    neighbors: usize,
    ari_hierarchical_vs_kmeans: f64,
}

fn run_report(
    run: &Path,
    kmax: usize,
    neighbors: usize,
    bins: usize,
    manifest: &mut RunManifest,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let grid_manifest_path = run.join(MANIFEST);
    if !grid_manifest_path.is_file() {
        return Err(CliError::Usage(format!("{} is not a grid run: no {MANIFEST}", run.display())));
    }
    let grid_manifest = RunManifest::load(&grid_manifest_path)?;
    let Invocation::Grid { config } = &grid_manifest.invocation else {
        return Err(CliError::Usage(format!("{} was not written by grid", grid_manifest_path.display())));
    };
    let (scores, scores_path) = read_run_file(run, "best_scores.csv")?;
    let (label_matrix, labels_path) = read_run_file(run, "kmeans_labels.csv")?;
    manifest.inputs.push(fingerprint(&scores_path)?);
    manifest.inputs.push(fingerprint(&labels_path)?);
    let labels: Vec<usize> = label_matrix.column(0).iter().map(|&v| v as usize).collect();

    let r = robustness_check(scores.view(), &labels, kmax, neighbors)?;
    let mut w = csv::Writer::from_writer(out.file("asw.csv")?);
    w.write_record(["k", "asw", "sizes"]).map_err(csv_err)?;
    for row in &r.asw {
        let sizes: Vec<String> = row.sizes.iter().map(usize::to_string).collect();
        w.write_record([row.k.to_string(), row.asw.to_string(), sizes.join(";")])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    drop(w);
    out.json(
        "robustness.json",
        &RobustnessSummary {
            chosen_k: r.chosen_k,
            hierarchical_sizes: r.hierarchical.sizes(),
            knn_error: r.knn_error,
            neighbors: r.neighbors,
            ari_hierarchical_vs_kmeans: r.ari_vs_kmeans,
        },
    )?;
    write_labels(&r.hierarchical.labels, out.file("hierarchical_labels.csv")?)?;

    let tree = average_linkage(scores.view()).map_err(csv_err)?;
    tree.write_csv(out.file("dendrogram.csv")?).map_err(csv_err)?;
    let cut = cut_dendrogram(&tree, r.chosen_k).map_err(csv_err)?;
    let (widths, _) = silhouette(&distance_matrix(scores.view()), &cut.labels).map_err(csv_err)?;
    let mut w = csv::Writer::from_writer(out.file("silhouette.csv")?);
    w.write_record(["row", "cluster", "width"]).map_err(csv_err)?;
    for (i, (l, s)) in cut.labels.iter().zip(&widths).enumerate() {
        w.write_record([i.to_string(), l.to_string(), s.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    drop(w);
    write_kpc_scatter(scores.view(), &labels, &r.hierarchical.labels, out.file("kpc_scatter.csv")?)?;

    if config.format == DataFormat::Catalog {
        let data_path = config.data.as_ref().expect("grid invocations carry a data path");
        if let Some(recorded) = grid_manifest.inputs.iter().find(|f| &f.path == data_path) {
            recorded.verify()?;
        }
        manifest.inputs.push(fingerprint(data_path)?);
        let catalog = load_catalog(data_path, &config.columns)?;
        write_summary_csv(&cluster_summary(&catalog, &labels)?, out.file("summary_kmeans.csv")?)?;
        write_summary_csv(
            &cluster_summary(&catalog, &r.hierarchical.labels)?,
            out.file("summary_hierarchical.csv")?,
        )?;
        let mut omitted = std::collections::BTreeMap::new();
        omitted.insert("fluence_duration", plots::write_fluence_duration(&catalog, &labels, out.file("fluence_duration.csv")?)?);
        plots::write_separating_lines(-2.0, 3.0, 101, out.file("separating_lines.csv")?)?;
        omitted.insert(
            "hist_log_ft",
            plots::write_log_histograms(&catalog, &labels, bins, out.file("hist_log_ft.csv")?, |b| {
                derive_burst(b).log10_total_fluence
            })?,
        );
        omitted.insert(
            "hist_log_t90",
            plots::write_log_histograms(&catalog, &labels, bins, out.file("hist_log_t90.csv")?, |b| {
                derive_burst(b).log10_t90
            })?,
        );
        omitted.insert(
            "hardness_duration",
            plots::write_hardness_duration(&catalog, &labels, out.file("hardness_duration.csv")?)?,
        );
        out.json("omitted_points.json", &omitted)?;
    }
    println!(
        "hierarchical k={} (ASW argmax), {}-NN error {:.6}, ARI vs k-means {:.4}",
        r.chosen_k, r.neighbors, r.knn_error, r.ari_vs_kmeans
    );
    Ok(())
}

fn write_kpc_scatter<W: Write>(scores: ArrayView2<'_, f64>, kmeans: &[usize], hier: &[usize], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row".to_string()];
    header.extend((1..=scores.ncols()).map(|j| format!("kpc{j}")));
    header.push("kmeans".into());
    header.push("hierarchical".into());
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in scores.rows().into_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        rec.push(kmeans[i].to_string());
        rec.push(hier[i].to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Run a recorded invocation into `out_dir` and write its manifest.
fn execute(invocation: Invocation, out_dir: &Path) -> Result<(), CliError> {
    let started = now();
    let mut out = Outputs::create(out_dir)?;
    let mut manifest = RunManifest::new(invocation.clone());
    match &invocation {
        Invocation::Simulate {
            generator,
            n,
            noise_sd,
            seed,
            restarts,
        } => run_simulation(*generator, *n, *noise_sd, *seed, *restarts, &mut out)?,
        Invocation::Grid { config } => run_grid(config, &mut manifest, &mut out)?,
        Invocation::Report {
            run,
            kmax,
            neighbors,
            bins,
        } => run_report(run, *kmax, *neighbors, *bins, &mut manifest, &mut out)?,
    }
    out.finish(manifest, started)
}

pub fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let manifest = RunManifest::load(&args.manifest)?;
    for input in &manifest.inputs {
        input.verify()?;
    }
    execute(manifest.invocation, &args.out)
}
