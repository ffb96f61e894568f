//! Gamma-ray burst catalog ingestion, derived quantities, and per-cluster
//! summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// The nine clustering variables, in matrix column order.
pub const VARIABLES: [&str; 9] = ["F1", "F2", "F3", "F4", "P64", "P256", "P1024", "T50", "T90"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub id: String,
    /// Fluences in the four channels (erg cm⁻²).
    pub fluence: [f64; 4],
    /// Peak fluxes on 64, 256, 1024 ms timescales (cm⁻² s⁻¹).
    pub peak: [f64; 3],
    pub t50: f64,
    pub t90: f64,
}

impl Burst {
    pub fn values(&self) -> [f64; 9] {
        let f = self.fluence;
        let p = self.peak;
        [f[0], f[1], f[2], f[3], p[0], p[1], p[2], self.t50, self.t90]
    }

    pub fn total_fluence(&self) -> f64 {
        self.fluence.iter().sum()
    }
}

/// Header names accepted for each column (case-insensitive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnAliases {
    pub id: Vec<String>,
    /// Extra names per entry of [`VARIABLES`]; the canonical name always
    /// matches.
    pub variables: BTreeMap<String, Vec<String>>,
}

impl Default for ColumnAliases {
    fn default() -> Self {
        Self {
            id: vec!["id".into(), "trigger".into(), "burst".into()],
            variables: BTreeMap::new(),
        }
    }
}

impl ColumnAliases {
    fn names_for(&self, var: &str) -> Vec<String> {
        let mut names = vec![var.to_string()];
        if let Some(extra) = self.variables.get(var) {
            names.extend(extra.iter().cloned());
        }
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Missing,
    NonNumeric,
    Negative,
    T50ExceedsT90,
    NonPositiveT90,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrbCatalog {
    pub bursts: Vec<Burst>,
    pub rows_read: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl GrbCatalog {
    pub fn len(&self) -> usize {
        self.bursts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bursts.is_empty()
    }

    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    /// `M × 9` matrix of the clustering variables in [`VARIABLES`] order.
    pub fn feature_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), 9), |(i, j)| self.bursts[i].values()[j])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id"];
        header.extend(VARIABLES);
        w.write_record(&header)?;
        for b in &self.bursts {
            let mut rec = vec![b.id.clone()];
            rec.extend(b.values().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_catalog(path: impl AsRef<Path>, aliases: &ColumnAliases) -> Result<GrbCatalog> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Open {
        path: path.display().to_string(),
        source: e,
    })?;
    read_catalog(std::io::BufReader::new(file), aliases)
}

fn find_column(headers: &csv::StringRecord, names: &[String]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| n.eq_ignore_ascii_case(h.trim())))
}

pub fn read_catalog<R: Read>(input: R, aliases: &ColumnAliases) -> Result<GrbCatalog> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut columns = [0usize; 9];
    for (slot, var) in columns.iter_mut().zip(VARIABLES) {
        *slot = find_column(&headers, &aliases.names_for(var)).ok_or_else(|| DataError::MissingColumn(var.to_string()))?;
    }
    let id_column = find_column(&headers, &aliases.id);

    let mut bursts = Vec::new();
    let mut dropped = BTreeMap::new();
    let mut rows_read = 0;
    for record in reader.records() {
        let record = record?;
        rows_read += 1;
        match parse_row(&record, &columns) {
            Ok(values) => {
                let id = id_column
                    .and_then(|c| record.get(c))
                    .map(|s| s.trim().to_string())
                    .unwrap_or_else(|| rows_read.to_string());
                bursts.push(Burst {
                    id,
                    fluence: [values[0], values[1], values[2], values[3]],
                    peak: [values[4], values[5], values[6]],
                    t50: values[7],
                    t90: values[8],
                });
            }
            Err(reason) => *dropped.entry(reason).or_insert(0) += 1,
        }
    }
    if bursts.is_empty() {
        return Err(DataError::EmptyCatalog { rows_read });
    }
    Ok(GrbCatalog {
        bursts,
        rows_read,
        dropped,
    })
}

fn parse_row(record: &csv::StringRecord, columns: &[usize; 9]) -> std::result::Result<[f64; 9], DropReason> {
    let mut values = [0.0; 9];
    for (v, &c) in values.iter_mut().zip(columns) {
        let field = record.get(c).map(str::trim).unwrap_or("");
        if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
            return Err(DropReason::Missing);
        }
        let x: f64 = field.parse().map_err(|_| DropReason::NonNumeric)?;
        if !x.is_finite() {
            return Err(DropReason::NonNumeric);
        }
        if x < 0.0 {
            return Err(DropReason::Negative);
        }
        *v = x;
    }
    if values[8] <= 0.0 {
        return Err(DropReason::NonPositiveT90);
    }
    if values[7] > values[8] {
        return Err(DropReason::T50ExceedsT90);
    }
    Ok(values)
}

/// Quantities derived from one burst. `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub total_fluence: f64,
    /// Hardness ratio F3/F2.
    pub h32: Option<f64>,
    pub log10_total_fluence: Option<f64>,
    pub log10_t50: Option<f64>,
    pub log10_t90: Option<f64>,
}

fn positive_log10(x: f64) -> Option<f64> {
    (x > 0.0).then(|| x.log10())
}

pub fn derive_burst(b: &Burst) -> Derived {
    let ft = b.total_fluence();
    Derived {
        total_fluence: ft,
        h32: (b.fluence[1] > 0.0).then(|| b.fluence[2] / b.fluence[1]),
        log10_total_fluence: positive_log10(ft),
        log10_t50: positive_log10(b.t50),
        log10_t90: positive_log10(b.t90),
    }
}

pub fn derived(catalog: &GrbCatalog) -> Vec<Derived> {
    catalog.bursts.iter().map(derive_burst).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstClass {
    Short,
    Intermediate,
    Long,
}

/// Lower separating line `F_T = 10^-5.4 / T90^0.9`.
pub fn lower_line(t90: f64) -> f64 {
    10f64.powf(-5.4) / t90.powf(0.9)
}

/// Upper separating line `F_T = 10^-4.6 / T90^0.4`.
pub fn upper_line(t90: f64) -> f64 {
    10f64.powf(-4.6) / t90.powf(0.4)
}

/// Class of a burst relative to the two fluence–duration separating lines.
pub fn separating_class(total_fluence: f64, t90: f64) -> Result<BurstClass> {
    if !(total_fluence > 0.0) || !(t90 > 0.0) {
        return Err(DataError::NonPositive { total_fluence, t90 });
    }
    Ok(if total_fluence < lower_line(t90) {
        BurstClass::Short
    } else if total_fluence > upper_line(t90) {
        BurstClass::Long
    } else {
        BurstClass::Intermediate
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    /// Standard error of the mean, `sd/√n` with the sample sd; 0 for `n = 1`.
    pub sem: f64,
}

impl MeanSem {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sem })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub total_fluence: MeanSem,
    pub t90: MeanSem,
    pub t50: MeanSem,
    pub p64: MeanSem,
    pub p256: MeanSem,
    pub p1024: MeanSem,
    /// Over members with F2 > 0 only.
    pub h32: Option<MeanSem>,
    pub h32_excluded: usize,
}

/// Per-cluster size and mean ± standard error of the burst properties.
pub fn cluster_summary(catalog: &GrbCatalog, labels: &[usize]) -> Result<Vec<ClusterSummary>> {
    if labels.len() != catalog.len() {
        return Err(DataError::LengthMismatch {
            expected: catalog.len(),
            found: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<&Burst> = catalog
            .bursts
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(b, _)| b)
            .collect();
        if members.is_empty() {
            continue;
        }
        let col = |f: &dyn Fn(&Burst) -> f64| -> MeanSem {
            let v: Vec<f64> = members.iter().map(|b| f(b)).collect();
            MeanSem::of(&v).expect("cluster is nonempty")
        };
        let h32: Vec<f64> = members.iter().filter_map(|b| derive_burst(b).h32).collect();
        out.push(ClusterSummary {
            cluster: c,
            size: members.len(),
            total_fluence: col(&|b| b.total_fluence()),
            t90: col(&|b| b.t90),
            t50: col(&|b| b.t50),
            p64: col(&|b| b.peak[0]),
            p256: col(&|b| b.peak[1]),
            p1024: col(&|b| b.peak[2]),
            h32: MeanSem::of(&h32),
            h32_excluded: members.len() - h32.len(),
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(summaries: &[ClusterSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "cluster", "size", "FT_mean", "FT_sem", "T90_mean", "T90_sem", "T50_mean", "T50_sem", "P64_mean", "P64_sem",
        "P256_mean", "P256_sem", "P1024_mean", "P1024_sem", "H32_mean", "H32_sem", "H32_excluded",
    ])?;
    for s in summaries {
        let mut rec = vec![s.cluster.to_string(), s.size.to_string()];
        for m in [s.total_fluence, s.t90, s.t50, s.p64, s.p256, s.p1024] {
            rec.push(m.mean.to_string());
            rec.push(m.sem.to_string());
        }
        match s.h32 {
            Some(m) => {
                rec.push(m.mean.to_string());
                rec.push(m.sem.to_string());
            }
            None => {
                rec.push(String::new());
                rec.push(String::new());
            }
        }
        rec.push(s.h32_excluded.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
