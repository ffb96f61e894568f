//! Plot-ready CSV tables for the catalog figures.
//!
//! Points whose logarithm is undefined (zero fluence, zero duration, F2 = 0
//! for the hardness ratio) are left out and counted in the returned total.

use std::io::Write;

use super::catalog::{derive_burst, lower_line, upper_line, GrbCatalog};
use super::{DataError, Result};

fn check(catalog: &GrbCatalog, labels: &[usize]) -> Result<()> {
    if labels.len() != catalog.len() {
        return Err(DataError::LengthMismatch {
            expected: catalog.len(),
            found: labels.len(),
        });
    }
    Ok(())
}

/// `id,label,x,y` rows for a log–log scatter; returns the number omitted.
fn write_scatter<W, F>(catalog: &GrbCatalog, labels: &[usize], out: W, header: [&str; 4], f: F) -> Result<usize>
where
    W: Write,
    F: Fn(&super::Burst) -> Option<(f64, f64)>,
{
    check(catalog, labels)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    let mut omitted = 0;
    for (b, l) in catalog.bursts.iter().zip(labels) {
        match f(b) {
            Some((x, y)) => w.write_record([b.id.clone(), l.to_string(), x.to_string(), y.to_string()])?,
            None => omitted += 1,
        }
    }
    w.flush()?;
    Ok(omitted)
}

/// log10 T90 against log10 F_T, one row per burst.
pub fn write_fluence_duration<W: Write>(catalog: &GrbCatalog, labels: &[usize], out: W) -> Result<usize> {
    write_scatter(catalog, labels, out, ["id", "label", "log10_T90", "log10_FT"], |b| {
        let d = derive_burst(b);
        Some((d.log10_t90?, d.log10_total_fluence?))
    })
}

/// log10 T90 against log10 H32.
pub fn write_hardness_duration<W: Write>(catalog: &GrbCatalog, labels: &[usize], out: W) -> Result<usize> {
    write_scatter(catalog, labels, out, ["id", "label", "log10_T90", "log10_H32"], |b| {
        let d = derive_burst(b);
        let h = d.h32.filter(|&h| h > 0.0)?;
        Some((d.log10_t90?, h.log10()))
    })
}

/// Both separating lines in log10 space, sampled at `samples` evenly spaced
/// log10 T90 values over `[lo, hi]`.
pub fn write_separating_lines<W: Write>(lo: f64, hi: f64, samples: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["log10_T90", "log10_FT_lower", "log10_FT_upper"])?;
    let steps = samples.max(2) - 1;
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let t = 10f64.powf(x);
        w.write_record([x.to_string(), lower_line(t).log10().to_string(), upper_line(t).log10().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over `[lo, hi]`; the last bin is closed.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
        counts[b.min(bins - 1)] += 1;
    }
    Histogram { edges, counts }
}

/// Histograms of a log10 quantity for all bursts (`group = all`) and per
/// cluster, on shared bins. Returns the number of bursts omitted.
pub fn write_log_histograms<W, F>(catalog: &GrbCatalog, labels: &[usize], bins: usize, out: W, value: F) -> Result<usize>
where
    W: Write,
    F: Fn(&super::Burst) -> Option<f64>,
{
    check(catalog, labels)?;
    let pairs: Vec<(usize, f64)> = catalog
        .bursts
        .iter()
        .zip(labels)
        .filter_map(|(b, &l)| value(b).map(|v| (l, v)))
        .collect();
    let omitted = catalog.len() - pairs.len();
    let all: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "bin_lo", "bin_hi", "count"])?;
    if all.is_empty() {
        w.flush()?;
        return Ok(omitted);
    }
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut groups = vec![("all".to_string(), all)];
    for c in 0..k {
        let v = pairs.iter().filter(|p| p.0 == c).map(|p| p.1).collect();
        groups.push((c.to_string(), v));
    }
    for (name, values) in groups {
        let h = histogram(&values, lo, hi, bins);
        for (i, c) in h.counts.iter().enumerate() {
            w.write_record([name.clone(), h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(omitted)
}
