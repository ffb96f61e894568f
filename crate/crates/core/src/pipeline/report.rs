use std::io::Write;

use ndarray::ArrayView2;

use super::search::{CellOutcome, GridCell};
use super::Result;

/// One row per cell in the Table 2 layout. Missing entries are `-`; sizes
/// are joined with `;`.
pub fn write_cells_csv<W: Write>(cells: &[GridCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kernel", "hyperparameters", "kpc_count", "clusters", "sizes", "dunn", "outcome"])?;
    for c in cells {
        let (clusters, sizes, dunn, outcome) = match &c.outcome {
            CellOutcome::Clusters { k, sizes, dunn } => (
                k.to_string(),
                sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                format!("{dunn:e}"),
                "clusters".to_string(),
            ),
            CellOutcome::NoClustering => ("1".into(), "-".into(), "-".into(), "no_clustering".into()),
            CellOutcome::Failed { reason } => ("-".into(), "-".into(), "-".into(), format!("failed: {reason}")),
        };
        w.write_record([
            c.spec.family().to_string(),
            c.spec.hyperparameters(),
            c.kpc_count.to_string(),
            clusters,
            sizes,
            dunn,
            outcome,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `row,kpc1,kpc2,…` with full round-trip precision.
pub fn write_scores_csv<W: Write>(scores: ArrayView2<'_, f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row".to_string()];
    header.extend((1..=scores.ncols()).map(|j| format!("kpc{j}")));
    w.write_record(&header)?;
    for (i, row) in scores.rows().into_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use ndarray::array;

    #[test]
    fn table_rows() {
        let cells = vec![
            GridCell {
                spec: KernelSpec::proposed_uniform(0.5, 0.94, 9).unwrap(),
                kpc_count: 2,
                outcome: CellOutcome::Clusters {
                    k: 3,
                    sizes: vec![941, 588, 443],
                    dunn: 0.018853,
                },
            },
            GridCell {
                spec: KernelSpec::polynomial(0.0, 1).unwrap(),
                kpc_count: 1,
                outcome: CellOutcome::NoClustering,
            },
        ];
        let mut buf = Vec::new();
        write_cells_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "proposed,\"p=1/2, s=0.94\",2,3,941;588;443,1.8853e-2,clusters");
        assert_eq!(lines[2], "polynomial,\"c=0, d=1\",1,1,-,-,no_clustering");
    }

    #[test]
    fn scores_round_trip() {
        let s = array![[0.1, -2.5], [1.0 / 3.0, 4.0]];
        let mut buf = Vec::new();
        write_scores_csv(s.view(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("row,kpc1,kpc2\n0,0.1,-2.5\n"));
        let third: f64 = text.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(third, 1.0 / 3.0);
    }
}
