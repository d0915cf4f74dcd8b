//! Method comparison tables with rank annotations.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::EvalReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: String,
    pub metric: String,
    pub horizon_s: f64,
    pub value: f64,
    /// Spread across agents; only reported for NLL.
    pub std: Option<f64>,
    /// 1 is best; ties share the smallest rank.
    pub rank: usize,
}

/// Standard competition ranking ("1224") of `keys`, smaller is better.
pub fn competition_ranks(keys: &[f64]) -> Vec<usize> {
    keys.iter().map(|k| 1 + keys.iter().filter(|o| o < &k).count()).collect()
}

const METRICS: [&str; 5] = ["nll", "fde", "desv1", "desv2", "desv3"];

/// One row per (method, metric, horizon). NLL and FDE rank ascending,
/// ΔESV ranks by absolute value since zero is perfect calibration.
pub fn emit_tables(reports: &[(String, EvalReport)]) -> Result<Vec<TableRow>> {
    let Some((_, first)) = reports.first() else { return Ok(Vec::new()) };
    let grid = first.horizons();
    if reports.iter().any(|(_, r)| r.horizons() != grid) {
        return Err(Error::GridMismatch);
    }
    let mut rows = Vec::new();
    for metric in METRICS {
        for (h, &horizon_s) in grid.iter().enumerate() {
            let values: Vec<f64> = reports
                .iter()
                .map(|(_, r)| {
                    let row = &r.rows[h];
                    match metric {
                        "nll" => row.nll_mean,
                        "fde" => row.fde,
                        "desv1" => row.desv1,
                        "desv2" => row.desv2,
                        _ => row.desv3,
                    }
                })
                .collect();
            let keys: Vec<f64> = if metric.starts_with("desv") { values.iter().map(|v| v.abs()).collect() } else { values.clone() };
            let ranks = competition_ranks(&keys);
            for (m, (name, r)) in reports.iter().enumerate() {
                rows.push(TableRow {
                    method: name.clone(),
                    metric: metric.to_string(),
                    horizon_s,
                    value: values[m],
                    std: (metric == "nll").then(|| r.rows[h].nll_std),
                    rank: ranks[m],
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::HorizonRow;

    fn report(nll: f64, desv1: f64, horizons: &[f64]) -> EvalReport {
        EvalReport {
            rows: horizons
                .iter()
                .map(|&h| HorizonRow { horizon_s: h, nll_mean: nll, nll_std: 0.1, fde: 1.0, desv1, desv2: 0.0, desv3: 0.0, n: 3 })
                .collect(),
        }
    }

    #[test]
    fn ties_share_rank() {
        let r = report(1.0, 0.0, &[0.2, 0.4]);
        let rows = emit_tables(&[("a".into(), r.clone()), ("b".into(), r.clone()), ("c".into(), r)]).unwrap();
        assert_eq!(rows.len(), 5 * 2 * 3);
        assert!(rows.iter().all(|r| r.rank == 1));
    }

    #[test]
    fn ranking_directions() {
        let h = [0.2];
        let reports = vec![
            ("nll_only".to_string(), report(-1.0, -0.3, &h)),
            ("sd_only".to_string(), report(2.0, 0.6, &h)),
            ("composite".to_string(), report(0.5, 0.1, &h)),
        ];
        let rows = emit_tables(&reports).unwrap();
        let rank = |metric: &str, method: &str| rows.iter().find(|r| r.metric == metric && r.method == method).unwrap().rank;
        assert_eq!((rank("nll", "nll_only"), rank("nll", "composite"), rank("nll", "sd_only")), (1, 2, 3));
        assert_eq!((rank("desv1", "composite"), rank("desv1", "nll_only"), rank("desv1", "sd_only")), (1, 2, 3));
        assert_eq!(competition_ranks(&[3.0, 1.0, 1.0, 2.0]), vec![4, 1, 1, 3]);
    }

    #[test]
    fn single_method_and_grid_mismatch() {
        let rows = emit_tables(&[("x".into(), report(1.0, 0.2, &[0.2, 0.4]))]).unwrap();
        assert!(rows.iter().all(|r| r.rank == 1));
        let bad = [("a".to_string(), report(1.0, 0.0, &[0.2])), ("b".to_string(), report(1.0, 0.0, &[0.4]))];
        assert!(matches!(emit_tables(&bad), Err(Error::GridMismatch)));
        let mut buf = Vec::new();
        write_table_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("method,metric,horizon_s,value,std,rank\nx,nll,0.2,1.0,0.1,1\n"));
    }
}
