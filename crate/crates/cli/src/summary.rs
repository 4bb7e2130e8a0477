//! Per-run summary rows and their aggregation across seeds.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use safe_transfer::safe_loop::ExperimentTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub benchmark: String,
    pub method: String,
    pub seed: u64,
    pub status: String,
    pub n_queries: usize,
    pub safe_query_ratio: Option<f64>,
    pub explored_regions: Option<usize>,
    pub final_rmse: Option<f64>,
    pub final_tp_rate: Option<f64>,
    pub final_fp_rate: Option<f64>,
    pub last_fit_seconds: Option<f64>,
    pub total_seconds: f64,
}

impl SummaryRow {
    pub fn from_trace(benchmark: &str, trace: &ExperimentTrace, has_regions: bool) -> Self {
        let last = trace.last();
        SummaryRow {
            benchmark: benchmark.to_string(),
            method: trace.method.name().to_string(),
            seed: trace.seed,
            status: trace.status.label().to_string(),
            n_queries: trace.records.len(),
            safe_query_ratio: trace.safe_query_ratio().ok(),
            explored_regions: has_regions.then(|| trace.explored_regions()),
            final_rmse: last.map(|r| r.rmse),
            final_tp_rate: last.map(|r| r.tp_rate),
            final_fp_rate: last.map(|r| r.fp_rate),
            last_fit_seconds: last.map(|r| r.fit_seconds),
            total_seconds: trace.total_seconds,
        }
    }
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R) -> csv::Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// Sample mean and standard error of the mean (`n - 1` denominator); the
/// error is `None` for a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: Option<f64>,
    pub n: usize,
}

pub fn mean_se(values: &[f64]) -> Option<MeanSe> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Some(MeanSe { mean, se, n })
}

impl std::fmt::Display for MeanSe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.se {
            Some(se) => write!(f, "{:.4} ± {:.4} (n={})", self.mean, se, self.n),
            None => write!(f, "{:.4} (n=1)", self.mean),
        }
    }
}

pub const METRICS: [&str; 7] = [
    "safe_query_ratio",
    "explored_regions",
    "final_rmse",
    "final_tp_rate",
    "final_fp_rate",
    "last_fit_seconds",
    "n_queries",
];

fn metric(r: &SummaryRow, name: &str) -> Option<f64> {
    match name {
        "safe_query_ratio" => r.safe_query_ratio,
        "explored_regions" => r.explored_regions.map(|v| v as f64),
        "final_rmse" => r.final_rmse,
        "final_tp_rate" => r.final_tp_rate,
        "final_fp_rate" => r.final_fp_rate,
        "last_fit_seconds" => r.last_fit_seconds,
        "n_queries" => Some(r.n_queries as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub benchmark: String,
    pub method: String,
    pub runs: usize,
    /// Per entry of [`METRICS`]; runs lacking a value are left out.
    pub metrics: Vec<Option<MeanSe>>,
}

/// Groups rows by benchmark and method, in order of first appearance.
pub fn aggregate(rows: &[SummaryRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.benchmark.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(b, m)| {
            let group: Vec<&SummaryRow> = rows.iter().filter(|r| r.benchmark == b && r.method == m).collect();
            let metrics = METRICS
                .iter()
                .map(|name| mean_se(&group.iter().filter_map(|r| metric(r, name)).collect::<Vec<_>>()))
                .collect();
            Aggregate { benchmark: b, method: m, runs: group.len(), metrics }
        })
        .collect()
}

pub fn render_table(aggs: &[Aggregate]) -> String {
    let mut out = String::new();
    for a in aggs {
        out.push_str(&format!("{} / {} ({} runs; mean ± standard error)\n", a.benchmark, a.method, a.runs));
        for (name, m) in METRICS.iter().zip(&a.metrics) {
            let v = m.map_or_else(|| "n/a".to_string(), |m| m.to_string());
            out.push_str(&format!("  {name:<18} {v}\n"));
        }
    }
    out
}

pub fn render_csv(aggs: &[Aggregate]) -> String {
    let mut out = String::from("benchmark,method,metric,mean,se,n\n");
    for a in aggs {
        for (name, m) in METRICS.iter().zip(&a.metrics) {
            if let Some(m) = m {
                let se = m.se.map_or(String::new(), |s| s.to_string());
                out.push_str(&format!("{},{},{name},{},{se},{}\n", a.benchmark, a.method, m.mean, m.n));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, rmse: f64, regions: usize) -> SummaryRow {
        SummaryRow {
            benchmark: "branin".into(),
            method: method.into(),
            seed,
            status: "completed".into(),
            n_queries: 100,
            safe_query_ratio: Some(1.0),
            explored_regions: Some(regions),
            final_rmse: Some(rmse),
            final_tp_rate: None,
            final_fp_rate: Some(0.0),
            last_fit_seconds: Some(0.5),
            total_seconds: 1.0,
        }
    }

    #[test]
    fn mean_and_standard_error() {
        // 2, 4, 4, 4, 5, 5, 7, 9: mean 5, sample sd sqrt(32/7)
        let m = mean_se(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((m.mean - 5.0).abs() < 1e-12);
        assert!((m.se.unwrap() - (32.0f64 / 7.0 / 8.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_se(&[3.0]).unwrap().se, None);
        assert!(mean_se(&[]).is_none());
    }

    #[test]
    fn five_trace_fixture() {
        let rmse = [0.12, 0.10, 0.15, 0.11, 0.09];
        let mut rows: Vec<SummaryRow> = rmse.iter().enumerate().map(|(i, r)| row("eff_hgp", i as u64, *r, 2)).collect();
        rows.push(row("sal", 0, 1.5, 1));
        let a = aggregate(&rows);
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].method.as_str(), a[0].runs), ("eff_hgp", 5));
        let r = a[0].metrics[2].unwrap();
        // AVERAGE = 0.114, STDEV.S = 0.0230217, / sqrt(5) = 0.0102956
        assert!((r.mean - 0.114).abs() < 1e-12);
        assert!((r.se.unwrap() - 0.010_295_630).abs() < 1e-8);
        assert_eq!(a[0].metrics[1].unwrap().se, Some(0.0));
        assert!(a[0].metrics[3].is_none());
        assert!(render_table(&a).contains("(n=5)"));
        assert!(render_csv(&a).contains("branin,sal,final_rmse,1.5,,1"));
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![row("sal", 1, 0.5, 1), SummaryRow { explored_regions: None, ..row("full_hgp", 2, 0.25, 0) }];
        let mut buf = Vec::new();
        write_summary(&mut buf, &rows).unwrap();
        assert_eq!(read_summary(&buf[..]).unwrap(), rows);
    }
}
