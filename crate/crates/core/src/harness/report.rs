use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::{Error, Result};
use crate::metrics::BiasReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `report.json`, raw fractions.
    Json,
    /// `report.csv`: `algorithm,metric,group,vanilla,mitigated`, bias in
    /// percent with two decimals, NDCG with three.
    Csv,
    /// `plotdata.csv`: one row per (stage, metric, group), raw fractions.
    PlotData,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
            ReportFormat::PlotData => "plotdata.csv",
        }
    }
}

/// One parsed row of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algorithm: String,
    pub metric: String,
    pub group: String,
    pub vanilla: f64,
    pub mitigated: f64,
}

/// `(metric, group, value)` for every cell of a bias report, totals included.
fn cells(r: &BiasReport) -> Vec<(&'static str, String, f64)> {
    let mut out = Vec::new();
    let totals = [
        r.total_bs.continent_vb,
        r.total_bs.continent_eb,
        r.total_bs.pop_vb,
        r.total_bs.pop_eb,
    ];
    for ((metric, values), total) in r.families().into_iter().zip(totals) {
        for v in values {
            out.push((metric, v.group.to_string(), v.value));
        }
        out.push((metric, "total".to_string(), total));
    }
    if let Some(ndcg) = r.ndcg {
        out.push(("ndcg", "all".to_string(), ndcg));
    }
    out
}

/// Rows of `report.csv` before formatting; bias values in percent.
pub fn report_rows(report: &RunReport) -> Vec<CsvRow> {
    let algorithm = report.info.algorithm.to_string();
    let mitigated = cells(report.mitigated());
    cells(&report.vanilla)
        .into_iter()
        .zip(mitigated)
        .map(|((metric, group, v), (_, _, m))| {
            let scale = if metric == "ndcg" { 1.0 } else { 100.0 };
            CsvRow {
                algorithm: algorithm.clone(),
                metric: metric.to_string(),
                group,
                vanilla: v * scale,
                mitigated: m * scale,
            }
        })
        .collect()
}

fn report_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "metric", "group", "vanilla", "mitigated"])?;
    for row in report_rows(report) {
        let digits = if row.metric == "ndcg" { 3 } else { 2 };
        w.write_record([
            row.algorithm,
            row.metric,
            row.group,
            format!("{:.*}", digits, zero_sign(row.vanilla, digits)),
            format!("{:.*}", digits, zero_sign(row.mitigated, digits)),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Maps values that round to zero onto +0 so cells never read "-0.00".
fn zero_sign(v: f64, digits: usize) -> f64 {
    if (v * 10f64.powi(digits as i32)).round() == 0.0 {
        0.0
    } else {
        v
    }
}

fn plotdata_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "stage", "metric", "group", "value"])?;
    let algorithm = report.info.algorithm.to_string();
    let stages = std::iter::once(("vanilla".to_string(), &report.vanilla))
        .chain(report.phases.iter().map(|p| (p.bias_type.to_string(), &p.report)));
    for (stage, r) in stages {
        for (metric, group, value) in cells(r) {
            w.write_record([algorithm.as_str(), &stage, metric, &group, &value.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes one report file into `dir` and returns its path.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    let bytes = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => report_csv(report)?,
        ReportFormat::PlotData => plotdata_csv(report)?,
    };
    let path = dir.join(format.file_name());
    fs::write(&path, bytes).map_err(|source| Error::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn parse_report_csv(reader: impl Read) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let rows = r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub group: String,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
    /// Bias: `|b| <= |a|`. NDCG: `b >= a`.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str, group: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric && r.group == group)
    }

    /// Plain-text table; improvements are marked with `*`.
    pub fn render(&self) -> String {
        let mut out = format!("{:<14}{:<8}{:>12}{:>12}{:>12}\n", "metric", "group", "a", "b", "delta");
        for r in &self.rows {
            let mark = if r.improved { " *" } else { "" };
            let _ = writeln!(out, "{:<14}{:<8}{:>12.4}{:>12.4}{:>12.4}{mark}", r.metric, r.group, r.a, r.b, r.delta);
        }
        out
    }
}

/// Compares the mitigated results of two runs on the same data, split and k.
pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    let (x, y) = (&a.info, &b.info);
    let checks = [
        ("dataset", x.dataset == y.dataset),
        ("format", x.format == y.format),
        ("seed", x.seed == y.seed),
        ("train_fraction", x.train_fraction == y.train_fraction),
        ("min_ratings", x.min_ratings == y.min_ratings),
        ("filter_mode", x.filter_mode == y.filter_mode),
        ("k", x.k == y.k),
        ("target_mode", x.target_mode == y.target_mode),
    ];
    let mismatched: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    if !mismatched.is_empty() {
        return Err(Error::ConfigMismatch(format!("runs differ in {}", mismatched.join(", "))));
    }
    let rows = cells(a.mitigated())
        .into_iter()
        .zip(cells(b.mitigated()))
        .map(|((metric, group, va), (_, _, vb))| {
            let improved = if metric == "ndcg" {
                vb >= va
            } else {
                vb.abs() <= va.abs()
            };
            ComparisonRow {
                metric: metric.to_string(),
                group,
                a: va,
                b: vb,
                delta: vb - va,
                improved,
            }
        })
        .collect();
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Format;
    use crate::harness::{prepare, run_prepared, DataSummary, ExperimentConfig};
    use crate::metrics::BiasReport;
    use crate::mitigation::Phases;
    use crate::testkit::{synth_dataset, SynthSpec};

    fn run(eps: f64, k: usize) -> RunReport {
        let spec = SynthSpec {
            n_users: 50,
            n_items: 60,
            ratings_per_user: 15,
            ..Default::default()
        };
        let (set, map) = synth_dataset(&spec).unwrap();
        let mut config = ExperimentConfig::new("synthetic", Format::GenericTsv, "synthetic");
        config.n = 30;
        config.k = k;
        config.eps = eps;
        config.seed = 1;
        let prepared = prepare(&set, &map, &config, DataSummary::default()).unwrap();
        run_prepared(&prepared, &config).unwrap().report
    }

    #[test]
    fn csv_round_trip_within_precision() {
        let r = run(1.0, 10);
        let dir = tempfile::tempdir().unwrap();
        let path = emit_report(&r, ReportFormat::Csv, dir.path()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("algorithm,metric,group,vanilla,mitigated\n"));
        let parsed = parse_report_csv(text.as_bytes()).unwrap();
        let rows = report_rows(&r);
        assert_eq!(parsed.len(), rows.len());
        for (p, q) in parsed.iter().zip(&rows) {
            assert_eq!((&p.metric, &p.group), (&q.metric, &q.group));
            let tol = if q.metric == "ndcg" { 5e-4 } else { 5e-3 };
            assert!((p.vanilla - q.vanilla).abs() <= tol + 1e-12);
            assert!((p.mitigated - q.mitigated).abs() <= tol + 1e-12);
        }
        let ndcg_line = text.lines().find(|l| l.contains(",ndcg,")).unwrap();
        let cell = ndcg_line.rsplit(',').next().unwrap();
        assert_eq!(cell.split('.').nth(1).unwrap().len(), 3);
        let bias_line = text.lines().nth(1).unwrap();
        assert_eq!(bias_line.rsplit(',').next().unwrap().split('.').nth(1).unwrap().len(), 2);
    }

    #[test]
    fn zero_bias_cells_print_as_zero() {
        let mut r = run(1.0, 10);
        let zero = |b: &mut BiasReport| {
            for v in b.continent_vb.iter_mut().chain(&mut b.continent_eb).chain(&mut b.pop_vb).chain(&mut b.pop_eb) {
                v.value = 0.0;
            }
            b.total_bs = crate::metrics::Totals { continent_vb: 0.0, continent_eb: 0.0, pop_vb: 0.0, pop_eb: 0.0 };
            b.ndcg = None;
        };
        zero(&mut r.vanilla);
        r.phases.clear();
        let text = String::from_utf8(report_csv(&r).unwrap()).unwrap();
        for line in text.lines().skip(1) {
            assert!(line.ends_with(",0.00,0.00"), "{line}");
        }
    }

    #[test]
    fn self_comparison_is_flat_and_mismatch_is_rejected() {
        let a = run(1.0, 10);
        let c = compare_runs(&a, &a).unwrap();
        assert!(c.rows.iter().all(|r| r.delta == 0.0 && r.improved));
        assert!(c.render().contains("ndcg"));
        let b = run(1.0, 8);
        assert!(matches!(compare_runs(&a, &b), Err(Error::ConfigMismatch(_))));
        let mut v = a.clone();
        v.info.phases = Phases::VisibilityOnly;
        assert!(compare_runs(&a, &v).is_ok());
    }
}
