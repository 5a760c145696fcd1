use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{CoverageReport, ExperimentOutput, ReplicateFailure, StratumSummary, Summary};
use crate::error::{Error, Result};

/// Output files of an experiment, all in one directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub report_csv: PathBuf,
    pub replicates_csv: PathBuf,
    pub report_json: PathBuf,
}

impl ReportFiles {
    pub fn in_dir(dir: &Path) -> Self {
        ReportFiles {
            report_csv: dir.join("report.csv"),
            replicates_csv: dir.join("replicates.csv"),
            report_json: dir.join("report.json"),
        }
    }

    pub fn write(&self, out: &ExperimentOutput) -> Result<()> {
        write_report_csv(File::create(&self.report_csv)?, &out.reports)?;
        write_replicates_csv(File::create(&self.replicates_csv)?, out)?;
        write_report_json(File::create(&self.report_json)?, out)
    }
}

fn metrics(row: &StratumSummary) -> [(&'static str, Option<Summary>); 4] {
    [
        ("coverage", Some(row.coverage)),
        ("width", row.width),
        ("infinite_fraction", Some(row.infinite_fraction)),
        ("units", Some(row.units)),
    ]
}

/// Long format: `dgp, n, sigma_s, method, stratum, metric, value, se`. An
/// undefined metric (no finite width in any replicate) has blank value and se.
pub fn write_report_csv<W: Write>(writer: W, reports: &[CoverageReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["dgp", "n", "sigma_s", "method", "stratum", "metric", "value", "se"])?;
    for rep in reports {
        for row in &rep.rows {
            for (name, s) in metrics(row) {
                w.write_record([
                    rep.point.kind.to_string(),
                    rep.point.n.to_string(),
                    rep.point.sigma_s.to_string(),
                    row.method.to_string(),
                    row.stratum.to_string(),
                    name.to_string(),
                    s.map(|s| s.mean.to_string()).unwrap_or_default(),
                    s.map(|s| s.se.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per (grid point, replicate, method, stratum).
pub fn write_replicates_csv<W: Write>(writer: W, out: &ExperimentOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dgp",
        "n",
        "sigma_s",
        "replicate",
        "seed",
        "method",
        "stratum",
        "units",
        "coverage",
        "width",
        "infinite_fraction",
    ])?;
    for r in &out.replicates {
        // reports are stored in grid order
        let point = out
            .reports
            .get(r.grid)
            .map(|rep| rep.point)
            .ok_or_else(|| Error::AlignmentError(format!("grid {}", r.grid)))?;
        w.write_record([
            point.kind.to_string(),
            point.n.to_string(),
            point.sigma_s.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            r.score.stratum.to_string(),
            r.score.units.to_string(),
            r.score.coverage().to_string(),
            r.score.mean_width().map(|v| v.to_string()).unwrap_or_default(),
            r.score.infinite_fraction().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonReport<'a> {
    reports: &'a [CoverageReport],
    failures: &'a [ReplicateFailure],
}

/// Mirror of the aggregate report plus the failure log.
pub fn write_report_json<W: Write>(writer: W, out: &ExperimentOutput) -> Result<()> {
    serde_json::to_writer_pretty(writer, &JsonReport { reports: &out.reports, failures: &out.failures })
        .map_err(|e| Error::Io(e.to_string()))
}

fn cell(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!("{:.3} ({:.3})", s.mean, s.se),
        None => "inf".to_string(),
    }
}

/// Plain-text table of coverage and width per method and stratum.
pub fn format_summary(reports: &[CoverageReport]) -> String {
    let mut out = String::new();
    for rep in reports {
        let _ = writeln!(
            out,
            "{} n={} sigma_s={} replicates={} failures={}",
            rep.point.kind, rep.point.n, rep.point.sigma_s, rep.replicates, rep.failures
        );
        let _ = writeln!(
            out,
            "{:<8} {:<6} {:>16} {:>18} {:>10}",
            "method", "stratum", "coverage (se)", "width (se)", "inf-frac"
        );
        for row in &rep.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<6} {:>16} {:>18} {:>10.3}",
                row.method.to_string(),
                row.stratum.to_string(),
                cell(Some(row.coverage)),
                cell(row.width),
                row.infinite_fraction.mean
            );
        }
    }
    out
}
