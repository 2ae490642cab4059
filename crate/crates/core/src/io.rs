//! CSV and JSON input/output.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{CoverageReport, RollingReport};

pub const SERIES_HEADER: &str = "t,value";
pub const REPORT_CSV_HEADER: &str =
    "method,coverage_mean,coverage_se,mean_halfwidth,relative_length_error,k_used,trials,infinite_intervals";
pub const PLOT_HEADER: &str = "x,method,metric,value";

/// A `t,value` time series in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesFile {
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
}

impl SeriesFile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn load_series_csv(path: impl AsRef<Path>) -> Result<SeriesFile> {
    read_series(File::open(path)?)
}

/// Parse a series from any reader; line numbers count the header as line 1.
pub fn read_series(reader: impl Read) -> Result<SeriesFile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let found = headers.iter().collect::<Vec<_>>().join(",");
    if found != SERIES_HEADER {
        return Err(Error::BadHeader { expected: SERIES_HEADER.into(), found });
    }
    let mut series = SeriesFile::default();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let raw = &record[1];
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::ParseError { line, message: format!("`{raw}` is not a finite number") })?;
        series.timestamps.push(record[0].to_string());
        series.values.push(value);
    }
    Ok(series)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::ParseError { line, message: format!("{kind:?}") },
    }
}

/// Write `t,value` rows with `t = 0, 1, …`.
pub fn write_series<T: std::fmt::Display>(out: &mut impl Write, values: &[T]) -> Result<()> {
    writeln!(out, "{SERIES_HEADER}")?;
    for (t, v) in values.iter().enumerate() {
        writeln!(out, "{t},{v}")?;
    }
    Ok(())
}

/// Series values interpreted as state indices below `num_states`.
pub fn series_as_states(series: &SeriesFile, num_states: usize) -> Result<Vec<usize>> {
    series
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.fract() == 0.0 && v >= 0.0 && v < num_states as f64 {
                Ok(v as usize)
            } else {
                Err(Error::ParseError { line: i + 2, message: format!("`{v}` is not a state in 0..{num_states}") })
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::UnsupportedFormat(other.into())),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_report(report: &CoverageReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report).map_err(|e| Error::InvalidData(e.to_string()))? + "\n"),
        ReportFormat::Csv => {
            let mut s = format!("{REPORT_CSV_HEADER}\n");
            for (m, r) in &report.0 {
                s += &format!(
                    "{m},{},{},{},{},{},{},{}\n",
                    r.coverage_mean,
                    r.coverage_se,
                    opt(r.mean_halfwidth),
                    opt(r.relative_length_error),
                    r.k_used,
                    r.trials,
                    r.infinite_intervals
                );
            }
            Ok(s)
        }
    }
}

pub fn write_report(report: &CoverageReport, path: impl AsRef<Path>, format: &str) -> Result<()> {
    let text = format_report(report, format.parse()?)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_report_json(text: &str) -> Result<CoverageReport> {
    serde_json::from_str(text).map_err(|e| Error::InvalidData(e.to_string()))
}

/// One long-format plotting row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotRow {
    pub x: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// Rows for every method and metric of each `(x, report)` pair; missing
/// optional metrics are skipped.
pub fn sweep_rows(sweep: &[(f64, CoverageReport)]) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for (x, report) in sweep {
        for (m, s) in &report.0 {
            let metrics = [
                ("coverage_mean", Some(s.coverage_mean)),
                ("coverage_se", Some(s.coverage_se)),
                ("mean_halfwidth", s.mean_halfwidth),
                ("relative_length_error", s.relative_length_error),
                ("k_used", Some(s.k_used as f64)),
                ("infinite_intervals", Some(s.infinite_intervals as f64)),
            ];
            for (metric, value) in metrics {
                if let Some(value) = value {
                    rows.push(PlotRow { x: *x, method: m.to_string(), metric: metric.into(), value });
                }
            }
        }
    }
    rows
}

/// Rows for bucketed rolling coverage, with `x` the bucket index.
pub fn rolling_rows(report: &RollingReport) -> Vec<PlotRow> {
    report
        .buckets
        .iter()
        .map(|b| PlotRow { x: b.bucket as f64, method: b.method.to_string(), metric: "coverage".into(), value: b.coverage })
        .collect()
}

/// Long-format `x,method,metric,value` CSV sorted by `(x, method, metric)`.
pub fn emit_plot_data(rows: &[PlotRow], out: &mut impl Write) -> Result<()> {
    let mut sorted: Vec<&PlotRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then_with(|| a.method.cmp(&b.method)).then_with(|| a.metric.cmp(&b.metric)));
    let mut w = BufWriter::new(out);
    writeln!(w, "{PLOT_HEADER}")?;
    for r in sorted {
        writeln!(w, "{},{},{},{}", r.x, r.method, r.metric, r.value)?;
    }
    w.flush()?;
    Ok(())
}
