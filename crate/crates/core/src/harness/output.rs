use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::estimate::EstimateReport;
use crate::error::{Error, Result};
use crate::mosap::{AllocationRecord, FrontierPoint};

pub const FRONTIER_HEADER: [&str; 4] = ["tau_tilde", "cost", "variance", "normalized_error"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// CSV for `.csv` paths, JSON otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// One row of a baseline comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_variance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_variance: Option<Vec<f64>>,
    /// Why the method produced no allocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub tolerance: Vec<f64>,
    pub rows: Vec<BenchmarkRow>,
}

pub enum Output<'a> {
    Report(&'a EstimateReport),
    Allocation(&'a AllocationRecord),
    Frontier(&'a [FrontierPoint]),
    Benchmark(&'a BenchmarkReport),
}

/// Frontier CSV: fixed header, ascending tau_tilde, 17 significant digits.
pub fn write_frontier_csv(points: &[FrontierPoint], out: impl Write) -> Result<()> {
    let mut sorted: Vec<&FrontierPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.tau_tilde.total_cmp(&b.tau_tilde));
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(FRONTIER_HEADER).map_err(io)?;
    for p in sorted {
        w.write_record([p.tau_tilde, p.cost, p.variance, p.normalized_error].map(|v| format!("{v:.16e}")))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_output(output: &Output, format: Format, mut out: impl Write) -> Result<()> {
    match (output, format) {
        (Output::Frontier(points), Format::Csv) => return write_frontier_csv(points, out),
        (_, Format::Csv) => {
            return Err(Error::Spec("CSV output is only available for Pareto frontiers".into()));
        }
        (Output::Report(r), Format::Json) => serde_json::to_writer_pretty(&mut out, r)?,
        (Output::Allocation(a), Format::Json) => serde_json::to_writer_pretty(&mut out, a)?,
        (Output::Frontier(points), Format::Json) => {
            let mut sorted = points.to_vec();
            sorted.sort_by(|a, b| a.tau_tilde.total_cmp(&b.tau_tilde));
            serde_json::to_writer_pretty(&mut out, &sorted)?
        }
        (Output::Benchmark(b), Format::Json) => serde_json::to_writer_pretty(&mut out, b)?,
    }
    writeln!(out)?;
    Ok(())
}

/// Writes `output` to `path`, or to stdout when `path` is `None`.
pub fn emit_outputs(output: &Output, path: Option<&Path>, format: Format) -> Result<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)?;
            let mut buf = std::io::BufWriter::new(file);
            write_output(output, format, &mut buf)?;
            buf.flush()?;
            Ok(())
        }
        None => write_output(output, format, std::io::stdout().lock()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(t: f64) -> FrontierPoint {
        FrontierPoint {
            tau_tilde: t,
            cost: 1.0 / (t + 1.0),
            variance: 0.1,
            normalized_error: 1.0 / 3.0,
            n: vec![1.0],
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_frontier_csv(&[point(10.0), point(0.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "tau_tilde,cost,variance,normalized_error");
        assert!(lines[1].starts_with("5.0000000000000000e-1,"));
        let third: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(third, 1.0 / 3.0);

        let mut buf = Vec::new();
        write_frontier_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tau_tilde,cost,variance,normalized_error\n");
    }

    #[test]
    fn csv_is_frontier_only() {
        let report = BenchmarkReport {
            tolerance: vec![1.0],
            rows: Vec::new(),
        };
        assert!(write_output(&Output::Benchmark(&report), Format::Csv, Vec::new()).is_err());
    }
}
