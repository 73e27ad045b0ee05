use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, SamgcError};

pub const HEADER: &str = "epoch,split,loss,oa,macc";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub oa: f64,
    pub macc: f64,
}

pub fn format_metrics_csv(rows: &[MetricsRow], precision: usize) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.p$},{:.p$},{:.p$}",
            r.epoch,
            r.split,
            r.loss,
            r.oa,
            r.macc,
            p = precision
        );
    }
    out
}

/// Writes `rows` with six decimals.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_metrics_csv_with(path, rows, 6)
}

pub fn write_metrics_csv_with(path: &Path, rows: &[MetricsRow], precision: usize) -> Result<()> {
    fs::write(path, format_metrics_csv(rows, precision)).map_err(|e| SamgcError::io(path, e))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(SamgcError::Data(format!("metrics file must start with `{HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || SamgcError::Data(format!("metrics line {}: `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(MetricsRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                split: f[1].to_string(),
                loss: f[2].parse().map_err(|_| bad())?,
                oa: f[3].parse().map_err(|_| bad())?,
                macc: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
