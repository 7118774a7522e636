//! CSV / JSON reports and the human-readable table.
//!
//! Both machine formats carry one row per record, in sweep order, followed by
//! a summary of per-step speedups of every kernel relative to `bevpoolv2`.
//! Every numeric field is an integer (nanoseconds or bytes).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::harness::{BenchRecord, RecordStatus};

/// Kernel every speedup is measured against.
pub const REFERENCE_KERNEL: &str = "bevpoolv2";
const SUMMARY_TAG: &str = "summary";

pub const CSV_COLUMNS: [&str; 12] = [
    "kernel",
    "feat_h",
    "feat_w",
    "D",
    "C",
    "grid",
    "median_ns",
    "p10_ns",
    "p90_ns",
    "aux_bytes_measured",
    "aux_bytes_model",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no records")]
    NoRecords,
    #[error("unknown format `{0}` (expected csv or json)")]
    UnknownFormat(String),
    #[error("malformed report: {0}")]
    Parse(String),
}

/// One report line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kernel: String,
    pub feat_h: u64,
    pub feat_w: u64,
    #[serde(rename = "D")]
    pub depth_bins: u64,
    #[serde(rename = "C")]
    pub channels: u64,
    pub grid: String,
    pub median_ns: Option<u64>,
    pub p10_ns: Option<u64>,
    pub p90_ns: Option<u64>,
    pub aux_bytes_measured: Option<u64>,
    pub aux_bytes_model: Option<u64>,
    /// `ok` or `failed: <reason>`.
    pub status: String,
}

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn cell_key(&self) -> (u64, u64, u64, u64, String) {
        (self.feat_h, self.feat_w, self.depth_bins, self.channels, self.grid.clone())
    }

    fn cell_label(&self) -> String {
        format!("{}x{}", self.feat_h, self.feat_w)
    }
}

impl From<&BenchRecord> for ReportRow {
    fn from(r: &BenchRecord) -> Self {
        let ok = r.status.is_ok();
        Self {
            kernel: r.kernel.name().to_string(),
            feat_h: r.cell.feat_h as u64,
            feat_w: r.cell.feat_w as u64,
            depth_bins: r.cell.depth_bins as u64,
            channels: r.cell.channels as u64,
            grid: r.cell.grid_label(),
            median_ns: ok.then_some(r.median_ns),
            p10_ns: ok.then_some(r.p10_ns),
            p90_ns: ok.then_some(r.p90_ns),
            aux_bytes_measured: r.aux_bytes_measured,
            aux_bytes_model: r.model.map(|m| m.auxiliary),
            status: match &r.status {
                RecordStatus::Ok => "ok".to_string(),
                RecordStatus::Failed(reason) => format!("failed: {reason}"),
            },
        }
    }
}

/// Median latency of `baseline` over median latency of `bevpoolv2`, per
/// ladder step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupSeries {
    pub baseline: String,
    pub cells: Vec<String>,
    pub ratios: Vec<Option<f64>>,
}

impl SpeedupSeries {
    pub fn min_max(&self) -> Option<(f64, f64)> {
        let known: Vec<f64> = self.ratios.iter().flatten().copied().collect();
        if known.is_empty() {
            return None;
        }
        let min = known.iter().copied().fold(f64::INFINITY, f64::min);
        let max = known.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((min, max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reference: String,
    pub speedups: Vec<SpeedupSeries>,
}

pub fn summarize(rows: &[ReportRow]) -> Summary {
    let mut cells: Vec<(u64, u64, u64, u64, String)> = Vec::new();
    for row in rows {
        let key = row.cell_key();
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    let labels: Vec<String> = cells.iter().map(|c| format!("{}x{}", c.0, c.1)).collect();
    let median = |kernel: &str, cell: &(u64, u64, u64, u64, String)| {
        rows.iter()
            .find(|r| r.kernel == kernel && &r.cell_key() == cell && r.is_ok())
            .and_then(|r| r.median_ns)
    };
    let mut seen = BTreeSet::new();
    let baselines: Vec<&str> = rows
        .iter()
        .map(|r| r.kernel.as_str())
        .filter(|k| *k != REFERENCE_KERNEL && seen.insert(*k))
        .collect();
    let speedups = baselines
        .into_iter()
        .map(|baseline| SpeedupSeries {
            baseline: baseline.to_string(),
            cells: labels.clone(),
            ratios: cells
                .iter()
                .map(|cell| match (median(baseline, cell), median(REFERENCE_KERNEL, cell)) {
                    (Some(b), Some(r)) if r > 0 => Some(b as f64 / r as f64),
                    _ => None,
                })
                .collect(),
        })
        .collect();
    Summary {
        reference: REFERENCE_KERNEL.to_string(),
        speedups,
    }
}

fn ratio_text(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

fn summary_text(summary: &Summary) -> String {
    let series: Vec<String> = summary
        .speedups
        .iter()
        .map(|s| {
            let ratios: Vec<String> = s.ratios.iter().map(|&r| ratio_text(r)).collect();
            format!("{}/{}={}", s.baseline, summary.reference, ratios.join(" "))
        })
        .collect();
    format!("speedup {}", series.join("; "))
}

fn opt(v: Option<u64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn emit_report(records: &[BenchRecord], format: Format) -> Result<Vec<u8>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    let rows: Vec<ReportRow> = records.iter().map(ReportRow::from).collect();
    let summary = summarize(&rows);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| ReportError::Parse(e.to_string());
            w.write_record(CSV_COLUMNS).map_err(csv_err)?;
            for r in &rows {
                w.write_record([
                    r.kernel.clone(),
                    r.feat_h.to_string(),
                    r.feat_w.to_string(),
                    r.depth_bins.to_string(),
                    r.channels.to_string(),
                    r.grid.clone(),
                    opt(r.median_ns),
                    opt(r.p10_ns),
                    opt(r.p90_ns),
                    opt(r.aux_bytes_measured),
                    opt(r.aux_bytes_model),
                    r.status.clone(),
                ])
                .map_err(csv_err)?;
            }
            let mut last = vec![String::new(); CSV_COLUMNS.len()];
            last[0] = SUMMARY_TAG.to_string();
            last[CSV_COLUMNS.len() - 1] = summary_text(&summary);
            w.write_record(&last).map_err(csv_err)?;
            w.into_inner().map_err(|e| ReportError::Parse(e.to_string()))
        }
        Format::Json => {
            let mut items: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| serde_json::to_value(r).expect("rows serialize"))
                .collect();
            items.push(serde_json::json!({ SUMMARY_TAG: summary }));
            let mut out = serde_json::to_vec_pretty(&items).expect("values serialize");
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Reads back either report format; the summary is dropped (recompute it
/// with [`summarize`]).
pub fn parse_report(bytes: &[u8]) -> Result<Vec<ReportRow>, ReportError> {
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    let rows = if first == Some(&b'[') {
        let items: Vec<serde_json::Value> =
            serde_json::from_slice(bytes).map_err(|e| ReportError::Parse(e.to_string()))?;
        items
            .into_iter()
            .filter(|v| v.get(SUMMARY_TAG).is_none())
            .map(|v| serde_json::from_value(v).map_err(|e| ReportError::Parse(e.to_string())))
            .collect::<Result<Vec<ReportRow>, _>>()?
    } else {
        let mut reader = csv::Reader::from_reader(bytes);
        let headers = reader.headers().map_err(|e| ReportError::Parse(e.to_string()))?.clone();
        if headers.iter().ne(CSV_COLUMNS) {
            return Err(ReportError::Parse(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| ReportError::Parse(e.to_string()))?;
            if record.get(0) == Some(SUMMARY_TAG) {
                continue;
            }
            rows.push(
                record
                    .deserialize(Some(&headers))
                    .map_err(|e| ReportError::Parse(e.to_string()))?,
            );
        }
        rows
    };
    if rows.is_empty() {
        return Err(ReportError::NoRecords);
    }
    Ok(rows)
}

fn ms(ns: Option<u64>) -> String {
    ns.map_or_else(|| "-".to_string(), |v| format!("{:.3}", v as f64 / 1e6))
}

fn mib(bytes: Option<u64>) -> String {
    bytes.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v as f64 / (1024.0 * 1024.0)))
}

/// Aligned text table plus per-step and min..max speedups.
pub fn render_table(rows: &[ReportRow]) -> String {
    let header = [
        "kernel", "feat", "D", "C", "grid", "median ms", "p10 ms", "p90 ms", "aux MiB", "model MiB", "status",
    ];
    let body: Vec<[String; 11]> = rows
        .iter()
        .map(|r| {
            [
                r.kernel.clone(),
                r.cell_label(),
                r.depth_bins.to_string(),
                r.channels.to_string(),
                r.grid.clone(),
                ms(r.median_ns),
                ms(r.p10_ns),
                ms(r.p90_ns),
                mib(r.aux_bytes_measured),
                mib(r.aux_bytes_model),
                if r.is_ok() { "ok".to_string() } else { "FAIL".to_string() },
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i < 2 || i == 4 || i == 10 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header.map(String::from));
    for row in &body {
        line(row);
    }

    let summary = summarize(rows);
    if !summary.speedups.is_empty() {
        out.push('\n');
    }
    for series in &summary.speedups {
        let steps: Vec<String> = series
            .cells
            .iter()
            .zip(&series.ratios)
            .map(|(cell, &r)| format!("{cell}: {}x", ratio_text(r)))
            .collect();
        let _ = writeln!(out, "{}/{} per step: {}", series.baseline, summary.reference, steps.join(", "));
        match series.min_max() {
            Some((lo, hi)) => {
                let _ = writeln!(out, "speedup {}/{} (min..max): {lo:.2}x..{hi:.2}x", series.baseline, summary.reference);
            }
            None => {
                let _ = writeln!(out, "speedup {}/{} (min..max): n/a", series.baseline, summary.reference);
            }
        }
    }
    out
}
