use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MemoryEstimate, MetricsError};

/// Bumped whenever a field of [`ExperimentReport`] changes meaning.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

const CSV_HEADER: &str = "round,accuracy,loss,mem_bytes,round_time_ms";

/// Global metrics after one communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based.
    pub round: u32,
    /// Held-out accuracy of the aggregated model, in [0, 1].
    pub accuracy: f64,
    /// Held-out mean BCE of the aggregated model.
    pub loss: f64,
    /// Final-epoch training loss per client, ordered by client id.
    pub client_losses: Vec<f64>,
    pub client_times_ms: Vec<u64>,
    /// Distribute, train, aggregate and evaluate.
    pub round_time_ms: u64,
    /// Analytic per-client training memory.
    pub mem_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    /// Short framework name such as "FedFT-3".
    pub label: String,
    pub mode: String,
    /// The configuration the run used.
    pub config: serde_json::Value,
    pub rounds: Vec<RoundReport>,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub memory: MemoryEstimate,
    pub mean_client_time_ms: f64,
    pub pretrain_time_ms: u64,
    pub total_time_ms: u64,
    /// Each client's loss on its own shard under the final global model,
    /// ordered by client id. Empty for centralized runs.
    pub client_final_losses: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// One parsed line of the per-round CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub round: u32,
    pub accuracy: f64,
    pub loss: f64,
    pub mem_bytes: u64,
    pub round_time_ms: u64,
}

impl ExperimentReport {
    /// Header plus one row per round. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.round, r.accuracy, r.loss, r.mem_bytes, r.round_time_ms
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        serde_json::from_str(text).map_err(|e| MetricsError::Parse {
            context: "report JSON".into(),
            message: e.to_string(),
        })
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, MetricsError> {
    let mut lines = text.lines();
    let err = |line: usize, message: String| MetricsError::Parse {
        context: format!("report CSV line {line}"),
        message,
    };
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(err(1, format!("unexpected header {:?}", other.unwrap_or("")))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, found {}", f.len())));
        }
        let bad = |name: &str| err(line_no, format!("invalid {name}"));
        rows.push(CsvRow {
            round: f[0].parse().map_err(|_| bad("round"))?,
            accuracy: f[1].parse().map_err(|_| bad("accuracy"))?,
            loss: f[2].parse().map_err(|_| bad("loss"))?,
            mem_bytes: f[3].parse().map_err(|_| bad("mem_bytes"))?,
            round_time_ms: f[4].parse().map_err(|_| bad("round_time_ms"))?,
        });
    }
    Ok(rows)
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<(), MetricsError> {
    let body = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    };
    std::fs::write(path, body).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a JSON report, rejecting other schema versions.
pub fn read_report(path: &Path) -> Result<ExperimentReport, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |e: serde_json::Error| MetricsError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| MetricsError::Parse {
            context: path.display().to_string(),
            message: "missing schema_version".into(),
        })?;
    if found != u64::from(REPORT_SCHEMA_VERSION) {
        return Err(MetricsError::Schema {
            path: path.to_path_buf(),
            found: found.min(u64::from(u32::MAX)) as u32,
            expected: REPORT_SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(parse_err)
}
