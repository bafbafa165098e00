//! Analytic training-memory model, phase timing and experiment reports.

mod memory;
mod report;

pub use memory::{activation_elements, estimate_memory, MemoryEstimate};
pub use report::{
    emit_report, parse_csv, read_report, CsvRow, ExperimentReport, ReportFormat, RoundReport,
    REPORT_SCHEMA_VERSION,
};

use std::path::PathBuf;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("{}: report schema version {found}, expected {expected}", path.display())]
    Schema {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
}

/// Wall-clock duration of one labelled phase.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTiming {
    pub label: String,
    pub elapsed: Duration,
}

impl BlockTiming {
    pub fn millis(&self) -> u64 {
        self.elapsed.as_millis() as u64
    }

    pub fn millis_f64(&self) -> f64 {
        self.elapsed.as_secs_f64() * 1e3
    }
}

/// Runs `f` and measures it on the monotonic clock.
pub fn time_block<T>(label: &str, f: impl FnOnce() -> T) -> (T, BlockTiming) {
    let start = Instant::now();
    let value = f();
    let timing = BlockTiming {
        label: label.to_string(),
        elapsed: start.elapsed(),
    };
    (value, timing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_block_is_non_negative() {
        let ((), t) = time_block("noop", || ());
        assert_eq!(t.label, "noop");
        assert!(t.millis_f64() >= 0.0);
    }

    #[test]
    fn outer_covers_inner() {
        let ((a, b), outer) = time_block("outer", || {
            let (_, a) = time_block("a", || std::thread::sleep(Duration::from_millis(2)));
            let (_, b) = time_block("b", || std::thread::sleep(Duration::from_millis(1)));
            (a, b)
        });
        assert!(outer.elapsed >= a.elapsed);
        assert!(outer.elapsed >= b.elapsed);
        assert!(outer.elapsed >= a.elapsed + b.elapsed);
    }
}
