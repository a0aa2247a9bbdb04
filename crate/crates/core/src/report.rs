//! Writing and reading experiment reports (`report.json`) and training
//! traces (`trace.csv`, columns `run,iteration,loss,l2re`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{ExperimentReport, Trace};
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// One row of a trace file. `l2re` is empty on iterations without a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run: String,
    pub iteration: usize,
    pub loss: f64,
    pub l2re: Option<f64>,
}

pub fn report_to_string(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    parse_report(&fs::read_to_string(path)?)
}

/// Rows of every trace; iteration 0 is the starting point.
pub fn trace_rows(traces: &[Trace]) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for t in traces {
        let mut metrics = t.l2re.iter().peekable();
        for (i, &loss) in t.loss.iter().enumerate() {
            while metrics.peek().is_some_and(|m| m.0 < i) {
                metrics.next();
            }
            let l2re = metrics.peek().filter(|m| m.0 == i).map(|m| m.1);
            rows.push(TraceRow { run: t.label.clone(), iteration: i, loss, l2re });
        }
    }
    rows
}

pub fn traces_to_csv(traces: &[Trace]) -> Result<String> {
    rows_to_csv(&trace_rows(traces))
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Write `report.json` and `trace.csv` into `dir` (created if missing).
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), report_to_string(report)?)?;
    fs::write(dir.join(TRACE_FILE), traces_to_csv(&report.traces)?)?;
    Ok(())
}

/// Write an extra CSV table next to the report.
pub fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), rows_to_csv(rows)?)?;
    Ok(())
}

/// Machine-readable error record written on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub status: i32,
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn from_error(e: &Error, status: i32) -> Self {
        let kind = match e {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Domain { .. } => "domain",
            Error::NonFinite(_) => "non_finite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Numerical(_) => "numerical",
            Error::Config(_) => "config",
            Error::Unavailable(_) => "unavailable",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        };
        Self { status, kind: kind.to_string(), message: e.to_string() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{RuntimeStats, TheoryProbe};

    fn sample_report() -> ExperimentReport {
        let mut r = ExperimentReport::new("solve", 7, serde_json::json!({"problem": {"name": "wave"}}));
        r.metric("l2re", 1.2345678901234567e-11);
        r.metric("final_loss", 3.0e-25);
        r.traces.push(Trace { label: "nncg".into(), loss: vec![1.0, 0.1, 1e-3], l2re: vec![(0, 1.0), (2, 0.01)] });
        r.probes.push(TheoryProbe {
            n: 8,
            m: 100,
            kappa_sq: Some(2.5),
            lebesgue: 2.1,
            eps_op: 0.3,
            rho_fit: None,
            bound_constants: Some((1.5, 1.5)),
        });
        r.runtime = RuntimeStats { total_s: 0.25, iterations: 2, mean_iteration_ms: 125.0 };
        r
    }

    #[test]
    fn report_round_trips_byte_for_byte() {
        let r = sample_report();
        let text = report_to_string(&r).unwrap();
        let back = parse_report(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(report_to_string(&back).unwrap(), text);
    }

    #[test]
    fn trace_csv_round_trip() {
        let r = sample_report();
        let csv = traces_to_csv(&r.traces).unwrap();
        assert!(csv.starts_with("run,iteration,loss,l2re\n"));
        let rows = parse_trace_csv(&csv).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].l2re, Some(1.0));
        assert_eq!(rows[1].l2re, None);
        assert_eq!(rows[2].loss, 1e-3);
        assert_eq!(rows_to_csv(&rows).unwrap(), csv);
    }

    #[test]
    fn files_written() {
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &sample_report()).unwrap();
        let back = read_report(&dir.path().join(REPORT_FILE)).unwrap();
        assert_eq!(back, sample_report());
        assert!(dir.path().join(TRACE_FILE).exists());
    }

    #[test]
    fn error_records() {
        let e = Error::Config("bad key".into());
        let rec = ErrorRecord::from_error(&e, 2);
        assert_eq!(rec.kind, "config");
        assert!(rec.message.contains("bad key"));
    }
}
