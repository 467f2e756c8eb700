//! CSV exports for attack traces and defense reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::attack::AttackTrace;
use crate::defense::DefenseReport;

use super::HarnessError;

pub const TRACE_HEADER: &str = "call,score,best,accepted";
pub const REPORT_HEADER: &str = "attack,policy,trials,successes,median_calls";

/// One row per oracle call. Hidden and blocked scores leave the field empty.
pub fn trace_csv(trace: &AttackTrace) -> String {
    let mut out = String::with_capacity(32 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for e in &trace.entries {
        let _ = write!(out, "{},", e.call);
        if let Some(s) = e.observed {
            let _ = write!(out, "{s:.6}");
        }
        let _ = writeln!(out, ",{:.6},{}", e.best, u8::from(e.accepted));
    }
    out
}

pub fn report_csv(report: &DefenseReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for c in &report.cells {
        let _ = write!(out, "{},{},{},{},", c.attack, c.policy, c.trials, c.successes);
        if let Some(m) = c.median_calls {
            let _ = write!(out, "{m}");
        }
        out.push('\n');
    }
    out
}

pub fn export_trace_csv(trace: &AttackTrace, path: &Path) -> Result<(), HarnessError> {
    write_text(path, &trace_csv(trace))
}

pub fn export_report_csv(report: &DefenseReport, path: &Path) -> Result<(), HarnessError> {
    write_text(path, &report_csv(report))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::StorageFailure {
        path: path.to_path_buf(),
        source,
    })
}
