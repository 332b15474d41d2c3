//! JSONL report records, the pass/fail collector, and the key-value
//! configuration format.
//!
//! A report is UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"schema_version":1,"kind":"SCAN_RESULT","timestamp":0,"payload":{...}}
//! ```
//!
//! `kind` is `SCAN_RESULT`, `SIM_EVENT` or `METRICS`. Payloads:
//! * `SCAN_RESULT`: at least `host`, `plan_hash`, `quantum_id` and `status`
//!   (`PASS` | `FAIL`); a full scan carries the whole fault report.
//! * `SIM_EVENT`: one simulator event (`t_hours`, `host`, `event`, ...).
//! * `METRICS`: coverage metrics of a simulation run.
//!
//! Fields not listed here are kept, in order, through parse and emit.

mod config;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::detector::ScanStatus;
use crate::kernels::HostId;

pub use config::{parse_kv, ConfigError, KvDocument};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("report is not valid UTF-8: {0}")]
    Utf8(String),
    #[error("malformed record: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordKind {
    ScanResult,
    SimEvent,
    Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub schema_version: u32,
    pub kind: RecordKind,
    /// Seconds since the Unix epoch (simulated records use simulated hours
    /// in their payload and 0 here).
    pub timestamp: u64,
    pub payload: Value,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ReportRecord {
    pub fn new(kind: RecordKind, timestamp: u64, payload: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind,
            timestamp,
            payload,
            extra: Map::new(),
        }
    }

    /// Serializes `payload` into a record.
    pub fn from_payload<T: Serialize>(kind: RecordKind, timestamp: u64, payload: &T) -> Self {
        Self::new(
            kind,
            timestamp,
            serde_json::to_value(payload).expect("payload serializes"),
        )
    }
}

/// Parses a JSONL report. Blank lines are skipped.
pub fn parse_report(bytes: &[u8]) -> Result<Vec<ReportRecord>, ReportError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ReportError::Utf8(e.to_string()))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| ReportError::Line {
            line: line_no,
            message,
        };
        let raw: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        match raw.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(err(format!("unsupported schema_version {v}"))),
            None => return Err(err("missing schema_version".into())),
        }
        records.push(serde_json::from_value(raw).map_err(|e| err(e.to_string()))?);
    }
    Ok(records)
}

/// Emits records as JSONL, one line each, newline-terminated.
pub fn emit_report(records: &[ReportRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

/// The fields of a `SCAN_RESULT` payload the collector uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub host: HostId,
    pub plan_hash: String,
    pub quantum_id: u64,
    pub status: ScanStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HostStatus {
    Pass,
    Fail,
    Untested,
}

/// Per-host pass/fail aggregation of scan results with at-least-once
/// delivery. Records are deduplicated by `(host, plan hash, quantum id)`;
/// a host is `FAIL` once any of its records fails, until [`reset`](Self::reset).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollectorState {
    hosts: BTreeMap<HostId, HostStatus>,
    /// Failure flag per delivered key, OR-ed over duplicates.
    seen: BTreeMap<(HostId, String, u64), bool>,
}

impl CollectorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers hosts as `UNTESTED` until their first record arrives.
    pub fn with_hosts(mut self, hosts: impl IntoIterator<Item = HostId>) -> Self {
        for h in hosts {
            self.hosts.entry(h).or_insert(HostStatus::Untested);
        }
        self
    }

    pub fn status(&self, host: HostId) -> HostStatus {
        self.hosts.get(&host).copied().unwrap_or(HostStatus::Untested)
    }

    pub fn hosts(&self) -> &BTreeMap<HostId, HostStatus> {
        &self.hosts
    }

    pub fn failing_hosts(&self) -> Vec<HostId> {
        self.hosts
            .iter()
            .filter(|(_, s)| **s == HostStatus::Fail)
            .map(|(h, _)| *h)
            .collect()
    }

    /// Number of distinct keys delivered.
    pub fn distinct_records(&self) -> usize {
        self.seen.len()
    }

    /// Applies one record. Returns whether its key was new. A malformed
    /// record leaves the state unchanged.
    pub fn ingest(&mut self, record: &ReportRecord) -> Result<bool, ReportError> {
        if record.schema_version != SCHEMA_VERSION {
            return Err(ReportError::Malformed(format!(
                "unsupported schema_version {}",
                record.schema_version
            )));
        }
        if record.kind != RecordKind::ScanResult {
            return Err(ReportError::Malformed(format!(
                "collector accepts SCAN_RESULT records, got {:?}",
                record.kind
            )));
        }
        let summary: ScanSummary = serde_json::from_value(record.payload.clone())
            .map_err(|e| ReportError::Malformed(e.to_string()))?;
        let failed = summary.status == ScanStatus::Fail;
        let key = (summary.host, summary.plan_hash, summary.quantum_id);
        let new = !self.seen.contains_key(&key);
        *self.seen.entry(key).or_insert(false) |= failed;
        let status = self.hosts.entry(summary.host).or_insert(HostStatus::Untested);
        *status = match (*status, failed) {
            (HostStatus::Fail, _) | (_, true) => HostStatus::Fail,
            _ => HostStatus::Pass,
        };
        Ok(new)
    }

    /// Forgets everything delivered for `host` and marks it `UNTESTED`.
    pub fn reset(&mut self, host: HostId) {
        self.seen.retain(|(h, _, _), _| *h != host);
        if let Some(s) = self.hosts.get_mut(&host) {
            *s = HostStatus::Untested;
        }
    }
}

/// Pure form of [`CollectorState::ingest`].
pub fn collector_ingest(
    state: &CollectorState,
    record: &ReportRecord,
) -> Result<CollectorState, ReportError> {
    let mut next = state.clone();
    next.ingest(record)?;
    Ok(next)
}
