use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use sdc_core::report::{emit_report, parse_report, CollectorState, HostStatus, RecordKind, ReportRecord};
use serde_json::Value;

use crate::{no_config_expected, read_text, summary, write_output, Common, Verdict};

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// JSONL reports; their records are concatenated in order.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

fn canonicalize(record: &mut ReportRecord) {
    record.timestamp = 0;
    if record.kind == RecordKind::ScanResult {
        if let Value::Object(map) = &mut record.payload {
            for key in ["timestamp", "duration_ms"] {
                if let Some(v) = map.get_mut(key) {
                    *v = Value::from(0);
                }
            }
        }
    }
}

pub(crate) fn run(args: ReportArgs) -> Result<Verdict> {
    let c = &args.common;
    no_config_expected(c, "report")?;
    let mut records = Vec::new();
    for path in &args.inputs {
        let text = read_text(path)?;
        records.extend(parse_report(text.as_bytes()).with_context(|| format!("in {}", path.display()))?);
    }
    let mut collector = CollectorState::new();
    let mut ingested = 0usize;
    for r in records.iter().filter(|r| r.kind == RecordKind::ScanResult) {
        collector.ingest(r).context("collector rejected a SCAN_RESULT record")?;
        ingested += 1;
    }
    if c.canonical {
        records.iter_mut().for_each(canonicalize);
    }
    if let Some(out) = &c.out {
        write_output(Some(out), &emit_report(&records))?;
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} records, {} scan results, {} distinct",
        records.len(),
        ingested,
        collector.distinct_records()
    );
    for (host, status) in collector.hosts() {
        let status = match status {
            HostStatus::Pass => "PASS",
            HostStatus::Fail => "FAIL",
            HostStatus::Untested => "UNTESTED",
        };
        let _ = writeln!(s, "{host:<12} {status}");
    }
    match &c.out {
        Some(_) => summary(c.out.as_deref(), &s),
        None => print!("{s}"),
    }
    Ok(if collector.failing_hosts().is_empty() {
        Verdict::Pass
    } else {
        Verdict::Corruption
    })
}
