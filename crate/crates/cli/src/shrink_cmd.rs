use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sdc_core::detector::{shrink, FaultReport, ShrinkResult};
use sdc_core::faultsim::{normalize_specs, FaultSpec, FaultyBackend};
use sdc_core::kernels::{ReferenceBackend, TestKernel, TestVector};
use sdc_core::report::{parse_report, RecordKind, SCHEMA_VERSION};

use crate::{no_config_expected, read_text, resolve_specs, summary, write_output, Common, Verdict};

#[derive(Debug, Clone, Args)]
pub struct ShrinkArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scan report (JSONL) to minimize.
    pub report: PathBuf,
}

/// Output of `shrink`; also accepted by `scan --targeted`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproducerFile {
    pub schema_version: u32,
    pub reproducers: Vec<ShrinkResult>,
}

pub(crate) fn run(args: ShrinkArgs) -> Result<Verdict> {
    let c = &args.common;
    no_config_expected(c, "shrink")?;
    let text = read_text(&args.report)?;
    let records = parse_report(text.as_bytes()).with_context(|| format!("in {}", args.report.display()))?;
    let reports: Vec<FaultReport> = records
        .iter()
        .filter(|r| r.kind == RecordKind::ScanResult)
        .filter_map(|r| serde_json::from_value(r.payload.clone()).ok())
        .collect();
    let specs: Option<Arc<[FaultSpec]>> = match &c.specs {
        Some(name) => Some(normalize_specs(resolve_specs(name, None)?)?.into()),
        None => None,
    };

    let mut reproducers = Vec::new();
    for report in &reports {
        for finding in &report.findings {
            match &specs {
                None => reproducers.extend(finding.minimal_reproducer.iter().cloned()),
                Some(specs) => {
                    let mut kinds: Vec<_> = finding.mismatches.iter().map(|m| m.kernel).collect();
                    kinds.sort_unstable();
                    kinds.dedup();
                    for kind in kinds {
                        let kernel = finding
                            .minimal_reproducer
                            .iter()
                            .map(|r| r.kernel)
                            .find(|k| k.kind == kind)
                            .unwrap_or_else(|| TestKernel::from(kind));
                        let mut stream: Vec<TestVector> = Vec::new();
                        for m in finding.mismatches.iter().filter(|m| m.kernel == kind) {
                            if !stream.iter().any(|v| v.id == m.vector.id) {
                                stream.push(m.vector.clone());
                            }
                        }
                        let core = finding.mismatches[0].core;
                        let mut backend = FaultyBackend::from_shared(ReferenceBackend::new(), specs.clone());
                        let r = shrink(&stream, core, &kernel, &mut backend)
                            .with_context(|| format!("replaying {core} {kind}"))?;
                        reproducers.push(r);
                    }
                }
            }
        }
    }
    if reproducers.is_empty() {
        bail!("{} has no mismatches to shrink", args.report.display());
    }

    let file = ReproducerFile {
        schema_version: SCHEMA_VERSION,
        reproducers,
    };
    let mut json = serde_json::to_vec_pretty(&file)?;
    json.push(b'\n');
    write_output(c.out.as_deref(), &json)?;
    summary(c.out.as_deref(), &listing(&file.reproducers));
    Ok(Verdict::Pass)
}

pub fn listing(reproducers: &[ShrinkResult]) -> String {
    let mut s = String::new();
    for r in reproducers {
        let _ = writeln!(
            s,
            "{} {}: {} of {} vectors, {} evaluations (bound {:.1})",
            r.core,
            r.kernel.kind,
            r.minimal_vectors.len(),
            r.stream_len,
            r.steps,
            r.step_bound()
        );
        for (i, v) in r.minimal_vectors.iter().enumerate() {
            let cert = r.certificate.iter().find(|c| c.vector_id == v.id);
            let _ = match cert {
                Some(c) => writeln!(
                    s,
                    "  {}: x = {}, y = {} -> {} (expected {})",
                    i + 1,
                    v.base,
                    v.exponent,
                    c.observed,
                    c.expected
                ),
                None => writeln!(s, "  {}: {v}", i + 1),
            };
        }
    }
    s
}
