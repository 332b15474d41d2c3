use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use sdc_core::detector::{builtin_targeted, scan_host, Host, ScanPlan, ScanStatus};
use sdc_core::faultsim::FaultyBackend;
use sdc_core::kernels::{KernelKind, ReferenceBackend, TestVector};
use sdc_core::report::{emit_report, parse_kv, RecordKind, ReportRecord};

use crate::{read_text, resolve_specs, summary, write_output, Common, ReproducerFile, Verdict};

const SCAN_KEYS: &[&str] = &["seed", "cores", "kernels", "count", "targeted", "specs", "host"];

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: Common,
    /// Core indices, e.g. `0-63` or `0,4,8-11` (default 0-63).
    #[arg(long)]
    pub cores: Option<String>,
    /// Comma-separated kernels (default INT_POW,POW_CHAIN).
    #[arg(long)]
    pub kernels: Option<String>,
    /// Generated vectors per core (default 1000).
    #[arg(long)]
    pub count: Option<usize>,
    /// `builtin`, or a vector file (`base exponent` lines or a reproducer).
    #[arg(long)]
    pub targeted: Option<String>,
}

/// Parses `0-3,7,9-10` into core indices.
pub fn parse_core_list(s: &str) -> Result<Vec<u32>> {
    let mut cores = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (
                    a.trim().parse().with_context(|| format!("bad core range {part:?}"))?,
                    b.trim().parse().with_context(|| format!("bad core range {part:?}"))?,
                );
                if a > b {
                    bail!("empty core range {part:?}");
                }
                cores.extend(a..=b);
            }
            None => cores.push(part.parse().with_context(|| format!("bad core {part:?}"))?),
        }
    }
    cores.sort_unstable();
    cores.dedup();
    if cores.is_empty() {
        bail!("no cores selected");
    }
    Ok(cores)
}

fn parse_number(tok: &str) -> Result<f64> {
    match tok.strip_prefix("0x") {
        Some(hex) => Ok(f64::from_bits(
            u64::from_str_radix(hex, 16).with_context(|| format!("bad hex bits {tok:?}"))?,
        )),
        None => tok.parse().with_context(|| format!("bad number {tok:?}")),
    }
}

/// `builtin`, a reproducer file written by `shrink`, or a text file of
/// `base exponent` lines (decimal or `0x` bit patterns, `#` comments).
pub fn parse_targeted(arg: &str) -> Result<Vec<TestVector>> {
    if arg == "builtin" {
        return Ok(builtin_targeted());
    }
    let text = read_text(Path::new(arg))?;
    if text.trim_start().starts_with('{') {
        let file: ReproducerFile =
            serde_json::from_str(&text).with_context(|| format!("parsing reproducer {arg}"))?;
        let mut vectors: Vec<TestVector> = Vec::new();
        for r in file.reproducers {
            for v in r.minimal_vectors {
                if !vectors.iter().any(|w| w.id == v.id) {
                    vectors.push(v);
                }
            }
        }
        return Ok(vectors);
    }
    let mut vectors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [b, e] = toks[..] else {
            bail!("{arg}:{}: expected `base exponent`", i + 1);
        };
        vectors.push(TestVector::new(
            parse_number(b).with_context(|| format!("{arg}:{}", i + 1))?,
            parse_number(e).with_context(|| format!("{arg}:{}", i + 1))?,
        ));
    }
    Ok(vectors)
}

pub(crate) fn run(args: ScanArgs) -> Result<Verdict> {
    let c = &args.common;
    let doc = match &c.config {
        Some(p) => {
            let doc = parse_kv(&read_text(p)?).with_context(|| format!("in {}", p.display()))?;
            doc.check_keys(SCAN_KEYS)?;
            doc
        }
        None => parse_kv("")?,
    };
    let config_dir: Option<PathBuf> = c.config.as_ref().and_then(|p| p.parent().map(Path::to_path_buf));

    let seed = match c.seed {
        Some(s) => s,
        None => doc.parse_or("seed", 0u64)?,
    };
    let cores = parse_core_list(args.cores.as_deref().or(doc.get("cores")).unwrap_or("0-63"))?;
    let kernels = args
        .kernels
        .as_deref()
        .or(doc.get("kernels"))
        .unwrap_or("INT_POW,POW_CHAIN")
        .split(',')
        .map(|k| KernelKind::parse(k.trim()).with_context(|| format!("unknown kernel {k:?}")))
        .collect::<Result<Vec<_>>>()?;
    let count = match args.count {
        Some(n) => n,
        None => doc.parse_or("count", 1000usize)?,
    };
    let targeted = match args.targeted.as_deref().or(doc.get("targeted")) {
        None | Some("none") => Vec::new(),
        Some(t) => parse_targeted(t)?,
    };
    let host_id = doc.parse_or("host", 0u32)?;
    let specs = match c.specs.as_deref().or(doc.get("specs")) {
        Some(name) => resolve_specs(name, config_dir.as_deref())?,
        None => Vec::new(),
    };

    let plan = ScanPlan::new(seed, count, cores.iter().copied())
        .with_kernels(kernels)
        .with_targeted(targeted);
    let host = Host {
        id: sdc_core::kernels::HostId(host_id),
        cores: cores.iter().max().map_or(1, |m| m + 1),
    };
    let shared: std::sync::Arc<[_]> = sdc_core::faultsim::normalize_specs(specs)?.into();
    let mut report = scan_host(host, &plan, |_| {
        FaultyBackend::from_shared(ReferenceBackend::new(), shared.clone())
    })?;
    let timestamp = if c.canonical {
        report.canonicalize();
        0
    } else {
        report.timestamp
    };
    let record = ReportRecord::from_payload(RecordKind::ScanResult, timestamp, &report);
    write_output(c.out.as_deref(), &emit_report(&[record]))?;

    let status = match report.status {
        ScanStatus::Pass => "PASS",
        ScanStatus::Fail => "FAIL",
    };
    summary(
        c.out.as_deref(),
        &format!(
            "{}: {status}, {} cores, {} vectors per core, {} mismatches, flagged cores {:?}\n",
            report.host,
            report.cores_scanned.len(),
            report.vectors_per_core,
            report.mismatch_count(),
            report.flagged_cores()
        ),
    );
    Ok(match report.status {
        ScanStatus::Pass => Verdict::Pass,
        ScanStatus::Fail => Verdict::Corruption,
    })
}
