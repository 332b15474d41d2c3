use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use sdc_core::fleetsim::{build_fleet, run_simulation, CoverageMetrics, FleetConfig, FleetError, Mode};
use sdc_core::report::emit_report;

use crate::{read_text, resolve_specs, summary, write_output, Common, Verdict};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// opportunistic | periodic | production
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub horizon_days: Option<u32>,
}

pub(crate) fn run(args: SimulateArgs) -> Result<Verdict> {
    let c = &args.common;
    let base = c.config.as_deref().and_then(Path::parent).map(Path::to_path_buf);
    let mut config = match &c.config {
        Some(p) => FleetConfig::parse(&read_text(p)?, |name| {
            resolve_specs(name, base.as_deref()).map_err(|e| FleetError::Library(format!("{e:#}")))
        })
        .with_context(|| format!("in {}", p.display()))?,
        None => FleetConfig::default(),
    };
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    if let Some(list) = &c.specs {
        let mut specs = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            specs.extend(resolve_specs(name, None)?);
        }
        config.fault_library = specs;
    }
    if let Some(m) = &args.mode {
        config.mode = Mode::parse(m)
            .with_context(|| format!("unknown mode {m:?} (opportunistic | periodic | production)"))?;
    }
    if let Some(h) = args.horizon_days {
        config.horizon_days = h;
    }

    let fleet = build_fleet(&config)?;
    let outcome = run_simulation(fleet, &config)?;
    if let Some(out) = &c.out {
        write_output(Some(out), &emit_report(&outcome.records()))?;
    }
    let table = summary_table(&outcome.metrics);
    match &c.out {
        Some(_) => summary(c.out.as_deref(), &table),
        None => print!("{table}"),
    }
    Ok(Verdict::Pass)
}

pub fn summary_table(m: &CoverageMetrics) -> String {
    let mode = match m.mode {
        Mode::Opportunistic => "OPPORTUNISTIC",
        Mode::Periodic => "PERIODIC",
        Mode::ProductionFriendly => "PRODUCTION_FRIENDLY",
    };
    let median = m
        .median_time_to_detect_hours
        .map_or_else(|| "-".to_string(), |h| format!("{h} h"));
    let mut s = String::new();
    let rows = [
        ("mode", mode.to_string()),
        ("hosts", m.hosts.to_string()),
        ("horizon", format!("{} h", m.horizon_hours)),
        ("scans", m.scans.to_string()),
        ("scanned", format!("{:.1} %", 100.0 * m.scanned_fraction)),
        ("detected / defective", format!("{} / {}", m.detected, m.defective)),
        ("median time to detect", median),
        ("production time lost", format!("{} host-h", m.production_time_lost_hours)),
        ("overhead", format!("{:.4} %", 100.0 * m.overhead_fraction)),
        ("max host overhead", format!("{:.4} %", 100.0 * m.max_host_overhead_fraction)),
        ("silent loss", format!("{} files", m.silent_loss)),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<22} {v}");
    }
    s
}
