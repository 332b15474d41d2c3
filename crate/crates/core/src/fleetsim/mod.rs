//! Discrete-event simulation of a fleet with a defective subpopulation under
//! the three scan scheduling modes.
//!
//! Time is in whole simulated hours; every host is new at t = 0, so a host's
//! age equals the simulation time. The event loop is single-threaded and
//! fully determined by the config (including its seed).
//!
//! * `PERIODIC`: host `i` leaves production for a scan at
//!   `floor(i * P / hosts) + k * P` hours (period `P`), accruing
//!   `scan_duration_hours` of lost production each time.
//! * `OPPORTUNISTIC`: maintenance events arrive per host with exponential
//!   gaps (mean `24 / maintenance_rate` hours, rounded up to whole hours,
//!   measured from the end of the previous maintenance). Each event scans the
//!   host; production hosts are never pulled.
//! * `PRODUCTION_FRIENDLY`: the plan's (core, vector) work items are cut into
//!   quanta of at most `budget * daily_compute_ops` ops. Each host runs one
//!   quantum per day at hour `floor(i * 24 / hosts)` of the day and streams
//!   the result to the collector, which sees each record once or, with
//!   probability `collector_duplicate_rate`, twice.
//!
//! A scan or quantum counts only if it finishes within the horizon. A host
//! is detected when a scan it ran reports a mismatch (for quanta: when the
//! collector marks it `FAIL`); detection is stamped at the end of that scan.

mod app;
mod config;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{
    builtin_targeted, scan_host_prepared, DetectorError, Host, PreparedPlan, ScanPlan, ScanStatus,
};
use crate::faultsim::{bundled_spec, load_fault_specs, normalize_specs, CoreSelector, FaultSpec, FaultyBackend};
use crate::kernels::codec::fnv1a64;
use crate::kernels::{ArithmeticBackend, CoreId, HostId, KernelKind, ReferenceBackend, SplitMix64};
use crate::report::{CollectorState, ConfigError, RecordKind, ReportRecord, ScanSummary};

pub use app::{app_workload_decompression, workload_files, AppWorkloadResult, TRIGGER_LEVELS};
pub use config::CONFIG_KEYS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error("invalid fleet config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(ConfigError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("fault library: {0}")]
    Library(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Opportunistic,
    Periodic,
    ProductionFriendly,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "opportunistic" => Some(Mode::Opportunistic),
            "periodic" => Some(Mode::Periodic),
            "production" | "production_friendly" => Some(Mode::ProductionFriendly),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub hosts: u32,
    pub cores_per_host: u32,
    /// Fraction of hosts carrying one fault spec.
    pub defect_rate: f64,
    /// Spec templates; each defective host gets one, moved to a seeded core.
    pub fault_library: Vec<FaultSpec>,
    /// Mean maintenance events per host per simulated day.
    pub maintenance_rate: f64,
    pub maintenance_hours: u64,
    pub scan_duration_hours: u64,
    /// Fraction of a host's daily compute available to test quanta.
    pub workload_overhead_budget: f64,
    /// Primitive ops one host performs per simulated day.
    pub daily_compute_ops: u64,
    pub collector_duplicate_rate: f64,
    /// Template; its cores are replaced by all cores of a host.
    pub scan_plan: ScanPlan,
    pub mode: Mode,
    pub period_days: u32,
    pub horizon_days: u32,
    pub seed: u64,
    /// Files each host's decompression workload handles at t = 0.
    pub app_files: u32,
    /// Every `n`-th application file is a targeted header (0 = none).
    pub app_trigger_period: u32,
}

/// The bundled `core59.spec` and `errors_table.spec` specs.
pub fn bundled_library() -> Vec<FaultSpec> {
    ["core59.spec", "errors_table.spec"]
        .into_iter()
        .flat_map(|n| load_fault_specs(bundled_spec(n).expect("bundled")).expect("bundled specs parse"))
        .collect()
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            hosts: 1000,
            cores_per_host: 64,
            defect_rate: 0.001,
            fault_library: bundled_library(),
            maintenance_rate: 0.05,
            maintenance_hours: 4,
            scan_duration_hours: 1,
            workload_overhead_budget: 0.01,
            daily_compute_ops: 76_800,
            collector_duplicate_rate: 0.1,
            scan_plan: ScanPlan::new(7, 8, [])
                .with_kernels([KernelKind::IntPow])
                .with_targeted(builtin_targeted()),
            mode: Mode::Periodic,
            period_days: 15,
            horizon_days: 15,
            seed: 1,
            app_files: 0,
            app_trigger_period: 0,
        }
    }
}

impl FleetConfig {
    pub fn horizon_hours(&self) -> u64 {
        u64::from(self.horizon_days) * 24
    }

    /// The scan plan with every core of a host.
    pub fn host_plan(&self) -> ScanPlan {
        let mut plan = self.scan_plan.clone();
        plan.cores = (0..self.cores_per_host).collect();
        plan
    }

    /// Ops one quantum may spend.
    pub fn quantum_capacity(&self) -> u64 {
        (self.workload_overhead_budget * self.daily_compute_ops as f64).floor() as u64
    }

    pub fn validate(&self) -> Result<(), FleetError> {
        let bad = |m: String| Err(FleetError::Invalid(m));
        if self.hosts == 0 || self.cores_per_host == 0 {
            return bad("hosts and cores_per_host must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.defect_rate) {
            return bad(format!("defect_rate {} outside [0, 1]", self.defect_rate));
        }
        if self.defect_rate > 0.0 && self.fault_library.is_empty() {
            return bad("defect_rate > 0 needs a non-empty fault_library".into());
        }
        if !(self.maintenance_rate.is_finite() && self.maintenance_rate >= 0.0) {
            return bad(format!("maintenance_rate {} must be >= 0", self.maintenance_rate));
        }
        if self.scan_duration_hours == 0 {
            return bad("scan_duration_hours must be at least 1".into());
        }
        if self.maintenance_hours < self.scan_duration_hours {
            return bad("maintenance_hours must cover scan_duration_hours".into());
        }
        if !(0.0..=1.0).contains(&self.collector_duplicate_rate) {
            return bad("collector_duplicate_rate outside [0, 1]".into());
        }
        match self.mode {
            Mode::Periodic if self.period_days < 1 => {
                return bad("period_days must be at least 1 for PERIODIC".into())
            }
            Mode::ProductionFriendly => {
                let b = self.workload_overhead_budget;
                if !(b > 0.0 && b <= 1.0) {
                    return bad(format!("workload_overhead_budget {b} outside (0, 1]"));
                }
                if self.quantum_capacity() < self.scan_plan.ops_per_vector() {
                    return bad(format!(
                        "a quantum of {} ops cannot hold one vector ({} ops)",
                        self.quantum_capacity(),
                        self.scan_plan.ops_per_vector()
                    ));
                }
            }
            _ => {}
        }
        self.host_plan().validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HostMode {
    Production,
    Maintenance,
    Provisioning,
    OutForTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub t_hours: u64,
    pub status: ScanStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostState {
    pub id: HostId,
    pub state: HostMode,
    pub specs: Vec<FaultSpec>,
    pub age_hours: u64,
    pub scan_history: Vec<ScanEntry>,
    pub detected_at: Option<u64>,
}

impl HostState {
    pub fn is_defective(&self) -> bool {
        !self.specs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub hosts: Vec<HostState>,
}

impl Fleet {
    pub fn defective(&self) -> impl Iterator<Item = &HostState> {
        self.hosts.iter().filter(|h| h.is_defective())
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Independent generator for `(seed, purpose, index)`.
fn rng_for(seed: u64, purpose: &str, index: u64) -> SplitMix64 {
    SplitMix64::new(seed ^ fnv1a64(purpose.as_bytes()) ^ index.wrapping_mul(GOLDEN))
}

/// Number of defective hosts: `hosts * defect_rate`, rounded up (products
/// within 1e-9 of an integer count as that integer).
pub fn defective_count(hosts: u32, defect_rate: f64) -> u32 {
    let x = f64::from(hosts) * defect_rate;
    let n = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    (n as u32).min(hosts)
}

/// Builds the fleet: a seeded choice of defective hosts, each with one spec
/// template moved to a seeded core.
pub fn build_fleet(config: &FleetConfig) -> Result<Fleet, FleetError> {
    config.validate()?;
    let n = config.hosts as usize;
    let k = defective_count(config.hosts, config.defect_rate) as usize;
    let mut order: Vec<u32> = (0..config.hosts).collect();
    let mut rng = rng_for(config.seed, "defective-hosts", 0);
    for i in 0..k {
        let j = i + rng.next_below((n - i) as u64) as usize;
        order.swap(i, j);
    }
    let mut hosts: Vec<HostState> = (0..config.hosts)
        .map(|i| HostState {
            id: HostId(i),
            state: HostMode::Production,
            specs: Vec::new(),
            age_hours: 0,
            scan_history: Vec::new(),
            detected_at: None,
        })
        .collect();
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    for h in chosen {
        let mut r = rng_for(config.seed, "fault-placement", u64::from(h));
        let template = &config.fault_library[r.next_below(config.fault_library.len() as u64) as usize];
        let core = r.next_below(u64::from(config.cores_per_host)) as u32;
        let mut spec = template.relocated(CoreId::new(h, core));
        spec.id = format!("{}@{}", template.id, HostId(h));
        hosts[h as usize].specs.push(spec);
    }
    Ok(Fleet { hosts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    StateChange {
        from: HostMode,
        to: HostMode,
    },
    ScanComplete {
        status: ScanStatus,
        mismatches: usize,
        flagged_cores: Vec<u32>,
    },
    Quantum {
        quantum_id: u64,
        status: ScanStatus,
        ops: u64,
        deliveries: u32,
        plan_pass_complete: bool,
    },
    Detected {
        time_to_detect_hours: u64,
    },
    AppBatch(AppWorkloadResult),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t_hours: u64,
    pub host: HostId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub host: HostId,
    pub spec_id: String,
    pub core: u32,
    pub onset_hours: f64,
    pub detected_at_hours: Option<u64>,
    /// `None` when not detected within the horizon.
    pub time_to_detect_hours: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    pub mode: Mode,
    pub hosts: u32,
    pub horizon_hours: u64,
    pub scans: u64,
    pub scanned_hosts: u32,
    pub scanned_fraction: f64,
    pub defective: u32,
    pub detected: u32,
    pub time_to_detect: Vec<DetectionRecord>,
    pub median_time_to_detect_hours: Option<f64>,
    pub production_time_lost_hours: u64,
    /// Test compute over total compute, fleet-wide.
    pub overhead_fraction: f64,
    pub max_host_overhead_fraction: f64,
    /// Quanta per full plan pass (`PRODUCTION_FRIENDLY` only).
    pub quanta_per_plan: Option<u64>,
    pub collector_deliveries: u64,
    pub collector_distinct: u64,
    pub app: AppWorkloadResult,
    pub silent_loss: u64,
    pub error_events: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    pub metrics: CoverageMetrics,
    pub events: Vec<SimEvent>,
    pub fleet: Fleet,
    pub collector: CollectorState,
}

impl SimOutcome {
    /// Events as `SIM_EVENT` records followed by one `METRICS` record.
    pub fn records(&self) -> Vec<ReportRecord> {
        self.events
            .iter()
            .map(|e| ReportRecord::from_payload(RecordKind::SimEvent, 0, e))
            .chain(std::iter::once(ReportRecord::from_payload(
                RecordKind::Metrics,
                0,
                &self.metrics,
            )))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    PeriodicScan,
    MaintenanceStart,
    MaintenanceEnd,
    ScanEnd { fail: bool },
    Quantum { day: u64 },
}

struct Sim<'a> {
    config: &'a FleetConfig,
    prepared: PreparedPlan,
    plan_hash: String,
    specs: Vec<Arc<[FaultSpec]>>,
    hosts: Vec<HostState>,
    queue: BinaryHeap<Reverse<(u64, u64, u32, Action)>>,
    seq: u64,
    events: Vec<SimEvent>,
    maintenance_rng: Vec<SplitMix64>,
    delivery_rng: SplitMix64,
    collector: CollectorState,
    collector_deliveries: u64,
    scans: u64,
    lost_hours: u64,
    test_ops: Vec<u64>,
    quanta_done: Vec<u64>,
    /// Work items per quantum (`PRODUCTION_FRIENDLY`).
    quantum_items: usize,
    quanta_per_plan: u64,
    /// (host, mismatches, flagged cores) of scans still running.
    pending_reports: Vec<(u32, usize, Vec<u32>)>,
}

impl Sim<'_> {
    fn push(&mut self, t: u64, host: u32, action: Action) {
        self.seq += 1;
        self.queue.push(Reverse((t, self.seq, host, action)));
    }

    fn log(&mut self, t: u64, host: u32, kind: EventKind) {
        self.events.push(SimEvent {
            t_hours: t,
            host: HostId(host),
            kind,
        });
    }

    fn set_state(&mut self, t: u64, host: u32, to: HostMode) {
        let from = self.hosts[host as usize].state;
        if from != to {
            self.hosts[host as usize].state = to;
            self.log(t, host, EventKind::StateChange { from, to });
        }
    }

    fn backend(&self, host: u32, t: u64) -> FaultyBackend<ReferenceBackend> {
        let mut b = FaultyBackend::from_shared(ReferenceBackend::new(), self.specs[host as usize].clone());
        b.set_clock_hours(t as f64);
        b
    }

    /// Full scan of `host` starting at `t`; its result lands at `t + duration`.
    fn full_scan(&mut self, t: u64, host: u32) -> Result<(), FleetError> {
        let h = Host {
            id: HostId(host),
            cores: self.config.cores_per_host,
        };
        let report = scan_host_prepared(h, &self.prepared, |_| self.backend(host, t))?;
        let fail = report.status == ScanStatus::Fail;
        self.scans += 1;
        self.test_ops[host as usize] +=
            self.prepared.plan().cost_per_core() * u64::from(self.config.cores_per_host);
        self.push(t + self.config.scan_duration_hours, host, Action::ScanEnd { fail });
        self.pending_reports.push((host, report.mismatch_count(), report.flagged_cores()));
        Ok(())
    }

    fn detect(&mut self, t: u64, host: u32) {
        let state = &mut self.hosts[host as usize];
        if state.detected_at.is_some() || !state.is_defective() {
            return;
        }
        state.detected_at = Some(t);
        let onset = onset_hours(state);
        let ttd = t.saturating_sub(onset.ceil() as u64);
        self.log(t, host, EventKind::Detected { time_to_detect_hours: ttd });
    }

    fn quantum(&mut self, t: u64, host: u32, day: u64) -> Result<(), FleetError> {
        let vectors = self.prepared.vectors().len();
        let cores = self.config.cores_per_host as usize;
        let items = vectors * cores;
        let q = (day % self.quanta_per_plan) as usize;
        let start = q * self.quantum_items;
        let end = (start + self.quantum_items).min(items);
        let mut mismatches = 0;
        let mut c = start / vectors;
        while c * vectors < end {
            let lo = start.max(c * vectors) - c * vectors;
            let hi = end.min((c + 1) * vectors) - c * vectors;
            let core = CoreId::new(host, c as u32);
            let mut b = self.backend(host, t);
            mismatches += self.prepared.scan_core_range(core, &mut b, lo..hi)?.len();
            c += 1;
        }
        let ops = (end - start) as u64 * self.prepared.plan().ops_per_vector();
        self.test_ops[host as usize] += ops;
        let status = if mismatches > 0 {
            ScanStatus::Fail
        } else {
            ScanStatus::Pass
        };
        let record = ReportRecord::from_payload(
            RecordKind::ScanResult,
            0,
            &ScanSummary {
                host: HostId(host),
                plan_hash: self.plan_hash.clone(),
                quantum_id: day,
                status,
            },
        );
        let deliveries = if self.delivery_rng.next_unit() < self.config.collector_duplicate_rate {
            2
        } else {
            1
        };
        for _ in 0..deliveries {
            self.collector
                .ingest(&record)
                .expect("simulator emits well-formed records");
            self.collector_deliveries += 1;
        }
        self.quanta_done[host as usize] += 1;
        let complete = q as u64 + 1 == self.quanta_per_plan;
        self.hosts[host as usize].scan_history.push(ScanEntry { t_hours: t, status });
        self.log(
            t,
            host,
            EventKind::Quantum {
                quantum_id: day,
                status,
                ops,
                deliveries,
                plan_pass_complete: complete,
            },
        );
        if self.collector.status(HostId(host)) == crate::report::HostStatus::Fail {
            self.detect(t + 1, host);
        }
        Ok(())
    }

    fn maintenance_gap(&mut self, host: u32) -> Option<u64> {
        if self.config.maintenance_rate <= 0.0 {
            return None;
        }
        let mean = 24.0 / self.config.maintenance_rate;
        let u = self.maintenance_rng[host as usize].next_unit();
        let gap = (-(1.0 - u).ln() * mean).ceil();
        Some(if gap.is_finite() { (gap as u64).max(1) } else { u64::MAX / 4 })
    }
}

fn onset_hours(state: &HostState) -> f64 {
    state
        .specs
        .iter()
        .map(|s| s.onset.earliest_onset_hours())
        .fold(f64::INFINITY, f64::min)
}

/// Runs the simulation to the horizon.
pub fn run_simulation(fleet: Fleet, config: &FleetConfig) -> Result<SimOutcome, FleetError> {
    config.validate()?;
    let plan = config.host_plan();
    let prepared = PreparedPlan::new(&plan)?;
    let horizon = config.horizon_hours();
    let n = config.hosts;
    let specs = fleet
        .hosts
        .iter()
        .map(|h| normalize_specs(h.specs.clone()).map(Arc::from))
        .collect::<Result<Vec<Arc<[FaultSpec]>>, _>>()
        .map_err(|e| FleetError::Library(e.to_string()))?;
    let items = prepared.vectors().len() * config.cores_per_host as usize;
    let quantum_items =
        (config.quantum_capacity() / plan.ops_per_vector().max(1)).max(1) as usize;
    let quanta_per_plan = items.div_ceil(quantum_items) as u64;

    let mut sim = Sim {
        config,
        plan_hash: plan.plan_hash(),
        prepared,
        specs,
        hosts: fleet.hosts,
        queue: BinaryHeap::new(),
        seq: 0,
        events: Vec::new(),
        maintenance_rng: (0..n).map(|h| rng_for(config.seed, "maintenance", u64::from(h))).collect(),
        delivery_rng: rng_for(config.seed, "collector-delivery", 0),
        collector: CollectorState::new().with_hosts((0..n).map(HostId)),
        collector_deliveries: 0,
        scans: 0,
        lost_hours: 0,
        test_ops: vec![0; n as usize],
        quanta_done: vec![0; n as usize],
        quantum_items,
        quanta_per_plan,
        pending_reports: Vec::new(),
    };

    let mut app_total = AppWorkloadResult::default();
    if config.app_files > 0 {
        for h in 0..n {
            let files = app::host_files(config, h);
            let mut b = sim.backend(h, 0);
            let r = app_workload_decompression(
                Host {
                    id: HostId(h),
                    cores: config.cores_per_host,
                },
                &files,
                &mut b,
                config.seed,
            );
            app_total.add(&r);
            sim.log(0, h, EventKind::AppBatch(r));
        }
    }

    let dur = config.scan_duration_hours;
    for h in 0..n {
        match config.mode {
            Mode::Periodic => {
                let period = u64::from(config.period_days) * 24;
                let offset = u64::from(h) * period / u64::from(n);
                if offset + dur <= horizon {
                    sim.push(offset, h, Action::PeriodicScan);
                }
            }
            Mode::Opportunistic => {
                if let Some(gap) = sim.maintenance_gap(h) {
                    if gap + dur <= horizon {
                        sim.push(gap, h, Action::MaintenanceStart);
                    }
                }
            }
            Mode::ProductionFriendly => {
                let offset = u64::from(h) * 24 / u64::from(n);
                if offset + 1 <= horizon {
                    sim.push(offset, h, Action::Quantum { day: 0 });
                }
            }
        }
    }

    while let Some(Reverse((t, _, host, action))) = sim.queue.pop() {
        match action {
            Action::PeriodicScan => {
                sim.set_state(t, host, HostMode::OutForTest);
                sim.lost_hours += dur;
                sim.full_scan(t, host)?;
                let next = t + u64::from(config.period_days) * 24;
                if next + dur <= horizon {
                    sim.push(next, host, Action::PeriodicScan);
                }
            }
            Action::MaintenanceStart => {
                sim.set_state(t, host, HostMode::Maintenance);
                sim.full_scan(t, host)?;
                sim.push(t + config.maintenance_hours, host, Action::MaintenanceEnd);
            }
            Action::MaintenanceEnd => {
                sim.set_state(t, host, HostMode::Production);
                if let Some(gap) = sim.maintenance_gap(host) {
                    let next = t.saturating_add(gap);
                    if next.saturating_add(dur) <= horizon {
                        sim.push(next, host, Action::MaintenanceStart);
                    }
                }
            }
            Action::ScanEnd { fail } => {
                let (h, mismatches, flagged_cores) = sim
                    .pending_reports
                    .iter()
                    .position(|(h, _, _)| *h == host)
                    .map(|i| sim.pending_reports.remove(i))
                    .expect("scan end follows its scan");
                debug_assert_eq!(h, host);
                let status = if fail {
                    ScanStatus::Fail
                } else {
                    ScanStatus::Pass
                };
                sim.hosts[host as usize].scan_history.push(ScanEntry {
                    t_hours: t - dur,
                    status,
                });
                sim.log(
                    t,
                    host,
                    EventKind::ScanComplete {
                        status,
                        mismatches,
                        flagged_cores,
                    },
                );
                if fail {
                    sim.detect(t, host);
                }
                if config.mode == Mode::Periodic {
                    sim.set_state(t, host, HostMode::Production);
                }
            }
            Action::Quantum { day } => {
                sim.quantum(t, host, day)?;
                let next = t + 24;
                if next + 1 <= horizon {
                    sim.push(next, host, Action::Quantum { day: day + 1 });
                }
            }
        }
    }

    for h in &mut sim.hosts {
        h.age_hours = horizon;
    }
    let metrics = metrics(&sim, config, app_total);
    Ok(SimOutcome {
        metrics,
        events: sim.events,
        fleet: Fleet { hosts: sim.hosts },
        collector: sim.collector,
    })
}

fn metrics(sim: &Sim<'_>, config: &FleetConfig, app: AppWorkloadResult) -> CoverageMetrics {
    let horizon = config.horizon_hours();
    let scanned_hosts = match config.mode {
        Mode::ProductionFriendly => sim
            .quanta_done
            .iter()
            .filter(|&&q| q >= sim.quanta_per_plan)
            .count(),
        _ => sim.hosts.iter().filter(|h| !h.scan_history.is_empty()).count(),
    } as u32;
    let time_to_detect: Vec<DetectionRecord> = sim
        .hosts
        .iter()
        .filter(|h| h.is_defective())
        .map(|h| {
            let spec = &h.specs[0];
            let core = match spec.scope.core {
                CoreSelector::Index(c) => c,
                CoreSelector::Any => u32::MAX,
            };
            let onset = onset_hours(h);
            DetectionRecord {
                host: h.id,
                spec_id: spec.id.clone(),
                core,
                onset_hours: onset,
                detected_at_hours: h.detected_at,
                time_to_detect_hours: h.detected_at.map(|t| t.saturating_sub(onset.ceil() as u64)),
            }
        })
        .collect();
    let mut ttd: Vec<u64> = time_to_detect
        .iter()
        .filter_map(|d| d.time_to_detect_hours)
        .collect();
    ttd.sort_unstable();
    let median = match ttd.len() {
        0 => None,
        n if n % 2 == 1 => Some(ttd[n / 2] as f64),
        n => Some((ttd[n / 2 - 1] + ttd[n / 2]) as f64 / 2.0),
    };
    let host_compute = config.daily_compute_ops as f64 * f64::from(config.horizon_days);
    let (overhead, max_host) = match config.mode {
        Mode::ProductionFriendly if host_compute > 0.0 => {
            let total: u64 = sim.test_ops.iter().sum();
            let max = sim.test_ops.iter().copied().max().unwrap_or(0);
            (
                total as f64 / (host_compute * f64::from(config.hosts)),
                max as f64 / host_compute,
            )
        }
        Mode::Periodic if horizon > 0 => {
            let per_host = sim
                .hosts
                .iter()
                .map(|h| h.scan_history.len() as u64 * config.scan_duration_hours)
                .max()
                .unwrap_or(0);
            (
                sim.lost_hours as f64 / (horizon as f64 * f64::from(config.hosts)),
                per_host as f64 / horizon as f64,
            )
        }
        _ => (0.0, 0.0),
    };
    CoverageMetrics {
        mode: config.mode,
        hosts: config.hosts,
        horizon_hours: horizon,
        scans: match config.mode {
            Mode::ProductionFriendly => sim.quanta_done.iter().sum(),
            _ => sim.scans,
        },
        scanned_hosts,
        scanned_fraction: f64::from(scanned_hosts) / f64::from(config.hosts),
        defective: time_to_detect.len() as u32,
        detected: time_to_detect
            .iter()
            .filter(|d| d.detected_at_hours.is_some())
            .count() as u32,
        time_to_detect,
        median_time_to_detect_hours: median,
        production_time_lost_hours: sim.lost_hours,
        overhead_fraction: overhead,
        max_host_overhead_fraction: max_host,
        quanta_per_plan: (config.mode == Mode::ProductionFriendly).then_some(sim.quanta_per_plan),
        collector_deliveries: sim.collector_deliveries,
        collector_distinct: sim.collector.distinct_records() as u64,
        silent_loss: app.files_silently_dropped,
        app,
        error_events: app.error_events_emitted,
    }
}

#[cfg(test)]
mod tests;
