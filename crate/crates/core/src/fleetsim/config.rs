//! `FleetConfig` in the key-value configuration format.
//!
//! ```text
//! hosts                    = 1000
//! cores_per_host           = 64
//! defect_rate              = 0.001
//! fault_library            = core59.spec, errors_table.spec
//! mode                     = periodic        # opportunistic | periodic | production
//! period_days              = 15
//! horizon_days             = 15
//! seed                     = 1
//! maintenance_rate         = 0.05            # events per host per day
//! maintenance_hours        = 4
//! scan_duration_hours      = 1
//! workload_overhead_budget = 0.01
//! daily_compute_ops        = 76800
//! collector_duplicate_rate = 0.1
//! plan_seed                = 7
//! plan_count               = 8
//! plan_kernels             = INT_POW
//! plan_targeted            = builtin         # builtin | none
//! app_files                = 0
//! app_trigger_period       = 0
//! ```
//!
//! Every key is optional; defaults are those of [`FleetConfig::default`].
//! `fault_library` entries are resolved by the caller.

use super::{FleetConfig, FleetError, Mode};
use crate::detector::builtin_targeted;
use crate::faultsim::FaultSpec;
use crate::kernels::KernelKind;
use crate::report::{parse_kv, ConfigError};

pub const CONFIG_KEYS: &[&str] = &[
    "hosts",
    "cores_per_host",
    "defect_rate",
    "fault_library",
    "mode",
    "period_days",
    "horizon_days",
    "seed",
    "maintenance_rate",
    "maintenance_hours",
    "scan_duration_hours",
    "workload_overhead_budget",
    "daily_compute_ops",
    "collector_duplicate_rate",
    "plan_seed",
    "plan_count",
    "plan_kernels",
    "plan_targeted",
    "app_files",
    "app_trigger_period",
];

impl FleetConfig {
    /// Parses a configuration document. `resolve` maps each `fault_library`
    /// entry to its specs.
    pub fn parse<R>(text: &str, mut resolve: R) -> Result<FleetConfig, FleetError>
    where
        R: FnMut(&str) -> Result<Vec<FaultSpec>, FleetError>,
    {
        let doc = parse_kv(text)?;
        doc.check_keys(CONFIG_KEYS)?;
        let d = FleetConfig::default();
        let mode = match doc.get("mode") {
            None => d.mode,
            Some(m) => Mode::parse(m).ok_or_else(|| {
                doc.value_error("mode", format!("unknown mode {m:?} (opportunistic | periodic | production)"))
            })?,
        };
        let fault_library = match doc.get("fault_library") {
            None => d.fault_library,
            Some(list) => {
                let mut specs = Vec::new();
                for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    specs.extend(resolve(name)?);
                }
                specs
            }
        };
        let mut plan = d.scan_plan.clone();
        plan.stream.seed = doc.parse_or("plan_seed", plan.stream.seed)?;
        plan.stream.count = doc.parse_or("plan_count", plan.stream.count)?;
        if let Some(list) = doc.get("plan_kernels") {
            let mut kernels = Vec::new();
            for name in list.split(',').map(str::trim) {
                kernels.push(
                    KernelKind::parse(name)
                        .ok_or_else(|| doc.value_error("plan_kernels", format!("unknown kernel {name:?}")))?,
                );
            }
            plan = plan.with_kernels(kernels);
        }
        match doc.get("plan_targeted") {
            None => {}
            Some("builtin") => plan.targeted = builtin_targeted(),
            Some("none") => plan.targeted = Vec::new(),
            Some(other) => {
                return Err(doc
                    .value_error("plan_targeted", format!("expected builtin or none, got {other:?}"))
                    .into())
            }
        }
        let config = FleetConfig {
            hosts: doc.parse_or("hosts", d.hosts)?,
            cores_per_host: doc.parse_or("cores_per_host", d.cores_per_host)?,
            defect_rate: doc.parse_or("defect_rate", d.defect_rate)?,
            fault_library,
            maintenance_rate: doc.parse_or("maintenance_rate", d.maintenance_rate)?,
            maintenance_hours: doc.parse_or("maintenance_hours", d.maintenance_hours)?,
            scan_duration_hours: doc.parse_or("scan_duration_hours", d.scan_duration_hours)?,
            workload_overhead_budget: doc
                .parse_or("workload_overhead_budget", d.workload_overhead_budget)?,
            daily_compute_ops: doc.parse_or("daily_compute_ops", d.daily_compute_ops)?,
            collector_duplicate_rate: doc
                .parse_or("collector_duplicate_rate", d.collector_duplicate_rate)?,
            scan_plan: plan,
            mode,
            period_days: doc.parse_or("period_days", d.period_days)?,
            horizon_days: doc.parse_or("horizon_days", d.horizon_days)?,
            seed: doc.parse_or("seed", d.seed)?,
            app_files: doc.parse_or("app_files", d.app_files)?,
            app_trigger_period: doc.parse_or("app_trigger_period", d.app_trigger_period)?,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<ConfigError> for FleetError {
    fn from(e: ConfigError) -> Self {
        FleetError::Config(e)
    }
}
