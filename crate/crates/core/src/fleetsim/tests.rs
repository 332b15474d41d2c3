use super::*;
use crate::kernels::{DecompressHeader, ReferenceBackend};

fn small(mode: Mode) -> FleetConfig {
    FleetConfig {
        hosts: 100,
        cores_per_host: 64,
        defect_rate: 0.05,
        mode,
        ..FleetConfig::default()
    }
}

fn run(config: &FleetConfig) -> SimOutcome {
    run_simulation(build_fleet(config).unwrap(), config).unwrap()
}

fn core59_backend() -> FaultyBackend<ReferenceBackend> {
    let specs = load_fault_specs(bundled_spec("core59.spec").unwrap()).unwrap();
    FaultyBackend::from_shared(ReferenceBackend::new(), specs.into())
}

#[test]
fn defective_counts() {
    assert_eq!(defective_count(1000, 0.001), 1);
    assert_eq!(defective_count(10, 1.0), 10);
    assert_eq!(defective_count(10, 0.0), 0);
    assert_eq!(defective_count(10, 0.11), 2);
    assert_eq!(defective_count(1000, 0.003), 3);
}

#[test]
fn fleet_construction() {
    let none = FleetConfig {
        defect_rate: 0.0,
        ..FleetConfig::default()
    };
    assert_eq!(build_fleet(&none).unwrap().defective().count(), 0);

    let all = FleetConfig {
        hosts: 10,
        defect_rate: 1.0,
        ..FleetConfig::default()
    };
    let fleet = build_fleet(&all).unwrap();
    assert_eq!(fleet.defective().count(), 10);
    for h in &fleet.hosts {
        assert_eq!(h.specs.len(), 1);
        assert_eq!(h.specs[0].scope.host_pattern, h.id.to_string());
    }

    let d = FleetConfig::default();
    let a = build_fleet(&d).unwrap();
    assert_eq!(a.defective().count(), 1);
    assert_eq!(a, build_fleet(&d).unwrap());
}

#[test]
fn invalid_configs_rejected() {
    let bad = [
        FleetConfig {
            defect_rate: 1.5,
            ..FleetConfig::default()
        },
        FleetConfig {
            mode: Mode::Periodic,
            period_days: 0,
            ..FleetConfig::default()
        },
        FleetConfig {
            mode: Mode::ProductionFriendly,
            workload_overhead_budget: 0.0,
            ..FleetConfig::default()
        },
        FleetConfig {
            mode: Mode::ProductionFriendly,
            workload_overhead_budget: 1.5,
            ..FleetConfig::default()
        },
        FleetConfig {
            hosts: 0,
            ..FleetConfig::default()
        },
    ];
    for c in &bad {
        assert!(matches!(build_fleet(c), Err(FleetError::Invalid(_))), "{c:?}");
    }
}

#[test]
fn zero_horizon_runs_nothing() {
    for mode in [Mode::Periodic, Mode::Opportunistic, Mode::ProductionFriendly] {
        let c = FleetConfig {
            horizon_days: 0,
            ..small(mode)
        };
        let m = run(&c).metrics;
        assert_eq!(m.scans, 0);
        assert_eq!(m.scanned_fraction, 0.0);
    }
}

#[test]
fn periodic_detects_everything_within_a_period() {
    let c = small(Mode::Periodic);
    let out = run(&c);
    let m = &out.metrics;
    assert_eq!(m.defective, 5);
    assert_eq!(m.detected, 5);
    assert_eq!(m.scanned_fraction, 1.0);
    for d in &m.time_to_detect {
        assert!(d.time_to_detect_hours.unwrap() <= 360, "{d:?}");
    }
    assert_eq!(m.production_time_lost_hours, m.scans * c.scan_duration_hours);
}

#[test]
fn periodic_two_periods_and_staggering() {
    let c = FleetConfig {
        defect_rate: 0.0,
        horizon_days: 30,
        ..small(Mode::Periodic)
    };
    let out = run(&c);
    for h in &out.fleet.hosts {
        assert_eq!(h.scan_history.len(), 2);
    }
    assert_eq!(out.metrics.production_time_lost_hours, 100 * 2 * c.scan_duration_hours);

    let mut out_for_test = 0i64;
    let mut peak = 0;
    let mut events: Vec<_> = out.events.iter().collect();
    events.sort_by_key(|e| e.t_hours);
    let mut i = 0;
    while i < events.len() {
        let t = events[i].t_hours;
        while i < events.len() && events[i].t_hours == t {
            if let EventKind::StateChange { from, to } = events[i].kind {
                out_for_test += i64::from(to == HostMode::OutForTest) - i64::from(from == HostMode::OutForTest);
            }
            i += 1;
        }
        peak = peak.max(out_for_test);
    }
    let period_hours = u64::from(c.period_days) * 24;
    assert!(peak as u64 <= u64::from(c.hosts).div_ceil(period_hours) + 1, "peak {peak}");
}

#[test]
fn opportunistic_without_maintenance_detects_nothing() {
    let c = FleetConfig {
        maintenance_rate: 0.0,
        ..small(Mode::Opportunistic)
    };
    let m = run(&c).metrics;
    assert_eq!(m.detected, 0);
    assert_eq!(m.scans, 0);
    assert_eq!(m.scanned_fraction, 0.0);
}

#[test]
fn opportunistic_scans_once_per_maintenance() {
    let c = FleetConfig {
        maintenance_rate: 0.04,
        defect_rate: 0.2,
        ..small(Mode::Opportunistic)
    };
    let out = run(&c);
    let m = &out.metrics;
    let mut entered = vec![0u64; c.hosts as usize];
    for e in &out.events {
        if let EventKind::StateChange { to: HostMode::Maintenance, .. } = e.kind {
            entered[e.host.0 as usize] += 1;
        }
        if let EventKind::StateChange { from: HostMode::Production, to } = e.kind {
            assert_eq!(to, HostMode::Maintenance);
        }
    }
    for h in &out.fleet.hosts {
        assert_eq!(h.scan_history.len() as u64, entered[h.id.0 as usize]);
    }
    let cycled = entered.iter().filter(|&&n| n > 0).count();
    assert!(cycled > 0 && cycled < c.hosts as usize);
    assert_eq!(m.scanned_fraction, cycled as f64 / f64::from(c.hosts));
    let defective_cycled = out
        .fleet
        .hosts
        .iter()
        .filter(|h| h.is_defective() && entered[h.id.0 as usize] > 0)
        .count();
    assert_eq!(m.detected as usize, defective_cycled);
}

#[test]
fn production_friendly_quanta() {
    let c = small(Mode::ProductionFriendly);
    let plan_cost = c.host_plan().cost_per_core() * u64::from(c.cores_per_host);
    assert_eq!(plan_cost * 20, c.daily_compute_ops);
    let out = run(&c);
    let m = &out.metrics;
    assert_eq!(m.quanta_per_plan, Some(5));
    assert!(m.max_host_overhead_fraction <= c.workload_overhead_budget);
    assert_eq!(m.scanned_fraction, 1.0);
    assert_eq!(m.detected, m.defective);
    for d in &m.time_to_detect {
        assert!(d.time_to_detect_hours.unwrap() <= 5 * 24);
    }
    assert!(m.collector_deliveries > m.collector_distinct);
    assert_eq!(m.collector_distinct, m.scans);

    let full = FleetConfig {
        workload_overhead_budget: 1.0,
        horizon_days: 1,
        ..c
    };
    let m = run(&full).metrics;
    assert_eq!(m.quanta_per_plan, Some(1));
    assert_eq!(m.scanned_fraction, 1.0);
}

#[test]
fn replay_is_bit_identical() {
    for mode in [Mode::Periodic, Mode::Opportunistic, Mode::ProductionFriendly] {
        let c = FleetConfig {
            app_files: 50,
            app_trigger_period: 5,
            ..small(mode)
        };
        let a = run(&c);
        let b = run(&c);
        assert_eq!(
            crate::report::emit_report(&a.records()),
            crate::report::emit_report(&b.records())
        );
    }
}

#[test]
fn no_defects_no_loss() {
    let c = FleetConfig {
        defect_rate: 0.0,
        app_files: 200,
        app_trigger_period: 3,
        ..small(Mode::Periodic)
    };
    let m = run(&c).metrics;
    assert_eq!(m.detected, 0);
    assert_eq!(m.silent_loss, 0);
    assert_eq!(m.app.files_submitted, 200 * 100);
}

#[test]
fn app_workload_drops_silently_on_defective_host() {
    let host = Host { id: HostId(0), cores: 64 };
    let healthy = app_workload_decompression(host, &workload_files(3, 1000, 10), &mut ReferenceBackend::new(), 1);
    assert_eq!(healthy.files_silently_dropped, 0);
    assert_eq!(healthy.files_written, 1000);

    let trig = vec![DecompressHeader { base: 1.1, level: 53.0 }; 1000];
    let r = app_workload_decompression(host, &trig, &mut core59_backend(), 1);
    assert!(r.files_silently_dropped >= 1);
    assert_eq!(r.error_events_emitted, 0);
    assert_eq!(r.files_submitted, r.files_written + r.files_silently_dropped);

    let benign = vec![DecompressHeader { base: 1.1, level: 52.0 }; 1000];
    let r = app_workload_decompression(host, &benign, &mut core59_backend(), 1);
    assert_eq!(r.files_silently_dropped, 0);
}

#[test]
fn config_text() {
    let text = "hosts = 20\nmode = production  # quanta\nworkload_overhead_budget = 0.5\nfault_library = core59.spec\nplan_targeted = none\n";
    let c = FleetConfig::parse(text, |name| {
        Ok(load_fault_specs(bundled_spec(name).unwrap()).unwrap())
    })
    .unwrap();
    assert_eq!(c.hosts, 20);
    assert_eq!(c.mode, Mode::ProductionFriendly);
    assert_eq!(c.fault_library.len(), 1);
    assert!(c.scan_plan.targeted.is_empty());
    assert!(matches!(
        FleetConfig::parse("bogus = 1", |_| Ok(vec![])),
        Err(FleetError::Config(ConfigError::UnknownKey { .. }))
    ));
    assert!(matches!(
        FleetConfig::parse("mode = sometimes", |_| Ok(vec![])),
        Err(FleetError::Config(ConfigError::Value { .. }))
    ));
    assert!(matches!(
        FleetConfig::parse("defect_rate = 2", |_| Ok(vec![])),
        Err(FleetError::Invalid(_))
    ));
}
