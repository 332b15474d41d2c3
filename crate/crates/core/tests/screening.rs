use sdc_core::detector::{builtin_targeted, redundant_execute, scan_host, shrink, Host, ScanPlan, ScanStatus};
use sdc_core::faultsim::{bundled_spec, inject, load_fault_specs, CoreSelector, BUNDLED_SPECS};
use sdc_core::kernels::{
    gen_operand_stream, int_pow_trunc, CoreId, HostId, KernelKind, OperandDomain, ReferenceBackend, TestKernel,
    TestVector,
};
use sdc_core::oracle::{highprec_chain_eval, reference_eval};

fn faulty(name: &str) -> sdc_core::faultsim::FaultyBackend<ReferenceBackend> {
    inject(ReferenceBackend::new(), load_fault_specs(bundled_spec(name).unwrap()).unwrap()).unwrap()
}

#[test]
fn core59_fixture_values() {
    let mut b = faulty("core59.spec");
    let on = |b: &mut _, y: f64, core: u32| int_pow_trunc(1.1, y, b, CoreId::new(0, core)).value.as_int().unwrap();
    assert_eq!(on(&mut b, 53.0, 59), 0);
    assert_eq!(on(&mut b, 68.0, 59), 0);
    assert_eq!(on(&mut b, 78.0, 59), 1692);
    assert_eq!(on(&mut b, 52.0, 59), 142);
    assert_eq!(on(&mut b, 53.0, 58), 156);
    for (y, v) in [(53.0, 156), (68.0, 652), (78.0, 1692), (52.0, 142)] {
        assert_eq!(highprec_chain_eval(1.1, y).unwrap(), v);
    }
}

#[test]
fn error_table_fixture_values() {
    let mut b = faulty("errors_table.spec");
    let core = CoreId::new(0, 59);
    for (y, bad, good) in [(3.0, 0, 1), (107.0, 32809, 26854), (-3.0, 1, 0)] {
        assert_eq!(int_pow_trunc(1.1, y, &mut b, core).value.as_int(), Some(bad));
        assert_eq!(highprec_chain_eval(1.1, y).unwrap(), good);
    }
}

#[test]
fn scan_and_shrink_through_the_public_api() {
    let plan = ScanPlan::new(3, 300, 0..64).with_targeted(builtin_targeted());
    let specs = load_fault_specs(bundled_spec("core59.spec").unwrap()).unwrap();
    let report = scan_host(Host { id: HostId(4), cores: 64 }, &plan, |_| {
        inject(ReferenceBackend::new(), specs.clone()).unwrap()
    })
    .unwrap();
    assert_eq!(report.status, ScanStatus::Fail);
    assert_eq!(report.flagged_cores(), vec![59]);
    for r in &report.findings[0].minimal_reproducer {
        let ys: Vec<f64> = r.minimal_vectors.iter().map(|v| v.exponent).collect();
        assert_eq!(ys, vec![53.0, 68.0], "{}", r.kernel.kind);
        assert!(r.steps as f64 <= r.step_bound());
    }

    let stream = vec![TestVector::new(1.1, 107.0)];
    let r = shrink(&stream, CoreId::new(0, 59), &KernelKind::IntPow.into(), &mut faulty("errors_table.spec")).unwrap();
    assert_eq!(r.minimal_vectors, stream);
}

#[test]
fn every_bundled_spec_is_masked_by_a_vote() {
    let vectors: Vec<TestVector> = gen_operand_stream(5, 200, &OperandDomain::default())
        .unwrap()
        .into_iter()
        .chain(builtin_targeted())
        .collect();
    for (name, text) in BUNDLED_SPECS {
        let specs = load_fault_specs(text).unwrap();
        let CoreSelector::Index(bad) = specs[0].scope.core else {
            panic!("{name} is pinned to a core");
        };
        let cores = [CoreId::new(0, bad), CoreId::new(0, (bad + 1) % 64), CoreId::new(0, (bad + 2) % 64)];
        let mut b = faulty(name);
        let mut flagged = 0;
        for kind in [KernelKind::IntPow, KernelKind::PowChain] {
            let kernel = TestKernel::from(kind);
            for v in &vectors {
                let vote = redundant_execute(&kernel, v, &cores, &mut b).unwrap();
                assert_eq!(vote.voted.key(), reference_eval(&kernel, v).value.key(), "{name} {v}");
                flagged += usize::from(vote.disagreement);
            }
        }
        assert!(flagged > 0, "{name} never fired");
    }
}
