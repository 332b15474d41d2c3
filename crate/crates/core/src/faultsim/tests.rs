use super::*;
use crate::kernels::{
    gen_operand_stream, int_pow_trunc, square_lut, KernelKind, OperandDomain, ReferenceBackend,
    TestKernel,
};
use proptest::prelude::*;

fn core59() -> Vec<FaultSpec> {
    load_fault_specs(bundled_spec("core59.spec").unwrap()).unwrap()
}

fn int_value(out: crate::kernels::KernelOutput) -> i128 {
    out.value.as_int().expect("integer kernel")
}

fn early_life(hours: f64) -> FaultSpec {
    FaultSpec {
        id: "early".into(),
        scope: Scope::core(59),
        trigger: Trigger {
            op_kind: OpKind::Exp2,
            alternatives: vec![],
            broad: true,
        },
        transform: CorruptionTransform::SetConstant { value: 0.0 },
        onset: OnsetSchedule::EarlyLife {
            activation_hours: hours,
        },
    }
}

fn op(kind: OpKind, operands: &[f64], core: CoreId) -> PrimOp {
    PrimOp {
        kind,
        operands: operands.iter().copied().collect(),
        core,
        seq: 0,
    }
}

#[test]
fn bundled_core59_shape() {
    let specs = core59();
    assert_eq!(specs.len(), 1);
    let s = &specs[0];
    assert_eq!(s.scope.core, CoreSelector::Index(59));
    assert_eq!(s.trigger.op_kind, OpKind::Exp2);
    assert_eq!(s.transform, CorruptionTransform::SetConstant { value: 0.0 });
    assert_eq!(s.defect_class(), DefectClass::DeviceError);
    assert_eq!(s.trigger.alternatives.len(), 2);
}

#[test]
fn core59_values() {
    let mut b = inject(ReferenceBackend::new(), core59()).unwrap();
    let c59 = CoreId::new(0, 59);
    let c12 = CoreId::new(0, 12);
    assert_eq!(int_value(int_pow_trunc(1.1, 53.0, &mut b, c59)), 0);
    assert_eq!(int_value(int_pow_trunc(1.1, 68.0, &mut b, c59)), 0);
    assert_eq!(int_value(int_pow_trunc(1.1, 78.0, &mut b, c59)), 1692);
    assert_eq!(int_value(int_pow_trunc(1.1, 53.0, &mut b, c12)), 156);
    assert_eq!(int_value(int_pow_trunc(1.1, 68.0, &mut b, c12)), 652);
}

#[test]
fn errors_table_values() {
    let specs = load_fault_specs(bundled_spec("errors_table").unwrap()).unwrap();
    let mut b = inject(ReferenceBackend::new(), specs).unwrap();
    let c59 = CoreId::new(0, 59);
    let c0 = CoreId::new(0, 0);
    for (y, faulty, expected) in [(3.0, 0, 1), (107.0, 32809, 26854), (-3.0, 1, 0)] {
        assert_eq!(int_value(int_pow_trunc(1.1, y, &mut b, c59)), faulty, "y={y}");
        assert_eq!(int_value(int_pow_trunc(1.1, y, &mut b, c0)), expected, "y={y}");
    }
}

#[test]
fn empty_injection_is_identity() {
    let mut f = inject(ReferenceBackend::new(), vec![]).unwrap();
    let mut r = ReferenceBackend::new();
    let core = CoreId::new(3, 59);
    for v in gen_operand_stream(1, 500, &OperandDomain::default()).unwrap() {
        for kind in KernelKind::ALL {
            let k = TestKernel::from(kind);
            assert_eq!(k.evaluate(&v, &mut f, core), k.evaluate(&v, &mut r, core));
        }
    }
}

#[test]
fn scope_containment_on_16_core_host() {
    let specs = vec![core59()[0].relocated(CoreId::new(0, 5))];
    let mut f = inject(ReferenceBackend::new(), specs).unwrap();
    let stream = gen_operand_stream(99, 10_000, &OperandDomain::default()).unwrap();
    let k = TestKernel::from(KernelKind::PowChain);
    for core in (0..16).filter(|&c| c != 5) {
        let core = CoreId::new(0, core);
        let mut r = ReferenceBackend::new();
        for v in &stream {
            let a = k.evaluate(v, &mut f, core);
            let b = k.evaluate(v, &mut r, core);
            assert_eq!(a.value, b.value);
        }
    }
}

#[test]
fn host_pattern_scopes() {
    let mut spec = core59()[0].clone();
    spec.scope.host_pattern = "host-1*".into();
    let trig = op(OpKind::Exp2, &[f64::from_bits(0x401d26975b913c1c)], CoreId::new(12, 59));
    assert!(trigger_eval(&spec, &trig, 0.0));
    let other = PrimOp {
        core: CoreId::new(2, 59),
        ..trig.clone()
    };
    assert!(!trigger_eval(&spec, &other, 0.0));
    assert!(glob_match("host-*-a", "host-7-a"));
    assert!(!glob_match("host-*-a", "host-7-b"));
    assert!(glob_match("h*7*", "host-17"));
}

#[test]
fn trigger_eval_examples() {
    let spec = &core59()[0];
    let c59 = CoreId::new(0, 59);
    let hit = op(OpKind::Exp2, &[f64::from_bits(0x401d26975b913c1c)], c59);
    assert!(trigger_eval(spec, &hit, 0.0));
    let miss = op(OpKind::Exp2, &[f64::from_bits(0x4025735739b82767)], c59);
    assert!(!trigger_eval(spec, &miss, 0.0));
    let wrong_kind = op(OpKind::Log2, &[f64::from_bits(0x401d26975b913c1c)], c59);
    assert!(!trigger_eval(spec, &wrong_kind, 0.0));

    let e = early_life(336.0);
    let any = op(OpKind::Exp2, &[1.0], c59);
    assert!(!trigger_eval(&e, &any, 100.0));
    assert!(trigger_eval(&e, &any, 400.0));
}

#[test]
fn interval_matching() {
    let t = Trigger {
        op_kind: OpKind::Mul,
        alternatives: vec![vec![
            OperandMatcher::Interval { lo: 50.0, hi: 60.0 },
            OperandMatcher::Any,
        ]],
        broad: false,
    };
    let c = CoreId::new(0, 0);
    assert!(t.matches(&op(OpKind::Mul, &[53.0, 0.1], c)));
    assert!(t.matches(&op(OpKind::Mul, &[60.0, 7.0], c)));
    assert!(!t.matches(&op(OpKind::Mul, &[61.0, 0.1], c)));
    assert!(!t.matches(&op(OpKind::Mul, &[f64::NAN, 0.1], c)));
}

#[test]
fn corrupt_examples() {
    assert_eq!(corrupt(1.0, &CorruptionTransform::Bitflip { bit: 63 }), Ok(-1.0));
    assert_eq!(corrupt(123.5, &CorruptionTransform::SetConstant { value: 0.0 }), Ok(0.0));
    assert_eq!(corrupt(1.331, &CorruptionTransform::ExponentFlip { bit: 0 }), Ok(0.6655));
    assert!(matches!(
        corrupt(1.0, &CorruptionTransform::Bitflip { bit: 64 }),
        Err(FaultError::BitIndex(64, _))
    ));
    assert!(corrupt(1.0, &CorruptionTransform::ExponentFlip { bit: 11 }).is_err());
}

#[test]
fn lut_override_only_touches_its_entry() {
    let spec = FaultSpec {
        id: "lut".into(),
        scope: Scope::core(1),
        trigger: Trigger {
            op_kind: OpKind::LutSquare,
            alternatives: vec![],
            broad: true,
        },
        transform: CorruptionTransform::LutEntryOverride {
            index: 12,
            value: 145.0,
        },
        onset: OnsetSchedule::DeviceError,
    };
    let mut b = inject(ReferenceBackend::new(), vec![spec]).unwrap();
    let c = CoreId::new(0, 1);
    assert_eq!(int_value(square_lut(12, &mut b, c)), 145);
    assert_eq!(int_value(square_lut(11, &mut b, c)), 121);
    assert_eq!(int_value(square_lut(12, &mut b, CoreId::new(0, 2))), 144);
}

#[test]
fn onset_examples() {
    let mut s = early_life(0.0);
    s.onset = OnsetSchedule::DeviceError;
    assert!(onset_active(&s, 0.0));
    s.onset = OnsetSchedule::Wearout {
        rated_life_hours: 43800.0,
    };
    assert!(!onset_active(&s, 43799.0));
    assert!(onset_active(&s, 43801.0));
    s.onset = OnsetSchedule::Degradation { ramp_hours: 1000.0 };
    assert!(onset_active(&s, 2000.0));
    assert!(!onset_active(&s, 0.0));
}

#[test]
fn degradation_is_deterministic_and_mixed_near_half_ramp() {
    let mut s = early_life(0.0);
    s.onset = OnsetSchedule::Degradation { ramp_hours: 1000.0 };
    let draws: Vec<bool> = (0..200).map(|h| onset_active(&s, 500.0 + f64::from(h))).collect();
    let again: Vec<bool> = (0..200).map(|h| onset_active(&s, 500.0 + f64::from(h))).collect();
    assert_eq!(draws, again);
    assert!(draws.iter().any(|&a| a) && draws.iter().any(|&a| !a));
    // same whole hour, same sample
    assert_eq!(onset_active(&s, 500.1), onset_active(&s, 500.9));
}

#[test]
fn clock_drives_onset_in_backend() {
    let mut b = inject(ReferenceBackend::new(), vec![early_life(336.0)]).unwrap();
    let c = CoreId::new(0, 59);
    assert_eq!(int_value(int_pow_trunc(1.1, 53.0, &mut b, c)), 156);
    b.set_clock_hours(400.0);
    assert_eq!(b.clock_hours(), 400.0);
    assert_eq!(int_value(int_pow_trunc(1.1, 53.0, &mut b, c)), 0);
}

#[test]
fn specs_compose_in_order() {
    let c = CoreId::new(0, 0);
    let mk = |id: &str, t| FaultSpec {
        id: id.into(),
        scope: Scope::core(0),
        trigger: Trigger {
            op_kind: OpKind::Add,
            alternatives: vec![],
            broad: true,
        },
        transform: t,
        onset: OnsetSchedule::DeviceError,
    };
    let set = mk("set", CorruptionTransform::SetConstant { value: 1.0 });
    let flip = mk("flip", CorruptionTransform::Bitflip { bit: 63 });
    let mut ab = inject(ReferenceBackend::new(), vec![set.clone(), flip.clone()]).unwrap();
    let mut ba = inject(ReferenceBackend::new(), vec![flip, set]).unwrap();
    assert_eq!(ab.execute(OpKind::Add, &[2.0, 3.0], c).result, -1.0);
    assert_eq!(ba.execute(OpKind::Add, &[2.0, 3.0], c).result, 1.0);
}

#[test]
fn faulty_backend_keeps_sequence_and_status() {
    let mut b = inject(ReferenceBackend::new(), core59()).unwrap();
    let out = int_pow_trunc(1.1, 53.0, &mut b, CoreId::new(0, 59));
    assert!(out.is_ok());
    let seqs: Vec<u64> = out.trace.iter().map(|s| s.op.seq).collect();
    assert_eq!(seqs, vec![0, 1, 2, 3]);
}

#[test]
fn duplicate_ids() {
    let s = core59()[0].clone();
    assert_eq!(normalize_specs(vec![s.clone(), s.clone()]).unwrap().len(), 1);
    let mut other = s.clone();
    other.transform = CorruptionTransform::SetConstant { value: 1.0 };
    assert_eq!(
        inject(ReferenceBackend::new(), vec![s, other]).unwrap_err(),
        FaultError::DuplicateId("core59".into())
    );
}

#[test]
fn unflagged_empty_match_list_rejected() {
    let mut s = early_life(0.0);
    s.trigger.broad = false;
    assert!(matches!(s.validate(), Err(FaultError::Invalid { .. })));
}

#[test]
fn parse_empty_and_comments() {
    assert_eq!(load_fault_specs(""), Ok(vec![]));
    assert_eq!(load_fault_specs("# nothing\n\n   # here\n"), Ok(vec![]));
}

#[test]
fn parse_all_classes() {
    let text = "\
[spec]
id = a
class = early_life
activation_hours = 336
core = *
op_kind = MUL
operands = 50..60/* 0x4000000000000000/0x3ff0000000000000
transform = bitflip
transform_params = 3
[spec]
id = b
class = degradation
ramp_hours = 1000
core = 2
op_kind = LUT_SQUARE
broad = true
transform = lut_entry_override
transform_params = 12, 0x4062200000000000
[spec]
id = c
class = wearout
rated_life_hours = 43800
host_pattern = host-3
core = 0
op_kind = LOG2
operands = *
transform = set_constant
transform_params = -0.5
";
    let specs = load_fault_specs(text).unwrap();
    assert_eq!(specs.len(), 3);
    assert_eq!(specs[0].scope.core, CoreSelector::Any);
    assert_eq!(
        specs[0].trigger.alternatives[0],
        vec![OperandMatcher::Interval { lo: 50.0, hi: 60.0 }, OperandMatcher::Any]
    );
    assert_eq!(
        specs[0].trigger.alternatives[1],
        vec![OperandMatcher::exact(2.0), OperandMatcher::exact(1.0)]
    );
    assert_eq!(
        specs[1].transform,
        CorruptionTransform::LutEntryOverride {
            index: 12,
            value: 145.0
        }
    );
    assert_eq!(specs[2].onset.earliest_onset_hours(), 43800.0);
    assert_eq!(specs[2].scope.host_pattern, "host-3");
}

fn parse_err(text: &str) -> (usize, String) {
    match load_fault_specs(text) {
        Err(FaultError::Parse { line, field, .. }) => (line, field),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn parse_errors_name_line_and_field() {
    let base = "[spec]\nid = a\nclass = device_error\ncore = 1\nop_kind = EXP2\noperands = *\ntransform = set_constant\ntransform_params = 0\n";
    assert!(load_fault_specs(base).is_ok());
    assert_eq!(parse_err(&base.replace("EXP2", "POW")), (5, "op_kind".into()));
    assert_eq!(parse_err(&base.replace("operands = *", "operands = 0x12")), (6, "operands".into()));
    assert_eq!(
        parse_err(&base.replace("set_constant\ntransform_params = 0", "bitflip\ntransform_params = 64")),
        (8, "transform_params".into())
    );
    assert_eq!(parse_err(&base.replace("core = 1", "core = x")), (4, "core".into()));
    assert_eq!(parse_err(&base.replace("id = a\n", "")), (1, "id".into()));
    assert_eq!(parse_err(&format!("{base}bogus = 1\n")), (9, "bogus".into()));
    assert_eq!(parse_err("id = a\n"), (1, "id".into()));
    assert_eq!(parse_err("[other]\n"), (1, "section".into()));
    // operand count must match the op arity
    assert_eq!(parse_err(&base.replace("operands = *", "operands = */*")), (1, "spec".into()));
    let dup = format!("{base}{}", base.replace("= 0\n", "= 1\n"));
    assert_eq!(parse_err(&dup), (9, "id".into()));
}

#[test]
fn partial_documents_are_not_loaded() {
    let good = core59();
    let text = format!(
        "{}\n[spec]\nid = broken\n",
        bundled_spec("core59.spec").unwrap()
    );
    assert!(load_fault_specs(&text).is_err());
    assert_eq!(good.len(), 1);
}

#[test]
fn spec_serde_roundtrip() {
    let specs = load_fault_specs(bundled_spec("errors_table.spec").unwrap()).unwrap();
    let json = serde_json::to_string(&specs).unwrap();
    let back: Vec<FaultSpec> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, specs);
}

proptest! {
    #[test]
    fn bitflip_is_an_involution(bits in any::<u64>(), bit in 0u32..64) {
        let t = CorruptionTransform::Bitflip { bit };
        let x = f64::from_bits(bits);
        let twice = corrupt(corrupt(x, &t).unwrap(), &t).unwrap();
        prop_assert_eq!(twice.to_bits(), bits);
    }

    #[test]
    fn set_constant_is_idempotent(bits in any::<u64>(), c in any::<f64>()) {
        let t = CorruptionTransform::SetConstant { value: c };
        let once = corrupt(f64::from_bits(bits), &t).unwrap();
        prop_assert_eq!(corrupt(once, &t).unwrap().to_bits(), once.to_bits());
    }

    #[test]
    fn exponent_flip_keeps_sign_and_mantissa(bits in any::<u64>(), bit in 0u32..11) {
        let t = CorruptionTransform::ExponentFlip { bit };
        let y = corrupt(f64::from_bits(bits), &t).unwrap().to_bits();
        let diff = y ^ bits;
        prop_assert_eq!(diff.count_ones(), 1);
        prop_assert!(diff.trailing_zeros() >= 52 && diff.trailing_zeros() <= 62);
    }

    #[test]
    fn onset_is_monotone(t1 in 0.0f64..100_000.0, dt in 0.0f64..100_000.0, a in 0.0f64..50_000.0) {
        for onset in [
            OnsetSchedule::EarlyLife { activation_hours: a },
            OnsetSchedule::Wearout { rated_life_hours: a },
        ] {
            let mut s = early_life(0.0);
            s.onset = onset;
            if onset_active(&s, t1) {
                prop_assert!(onset_active(&s, t1 + dt));
            }
        }
    }

    #[test]
    fn faulty_backend_is_deterministic(y in -128i32..=128, core in 55u32..62) {
        let c = CoreId::new(0, core);
        let mut a = inject(ReferenceBackend::new(), core59()).unwrap();
        let mut b = inject(ReferenceBackend::new(), core59()).unwrap();
        let ya = int_pow_trunc(1.1, f64::from(y), &mut a, c);
        prop_assert_eq!(ya.clone(), int_pow_trunc(1.1, f64::from(y), &mut b, c));
    }
}
