use proptest::prelude::*;

use super::*;

const CORE: CoreId = CoreId {
    host: HostId(0),
    core: 0,
};

fn int_pow(x: f64, y: f64) -> i128 {
    int_pow_trunc(x, y, &mut ReferenceBackend::new(), CORE)
        .value
        .as_int()
        .unwrap()
}

/// Flips the low bit of every CHECKSUM result after the first.
struct ChecksumFlipper {
    inner: ReferenceBackend,
    seen: usize,
}

impl ArithmeticBackend for ChecksumFlipper {
    fn execute(&mut self, kind: OpKind, operands: &[f64], core: CoreId) -> TraceStep {
        let mut step = self.inner.execute(kind, operands, core);
        if kind == OpKind::Checksum {
            if self.seen > 0 {
                step.result = f64::from_bits(step.result.to_bits() ^ 1);
            }
            self.seen += 1;
        }
        step
    }
}

#[test]
fn pow_chain_values() {
    let mut b = ReferenceBackend::new();
    let out = pow_via_log2(1.1, 78.0, &mut b, CORE);
    assert_eq!(out.value.as_float().unwrap().trunc(), 1692.0);
    let out = pow_via_log2(1.1, 53.0, &mut b, CORE);
    assert_eq!(out.value.as_float().unwrap().trunc(), 156.0);
    for x in [0.5, 1.1, 7.0, 1e300] {
        let out = pow_via_log2(x, 0.0, &mut b, CORE);
        assert_eq!(out.value.as_float().unwrap().to_bits(), 1.0f64.to_bits());
    }
}

#[test]
fn int_pow_values() {
    assert_eq!(int_pow(1.1, 52.0), 142);
    assert_eq!(int_pow(1.1, 3.0), 1);
    assert_eq!(int_pow(1.1, -3.0), 0);
    assert_eq!(int_pow(1.1, 107.0), 26854);
    // Frozen from the high-precision chain oracle.
    assert_eq!(int_pow(1.1, 53.0), 156);
    assert_eq!(int_pow(1.1, 68.0), 652);
}

#[test]
fn domain_errors() {
    let mut b = ReferenceBackend::new();
    for (x, y) in [(0.0, 1.0), (-1.0, 2.0), (f64::NAN, 1.0), (1.1, f64::NAN), (1.1, f64::INFINITY)] {
        let out = int_pow_trunc(x, y, &mut b, CORE);
        assert_eq!(out.status, Status::DomainError, "({x}, {y})");
        assert!(out.trace.is_empty());
        assert_eq!(out.value, KernelValue::Undefined);
    }
    assert_eq!(b.ops_executed(), 0);
    assert_eq!(square_lut(256, &mut b, CORE).status, Status::DomainError);
    assert_eq!(square_lut(-1, &mut b, CORE).status, Status::DomainError);
    assert_eq!(roundtrip_check(&[], &mut b, CORE).status, Status::DomainError);
}

#[test]
fn lut_values() {
    let mut b = ReferenceBackend::new();
    for (x, sq) in [(0, 0), (12, 144), (255, 65025)] {
        assert_eq!(square_lut(x, &mut b, CORE).value, KernelValue::Int(sq));
    }
    for x in 0..=255i64 {
        assert_eq!(square_lut(x, &mut b, CORE).value.as_int(), Some(i128::from(x * x)));
    }
}

#[test]
fn decompress_values() {
    let mut b = ReferenceBackend::new();
    let size = |base, level, b: &mut ReferenceBackend| {
        decompress_size(DecompressHeader { base, level }, b, CORE).value.as_int().unwrap()
    };
    assert_eq!(size(1.1, 52.0, &mut b), 142);
    assert_eq!(size(2.0, 0.0, &mut b), 1);
    assert_eq!(size(1.1, 53.0, &mut b), 156);
}

#[test]
fn roundtrip_passes_and_detects_checksum_corruption() {
    let mut b = ReferenceBackend::new();
    assert_eq!(roundtrip_check(&[9u8; 64], &mut b, CORE).value, KernelValue::Pass(true));

    let mut rng = SplitMix64::new(42);
    for _ in 0..1000 {
        let len = 1 + rng.next_below(300) as usize;
        let payload: Vec<u8> = (0..len).map(|_| (rng.next_u64() % 5) as u8).collect();
        assert_eq!(roundtrip_check(&payload, &mut b, CORE).value, KernelValue::Pass(true));
    }

    let mut faulty = ChecksumFlipper { inner: ReferenceBackend::new(), seen: 0 };
    let out = roundtrip_check(b"aaabbbcccd", &mut faulty, CORE);
    assert_eq!(out.value, KernelValue::Pass(false));
    assert_eq!(out.status, Status::Ok);
}

#[test]
fn trace_order_and_sequence_numbers() {
    let mut b = ReferenceBackend::new();
    let out = int_pow_trunc(1.1, 53.0, &mut b, CORE);
    let kinds: Vec<_> = out.trace.iter().map(|s| s.op.kind).collect();
    assert_eq!(kinds, [OpKind::Log2, OpKind::Mul, OpKind::Exp2, OpKind::TruncToInt]);
    assert_eq!(out.trace[1].op.operands.as_slice(), &[53.0, out.trace[0].result]);
    let again = int_pow_trunc(1.1, 53.0, &mut b, CORE);
    let seqs: Vec<_> = out.trace.iter().chain(&again.trace).map(|s| s.op.seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn vector_kernels_and_op_counts() {
    let v = TestVector::new(1.1, 53.0);
    for kind in KernelKind::ALL {
        let k = TestKernel::from(kind);
        let mut b = ReferenceBackend::new();
        let out = k.evaluate(&v, &mut b, CORE);
        assert!(out.is_ok(), "{kind}");
        assert_eq!(out.trace.len() as u64, k.op_count(), "{kind}");
        assert_eq!(b.ops_executed(), k.op_count());
    }
    let lut = TestKernel::from(KernelKind::SquareLut);
    let out = lut.evaluate(&TestVector::new(12.0, 0.0), &mut ReferenceBackend::new(), CORE);
    assert_eq!(out.value, KernelValue::Int(144));
}

#[test]
fn vector_serde_checks_id() {
    let v = TestVector::with_payload(1.1, 53.0, Some(vec![1, 2, 255]));
    let json = serde_json::to_string(&v).unwrap();
    assert_eq!(serde_json::from_str::<TestVector>(&json).unwrap(), v);
    let no_id: TestVector = serde_json::from_str(r#"{"base":1.1,"exponent":53.0}"#).unwrap();
    assert_eq!(no_id, TestVector::new(1.1, 53.0));
    assert!(serde_json::from_str::<TestVector>(r#"{"base":1.1,"exponent":53.0,"id":5}"#).is_err());
}

#[test]
fn kernel_value_serde() {
    for v in [
        KernelValue::Float(f64::NAN),
        KernelValue::Float(-0.0),
        KernelValue::Int(i128::MAX),
        KernelValue::Pass(false),
        KernelValue::Undefined,
    ] {
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<KernelValue>(&s).unwrap(), v, "{s}");
    }
    assert_eq!(serde_json::to_string(&KernelValue::Int(156)).unwrap(), r#"{"int":"156"}"#);
}

fn domain_vector() -> impl Strategy<Value = (f64, f64)> {
    (1.0f64..2.0, -128i32..=128).prop_map(|(x, y)| (x, f64::from(y)))
}

proptest! {
    #[test]
    fn kernels_are_deterministic((x, y) in domain_vector(), kind in 0usize..5) {
        let k = TestKernel::from(KernelKind::ALL[kind]);
        let v = TestVector::new(x, y);
        let a = k.evaluate(&v, &mut ReferenceBackend::new(), CORE);
        let mut other = ReferenceBackend::new();
        other.execute(OpKind::Add, &[1.0, 2.0], CORE);
        let b = k.evaluate(&v, &mut other, CORE);
        prop_assert_eq!(a.value, b.value);
        let ra: Vec<_> = a.trace.iter().map(|s| s.result.to_bits()).collect();
        let rb: Vec<_> = b.trace.iter().map(|s| s.result.to_bits()).collect();
        prop_assert_eq!(ra, rb);
    }

    #[test]
    fn trace_replay_reproduces_value((x, y) in domain_vector(), kind in 0usize..5) {
        let k = TestKernel::from(KernelKind::ALL[kind]);
        let out = k.evaluate(&TestVector::new(x, y), &mut ReferenceBackend::new(), CORE);
        let replayed = replay(&out.trace, &mut ReferenceBackend::new());
        let mut rebuilt = out.trace.clone();
        for (step, r) in rebuilt.iter_mut().zip(&replayed) {
            prop_assert_eq!(step.result.to_bits(), r.to_bits());
            step.result = *r;
        }
        prop_assert_eq!(value_from_trace(out.kind, &rebuilt), out.value);
    }

    #[test]
    fn power_identities(x in 1e-300f64..1e300, y in -1e6f64..1e6, n in 1i32..=400) {
        let mut b = ReferenceBackend::new();
        prop_assert_eq!(pow_via_log2(x, 0.0, &mut b, CORE).value, KernelValue::Float(1.0));
        prop_assert_eq!(pow_via_log2(1.0, y, &mut b, CORE).value, KernelValue::Float(1.0));
        let neg = pow_via_log2(1.1, -f64::from(n), &mut b, CORE).value.as_float().unwrap();
        prop_assert!(neg > 0.0 && neg < 1.0);
        prop_assert_eq!(int_pow(1.1, -f64::from(n)), 0);
    }
}
