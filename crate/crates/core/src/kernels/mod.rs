//! Computation test kernels and the primitive arithmetic backend they run on.
//!
//! Every kernel is a fixed sequence of primitive operations, each executed by
//! an [`ArithmeticBackend`] so that a faulty backend can corrupt individual
//! steps. The result of each step, as returned by the backend, feeds the next
//! step. Intermediate results are binary64.
//!
//! | Kernel            | Primitive sequence (operands)                                         | Value                              |
//! |-------------------|-----------------------------------------------------------------------|------------------------------------|
//! | `INT_POW`         | `LOG2(x)`, `MUL(y, l)`, `EXP2(p)`, `TRUNC_TO_INT(v)`                  | integer, truncated toward zero     |
//! | `POW_CHAIN`       | `LOG2(x)`, `MUL(y, l)`, `EXP2(p)`                                     | binary64 `v`                       |
//! | `SQUARE_LUT`      | `LUT_SQUARE(i)`                                                       | integer `table[i]`                 |
//! | `DECOMPRESS_SIZE` | same as `INT_POW` on `(base, level)`                                  | integer size                       |
//! | `ROUNDTRIP`       | `CHECKSUM(input bytes...)`, `CHECKSUM(decoded bytes...)`              | pass iff the two digests are equal |
//!
//! Integer results are the `TRUNC_TO_INT` result converted to `i128`,
//! saturating at the `i128` bounds (NaN converts to 0).
//!
//! When a kernel is driven by a [`TestVector`]:
//! * `INT_POW`, `POW_CHAIN` use `(base, exponent)`;
//! * `DECOMPRESS_SIZE` reads the header as `(base, level = exponent)`;
//! * `SQUARE_LUT` uses `base` when it is an integer in `0..=255`, otherwise `id % 256`;
//! * `ROUNDTRIP` uses `payload`, or when absent a payload derived from `id`
//!   (SplitMix64 seeded with `id`, each byte `next % 4`).

mod backend;
pub mod codec;
mod stream;

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub use backend::{
    reference_primitive, ArithmeticBackend, CoreId, HostId, OpKind, Operands, PrimOp,
    ReferenceBackend, TraceStep,
};
pub use stream::{gen_operand_stream, OperandDomain, SplitMix64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid test vector: {0}")]
    InvalidVector(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KernelKind {
    IntPow,
    PowChain,
    SquareLut,
    DecompressSize,
    Roundtrip,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::IntPow,
        KernelKind::PowChain,
        KernelKind::SquareLut,
        KernelKind::DecompressSize,
        KernelKind::Roundtrip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::IntPow => "INT_POW",
            KernelKind::PowChain => "POW_CHAIN",
            KernelKind::SquareLut => "SQUARE_LUT",
            KernelKind::DecompressSize => "DECOMPRESS_SIZE",
            KernelKind::Roundtrip => "ROUNDTRIP",
        }
    }

    pub fn parse(s: &str) -> Option<KernelKind> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "_");
        KernelKind::ALL.into_iter().find(|k| k.name() == upper)
    }

    /// Whether the kernel's value is a binary64 (as opposed to an integer or flag).
    pub fn is_float_valued(self) -> bool {
        matches!(self, KernelKind::PowChain)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Length of the payload derived for `ROUNDTRIP` when a vector has none.
    pub roundtrip_payload_len: usize,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            roundtrip_payload_len: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestKernel {
    pub kind: KernelKind,
    #[serde(default)]
    pub params: KernelParams,
}

impl From<KernelKind> for TestKernel {
    fn from(kind: KernelKind) -> Self {
        Self {
            kind,
            params: KernelParams::default(),
        }
    }
}

/// Operands of one computation test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct TestVector {
    pub base: f64,
    pub exponent: f64,
    pub payload: Option<Vec<u8>>,
    pub id: u64,
}

impl TestVector {
    pub fn new(base: f64, exponent: f64) -> Self {
        Self::with_payload(base, exponent, None)
    }

    pub fn with_payload(base: f64, exponent: f64, payload: Option<Vec<u8>>) -> Self {
        let id = Self::compute_id(base, exponent, payload.as_deref());
        Self {
            base,
            exponent,
            payload,
            id,
        }
    }

    /// FNV-1a over the little-endian bits of base and exponent, a presence
    /// byte, and the payload bytes.
    pub fn compute_id(base: f64, exponent: f64, payload: Option<&[u8]>) -> u64 {
        let mut h = codec::fnv1a64(&base.to_bits().to_le_bytes());
        h = codec::fnv1a64_extend(h, &exponent.to_bits().to_le_bytes());
        match payload {
            None => codec::fnv1a64_extend(h, &[0]),
            Some(p) => codec::fnv1a64_extend(codec::fnv1a64_extend(h, &[1]), p),
        }
    }

    fn lut_index(&self) -> i64 {
        if (0.0..=255.0).contains(&self.base) && self.base.fract() == 0.0 {
            self.base as i64
        } else {
            (self.id % 256) as i64
        }
    }

    fn roundtrip_payload(&self, len: usize) -> Vec<u8> {
        match &self.payload {
            Some(p) => p.clone(),
            None => {
                let mut rng = SplitMix64::new(self.id);
                (0..len).map(|_| (rng.next_u64() % 4) as u8).collect()
            }
        }
    }
}

impl fmt::Display for TestVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.base, self.exponent)?;
        if let Some(p) = &self.payload {
            write!(f, "+{}B", p.len())?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    base: f64,
    exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
}

impl TryFrom<RawVector> for TestVector {
    type Error = KernelError;

    fn try_from(raw: RawVector) -> Result<Self, Self::Error> {
        let payload = raw
            .payload
            .map(|h| hex::decode(h).map_err(|e| KernelError::InvalidVector(e.to_string())))
            .transpose()?;
        let v = TestVector::with_payload(raw.base, raw.exponent, payload);
        match raw.id {
            Some(id) if id != v.id => Err(KernelError::InvalidVector(format!(
                "id {id:#x} does not match contents (expected {:#x})",
                v.id
            ))),
            _ => Ok(v),
        }
    }
}

impl From<TestVector> for RawVector {
    fn from(v: TestVector) -> Self {
        RawVector {
            base: v.base,
            exponent: v.exponent,
            payload: v.payload.map(hex::encode),
            id: Some(v.id),
        }
    }
}

/// Header of a compressed file; the decompressed size is `Int(base^level)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompressHeader {
    pub base: f64,
    pub level: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Ok,
    DomainError,
}

/// Result value of a kernel.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(try_from = "ValueRepr", into = "ValueRepr")]
pub enum KernelValue {
    Float(f64),
    Int(i128),
    Pass(bool),
    Undefined,
}

impl KernelValue {
    pub fn as_int(&self) -> Option<i128> {
        match self {
            KernelValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            KernelValue::Float(v) => Some(*v),
            _ => None,
        }
    }

    /// Exact identity key; floats compare by bit pattern.
    pub fn key(&self) -> ValueKey {
        match *self {
            KernelValue::Float(v) => ValueKey::Float(v.to_bits()),
            KernelValue::Int(v) => ValueKey::Int(v),
            KernelValue::Pass(v) => ValueKey::Pass(v),
            KernelValue::Undefined => ValueKey::Undefined,
        }
    }
}

/// Bit-exact equality.
impl PartialEq for KernelValue {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for KernelValue {}

impl fmt::Display for KernelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelValue::Float(v) => write!(f, "{v:?}"),
            KernelValue::Int(v) => write!(f, "{v}"),
            KernelValue::Pass(true) => f.write_str("pass"),
            KernelValue::Pass(false) => f.write_str("fail"),
            KernelValue::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKey {
    Float(u64),
    Int(i128),
    Pass(bool),
    Undefined,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ValueRepr {
    /// Bits of the binary64 as `0x` + 16 hex digits.
    Float(String),
    /// Decimal integer.
    Int(String),
    Pass(bool),
    Undefined,
}

impl From<KernelValue> for ValueRepr {
    fn from(v: KernelValue) -> Self {
        match v {
            KernelValue::Float(x) => ValueRepr::Float(format!("{:#018x}", x.to_bits())),
            KernelValue::Int(x) => ValueRepr::Int(x.to_string()),
            KernelValue::Pass(p) => ValueRepr::Pass(p),
            KernelValue::Undefined => ValueRepr::Undefined,
        }
    }
}

impl TryFrom<ValueRepr> for KernelValue {
    type Error = String;

    fn try_from(r: ValueRepr) -> Result<Self, Self::Error> {
        Ok(match r {
            ValueRepr::Float(s) => {
                let digits = s
                    .strip_prefix("0x")
                    .ok_or_else(|| format!("float bits must start with 0x: {s}"))?;
                KernelValue::Float(f64::from_bits(
                    u64::from_str_radix(digits, 16).map_err(|e| e.to_string())?,
                ))
            }
            ValueRepr::Int(s) => KernelValue::Int(s.parse().map_err(|e| format!("{e}: {s}"))?),
            ValueRepr::Pass(p) => KernelValue::Pass(p),
            ValueRepr::Undefined => KernelValue::Undefined,
        })
    }
}

pub type Trace = SmallVec<[TraceStep; 4]>;

/// Value, status and the ordered primitive trace of one kernel evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelOutput {
    pub kind: KernelKind,
    pub value: KernelValue,
    pub trace: Trace,
    pub status: Status,
}

impl KernelOutput {
    fn domain_error(kind: KernelKind) -> Self {
        Self {
            kind,
            value: KernelValue::Undefined,
            trace: Trace::new(),
            status: Status::DomainError,
        }
    }

    fn from_trace(kind: KernelKind, trace: Trace) -> Self {
        let value = value_from_trace(kind, &trace);
        Self {
            kind,
            value,
            trace,
            status: Status::Ok,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

fn saturating_int(v: f64) -> i128 {
    v as i128
}

/// Derives a kernel's value from the results recorded in its trace.
pub fn value_from_trace(kind: KernelKind, trace: &[TraceStep]) -> KernelValue {
    let last = match trace.last() {
        Some(s) => s.result,
        None => return KernelValue::Undefined,
    };
    match kind {
        KernelKind::IntPow | KernelKind::DecompressSize | KernelKind::SquareLut => {
            KernelValue::Int(saturating_int(last))
        }
        KernelKind::PowChain => KernelValue::Float(last),
        KernelKind::Roundtrip => match trace {
            [a, b] => KernelValue::Pass(a.result.to_bits() == b.result.to_bits()),
            _ => KernelValue::Undefined,
        },
    }
}

/// Re-executes every recorded op through `backend` and returns the new results.
pub fn replay<B: ArithmeticBackend + ?Sized>(trace: &[TraceStep], backend: &mut B) -> Vec<f64> {
    trace
        .iter()
        .map(|s| backend.execute(s.op.kind, &s.op.operands, s.op.core).result)
        .collect()
}

fn power_domain_ok(x: f64, y: f64) -> bool {
    x.is_finite() && x > 0.0 && y.is_finite()
}

fn pow_chain<B: ArithmeticBackend + ?Sized>(x: f64, y: f64, backend: &mut B, core: CoreId) -> Trace {
    let mut trace = Trace::new();
    let log = backend.execute(OpKind::Log2, &[x], core);
    let prod = backend.execute(OpKind::Mul, &[y, log.result], core);
    let pow = backend.execute(OpKind::Exp2, &[prod.result], core);
    trace.push(log);
    trace.push(prod);
    trace.push(pow);
    trace
}

/// `x^y` evaluated as `EXP2(MUL(y, LOG2(x)))`.
pub fn pow_via_log2<B: ArithmeticBackend + ?Sized>(
    x: f64,
    y: f64,
    backend: &mut B,
    core: CoreId,
) -> KernelOutput {
    if !power_domain_ok(x, y) {
        return KernelOutput::domain_error(KernelKind::PowChain);
    }
    KernelOutput::from_trace(KernelKind::PowChain, pow_chain(x, y, backend, core))
}

/// `Int(x^y)`: the power chain followed by truncation toward zero.
pub fn int_pow_trunc<B: ArithmeticBackend + ?Sized>(
    x: f64,
    y: f64,
    backend: &mut B,
    core: CoreId,
) -> KernelOutput {
    int_pow_as(KernelKind::IntPow, x, y, backend, core)
}

fn int_pow_as<B: ArithmeticBackend + ?Sized>(
    kind: KernelKind,
    x: f64,
    y: f64,
    backend: &mut B,
    core: CoreId,
) -> KernelOutput {
    if !power_domain_ok(x, y) {
        return KernelOutput::domain_error(kind);
    }
    let mut trace = pow_chain(x, y, backend, core);
    let v = trace[2].result;
    trace.push(backend.execute(OpKind::TruncToInt, &[v], core));
    KernelOutput::from_trace(kind, trace)
}

/// Table lookup of `x*x` for `x` in `0..=255`.
pub fn square_lut<B: ArithmeticBackend + ?Sized>(
    x: i64,
    backend: &mut B,
    core: CoreId,
) -> KernelOutput {
    if !(0..=255).contains(&x) {
        return KernelOutput::domain_error(KernelKind::SquareLut);
    }
    let mut trace = Trace::new();
    trace.push(backend.execute(OpKind::LutSquare, &[x as f64], core));
    KernelOutput::from_trace(KernelKind::SquareLut, trace)
}

/// Decompressed size computed from a header; a size of 0 means "nothing to write".
pub fn decompress_size<B: ArithmeticBackend + ?Sized>(
    header: DecompressHeader,
    backend: &mut B,
    core: CoreId,
) -> KernelOutput {
    int_pow_as(KernelKind::DecompressSize, header.base, header.level, backend, core)
}

/// Compress, decompress and compare checksums of input and output.
pub fn roundtrip_check<B: ArithmeticBackend + ?Sized>(
    payload: &[u8],
    backend: &mut B,
    core: CoreId,
) -> KernelOutput {
    if payload.is_empty() {
        return KernelOutput::domain_error(KernelKind::Roundtrip);
    }
    let encoded = codec::rle_encode(payload);
    let decoded = codec::rle_decode(&encoded).expect("encoder output is well-formed");
    let as_operands = |bytes: &[u8]| bytes.iter().map(|&b| f64::from(b)).collect::<Vec<_>>();
    let mut trace = Trace::new();
    trace.push(backend.execute(OpKind::Checksum, &as_operands(payload), core));
    trace.push(backend.execute(OpKind::Checksum, &as_operands(&decoded), core));
    KernelOutput::from_trace(KernelKind::Roundtrip, trace)
}

impl TestKernel {
    pub fn evaluate<B: ArithmeticBackend + ?Sized>(
        &self,
        vector: &TestVector,
        backend: &mut B,
        core: CoreId,
    ) -> KernelOutput {
        match self.kind {
            KernelKind::IntPow => int_pow_trunc(vector.base, vector.exponent, backend, core),
            KernelKind::PowChain => pow_via_log2(vector.base, vector.exponent, backend, core),
            KernelKind::SquareLut => square_lut(vector.lut_index(), backend, core),
            KernelKind::DecompressSize => decompress_size(
                DecompressHeader {
                    base: vector.base,
                    level: vector.exponent,
                },
                backend,
                core,
            ),
            KernelKind::Roundtrip => roundtrip_check(
                &vector.roundtrip_payload(self.params.roundtrip_payload_len),
                backend,
                core,
            ),
        }
    }

    /// Primitive ops one evaluation executes (upper bound; domain errors execute none).
    pub fn op_count(&self) -> u64 {
        match self.kind {
            KernelKind::IntPow | KernelKind::DecompressSize => 4,
            KernelKind::PowChain => 3,
            KernelKind::SquareLut => 1,
            KernelKind::Roundtrip => 2,
        }
    }
}

#[cfg(test)]
mod tests;
