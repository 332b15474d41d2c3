use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::codec::{fnv1a64_extend, fnv1a64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub u32);

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "host-{}", self.0)
    }
}

/// A physical core: host plus core index on that host.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoreId {
    pub host: HostId,
    pub core: u32,
}

impl CoreId {
    pub fn new(host: u32, core: u32) -> Self {
        Self { host: HostId(host), core }
    }
}

impl fmt::Display for CoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/core-{}", self.host, self.core)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OpKind {
    Log2,
    Exp2,
    Mul,
    Add,
    TruncToInt,
    LutSquare,
    Checksum,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [
        OpKind::Log2,
        OpKind::Exp2,
        OpKind::Mul,
        OpKind::Add,
        OpKind::TruncToInt,
        OpKind::LutSquare,
        OpKind::Checksum,
    ];

    /// Fixed operand count, or `None` for variadic ops.
    pub fn arity(self) -> Option<usize> {
        match self {
            OpKind::Log2 | OpKind::Exp2 | OpKind::TruncToInt | OpKind::LutSquare => Some(1),
            OpKind::Mul | OpKind::Add => Some(2),
            OpKind::Checksum => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Log2 => "LOG2",
            OpKind::Exp2 => "EXP2",
            OpKind::Mul => "MUL",
            OpKind::Add => "ADD",
            OpKind::TruncToInt => "TRUNC_TO_INT",
            OpKind::LutSquare => "LUT_SQUARE",
            OpKind::Checksum => "CHECKSUM",
        }
    }

    pub fn parse(s: &str) -> Option<OpKind> {
        let upper = s.trim().to_ascii_uppercase();
        OpKind::ALL.into_iter().find(|k| k.name() == upper)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Operands = SmallVec<[f64; 2]>;

/// One primitive operation as seen by a backend.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimOp {
    pub kind: OpKind,
    pub operands: Operands,
    pub core: CoreId,
    pub seq: u64,
}

/// A primitive op together with the value the backend produced for it.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub op: PrimOp,
    pub result: f64,
}

/// Interception point for every primitive step a kernel performs.
///
/// An instance is confined to one thread at a time; its sequence counter is
/// not synchronized.
pub trait ArithmeticBackend {
    fn execute(&mut self, kind: OpKind, operands: &[f64], core: CoreId) -> TraceStep;

    /// Simulated time in hours, consulted by time-dependent fault onset.
    fn clock_hours(&self) -> f64 {
        0.0
    }

    fn set_clock_hours(&mut self, _hours: f64) {}
}

impl<B: ArithmeticBackend + ?Sized> ArithmeticBackend for &mut B {
    fn execute(&mut self, kind: OpKind, operands: &[f64], core: CoreId) -> TraceStep {
        (**self).execute(kind, operands, core)
    }
    fn clock_hours(&self) -> f64 {
        (**self).clock_hours()
    }
    fn set_clock_hours(&mut self, hours: f64) {
        (**self).set_clock_hours(hours)
    }
}

impl<B: ArithmeticBackend + ?Sized> ArithmeticBackend for Box<B> {
    fn execute(&mut self, kind: OpKind, operands: &[f64], core: CoreId) -> TraceStep {
        (**self).execute(kind, operands, core)
    }
    fn clock_hours(&self) -> f64 {
        (**self).clock_hours()
    }
    fn set_clock_hours(&mut self, hours: f64) {
        (**self).set_clock_hours(hours)
    }
}

/// Squares of `0..=255`.
pub(crate) static SQUARE_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        table[i] = (i * i) as u32;
        i += 1;
    }
    table
};

/// Pristine semantics of one primitive.
///
/// LOG2 and EXP2 are correctly rounded to binary64. LUT_SQUARE returns NaN for
/// an index outside the table. CHECKSUM hashes each operand as a byte and
/// returns the 64-bit FNV-1a digest reinterpreted as binary64 bits.
pub fn reference_primitive(kind: OpKind, operands: &[f64]) -> f64 {
    match kind {
        OpKind::Log2 => pxfm::f_log2(operands[0]),
        OpKind::Exp2 => pxfm::f_exp2(operands[0]),
        OpKind::Mul => operands[0] * operands[1],
        OpKind::Add => operands[0] + operands[1],
        OpKind::TruncToInt => operands[0].trunc(),
        OpKind::LutSquare => {
            let x = operands[0];
            if (0.0..=255.0).contains(&x) && x.fract() == 0.0 {
                f64::from(SQUARE_TABLE[x as usize])
            } else {
                f64::NAN
            }
        }
        OpKind::Checksum => {
            let digest = operands
                .iter()
                .fold(fnv1a64(&[]), |h, &b| fnv1a64_extend(h, &[b as u8]));
            f64::from_bits(digest)
        }
    }
}

/// The fault-free backend. Every result is [`reference_primitive`].
#[derive(Debug, Default, Clone)]
pub struct ReferenceBackend {
    seq: u64,
}

impl ReferenceBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of ops executed in this session.
    pub fn ops_executed(&self) -> u64 {
        self.seq
    }
}

impl ArithmeticBackend for ReferenceBackend {
    fn execute(&mut self, kind: OpKind, operands: &[f64], core: CoreId) -> TraceStep {
        if let Some(n) = kind.arity() {
            debug_assert_eq!(operands.len(), n, "{kind} arity");
        }
        let result = reference_primitive(kind, operands);
        let seq = self.seq;
        self.seq += 1;
        TraceStep {
            op: PrimOp {
                kind,
                operands: SmallVec::from_slice(operands),
                core,
                seq,
            },
            result,
        }
    }
}
