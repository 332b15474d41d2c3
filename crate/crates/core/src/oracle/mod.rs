//! Golden references and the comparison policy.
//!
//! Two independent references exist: [`reference_eval`] runs a kernel on a
//! pristine [`ReferenceBackend`], and [`highprec_chain_eval`] recomputes the
//! power chain in big-integer fixed point. Detection uses the former; the
//! latter exists to catch defects in shared kernel code.

mod highprec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{
    CoreId, KernelKind, KernelOutput, KernelValue, ReferenceBackend, Status, TestKernel,
    TestVector,
};

pub use highprec::{
    chain_steps, exp2_step, highprec_chain_eval, log2_step, mul_step, trunc_saturating,
    OracleError, FRAC_BITS,
};

/// Core id used for reference evaluations; never in scope of any fault.
pub const REFERENCE_CORE: CoreId = CoreId {
    host: crate::kernels::HostId(u32::MAX),
    core: u32::MAX,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CompareMode {
    /// Binary64 bit patterns must be identical.
    BitExact,
    /// Integer (or pass/fail) values must be equal.
    IntegerExact,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("cannot compare {observed} output against {expected} output")]
    KindMismatch {
        observed: KernelKind,
        expected: KernelKind,
    },
    #[error("{kind} requires {required:?} comparison, policy says {configured:?}")]
    PolicyMismatch {
        kind: KernelKind,
        required: CompareMode,
        configured: CompareMode,
    },
}

/// Which comparison mode applies to each kernel kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPolicy {
    modes: BTreeMap<KernelKind, CompareMode>,
}

impl Default for ComparisonPolicy {
    fn default() -> Self {
        Self::standard()
    }
}

impl ComparisonPolicy {
    /// The mode a kernel kind's value type demands.
    pub fn required_mode(kind: KernelKind) -> CompareMode {
        if kind.is_float_valued() {
            CompareMode::BitExact
        } else {
            CompareMode::IntegerExact
        }
    }

    /// `POW_CHAIN` bit-exact, every integer-valued kernel integer-exact.
    pub fn standard() -> Self {
        Self {
            modes: KernelKind::ALL
                .into_iter()
                .map(|k| (k, Self::required_mode(k)))
                .collect(),
        }
    }

    pub fn with_mode(mut self, kind: KernelKind, mode: CompareMode) -> Self {
        self.modes.insert(kind, mode);
        self
    }

    pub fn mode_for(&self, kind: KernelKind) -> CompareMode {
        self.modes
            .get(&kind)
            .copied()
            .unwrap_or_else(|| Self::required_mode(kind))
    }

    /// Human-readable listing of the kind to mode table.
    pub fn description(&self) -> String {
        KernelKind::ALL
            .iter()
            .map(|k| format!("{k}={:?}", self.mode_for(*k)))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn validate(&self) -> Result<(), CompareError> {
        for kind in KernelKind::ALL {
            let required = Self::required_mode(kind);
            let configured = self.mode_for(kind);
            if required != configured {
                return Err(CompareError::PolicyMismatch {
                    kind,
                    required,
                    configured,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Match,
    Mismatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub kernel: KernelKind,
    pub observed: KernelValue,
    pub expected: KernelValue,
    pub vector: TestVector,
    pub core: CoreId,
}

impl Verdict {
    pub fn is_mismatch(&self) -> bool {
        self.outcome == Outcome::Mismatch
    }
}

/// The expected output of `kernel` on `vector`: evaluation on a fresh
/// reference backend.
pub fn reference_eval(kernel: &TestKernel, vector: &TestVector) -> KernelOutput {
    kernel.evaluate(vector, &mut ReferenceBackend::new(), REFERENCE_CORE)
}

/// Compares an observed output to the expected one. NaN never matches a
/// non-NaN value; status differences are mismatches.
pub fn compare(
    observed: &KernelOutput,
    expected: &KernelOutput,
    policy: &ComparisonPolicy,
) -> Result<Outcome, CompareError> {
    compare_parts(
        (observed.kind, observed.status, observed.value),
        (expected.kind, expected.status, expected.value),
        policy,
    )
}

/// [`compare`] on `(kind, status, value)` triples, for callers that keep
/// expected results without their traces.
pub fn compare_parts(
    observed: (KernelKind, Status, KernelValue),
    expected: (KernelKind, Status, KernelValue),
    policy: &ComparisonPolicy,
) -> Result<Outcome, CompareError> {
    let (kind, observed_status, observed_value) = observed;
    let (expected_kind, expected_status, expected_value) = expected;
    if kind != expected_kind {
        return Err(CompareError::KindMismatch {
            observed: kind,
            expected: expected_kind,
        });
    }
    let configured = policy.mode_for(kind);
    let required = ComparisonPolicy::required_mode(kind);
    if configured != required {
        return Err(CompareError::PolicyMismatch {
            kind,
            required,
            configured,
        });
    }
    if observed_status != expected_status {
        return Ok(Outcome::Mismatch);
    }
    if observed_status == Status::DomainError {
        return Ok(Outcome::Match);
    }
    let equal = match (configured, observed_value, expected_value) {
        (CompareMode::BitExact, KernelValue::Float(a), KernelValue::Float(b)) => {
            a.to_bits() == b.to_bits()
        }
        (CompareMode::IntegerExact, KernelValue::Int(a), KernelValue::Int(b)) => a == b,
        (CompareMode::IntegerExact, KernelValue::Pass(a), KernelValue::Pass(b)) => a == b,
        _ => false,
    };
    Ok(if equal {
        Outcome::Match
    } else {
        Outcome::Mismatch
    })
}

/// Builds a [`Verdict`] for an evaluation on `core`.
pub fn verdict(
    observed: &KernelOutput,
    expected: &KernelOutput,
    policy: &ComparisonPolicy,
    vector: &TestVector,
    core: CoreId,
) -> Result<Verdict, CompareError> {
    let outcome = compare(observed, expected, policy)?;
    Ok(Verdict {
        outcome,
        kernel: observed.kind,
        observed: observed.value,
        expected: expected.value,
        vector: vector.clone(),
        core,
    })
}
