//! Deterministic faulty arithmetic backends built from declarative fault specs.
//!
//! A [`FaultyBackend`] delegates every primitive to a wrapped backend, then
//! applies the transform of each spec that is in scope for the op's core,
//! onset-active at the backend's clock, and triggered by the op. Specs apply
//! in declaration order. Corruption is silent: no error, no log record, no
//! status change.

mod spec_file;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::codec::fnv1a64;
use crate::kernels::{ArithmeticBackend, CoreId, OpKind, PrimOp, SplitMix64, TraceStep};

pub use spec_file::{bundled_spec, load_fault_specs, BUNDLED_SPECS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("spec `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("conflicting definitions for spec id `{0}`")]
    DuplicateId(String),
    #[error("bit index {0} out of range for {1}")]
    BitIndex(u32, &'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DefectClass {
    DeviceError,
    EarlyLife,
    Degradation,
    Wearout,
}

/// When a spec is active, as a function of simulated hours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OnsetSchedule {
    /// Active from t = 0.
    DeviceError,
    /// Inactive before `activation_hours`, active from then on.
    EarlyLife { activation_hours: f64 },
    /// Active with probability `min(1, t / ramp_hours)`, sampled once per
    /// whole simulated hour from a generator keyed by the spec id.
    Degradation { ramp_hours: f64 },
    /// Active strictly after `rated_life_hours`.
    Wearout { rated_life_hours: f64 },
}

impl OnsetSchedule {
    pub fn class(&self) -> DefectClass {
        match self {
            OnsetSchedule::DeviceError => DefectClass::DeviceError,
            OnsetSchedule::EarlyLife { .. } => DefectClass::EarlyLife,
            OnsetSchedule::Degradation { .. } => DefectClass::Degradation,
            OnsetSchedule::Wearout { .. } => DefectClass::Wearout,
        }
    }

    /// Earliest time the spec can be active.
    pub fn earliest_onset_hours(&self) -> f64 {
        match *self {
            OnsetSchedule::DeviceError | OnsetSchedule::Degradation { .. } => 0.0,
            OnsetSchedule::EarlyLife { activation_hours } => activation_hours,
            OnsetSchedule::Wearout { rated_life_hours } => rated_life_hours,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreSelector {
    Any,
    Index(u32),
}

/// Which cores a spec lives on: a host-name glob (`*` matches any run of
/// characters) and a core index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scope {
    pub host_pattern: String,
    pub core: CoreSelector,
}

impl Scope {
    pub fn core(index: u32) -> Self {
        Self {
            host_pattern: "*".into(),
            core: CoreSelector::Index(index),
        }
    }

    pub fn matches(&self, core: CoreId) -> bool {
        let core_ok = match self.core {
            CoreSelector::Any => true,
            CoreSelector::Index(i) => i == core.core,
        };
        core_ok && glob_match(&self.host_pattern, &core.host.to_string())
    }
}

fn glob_match(pattern: &str, text: &str) -> bool {
    if pattern == "*" {
        return true;
    }
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !text.starts_with(first) || text.len() < first.len() + last.len() || !text.ends_with(last) {
        return false;
    }
    let mut rest = &text[first.len()..text.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(pos) => rest = &rest[pos + mid.len()..],
            None => return false,
        }
    }
    true
}

/// Match on one operand position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandMatcher {
    /// Bit pattern of the binary64 must be identical.
    Exact(u64),
    /// Inclusive numeric interval.
    Interval { lo: f64, hi: f64 },
    Any,
}

impl OperandMatcher {
    pub fn exact(v: f64) -> Self {
        OperandMatcher::Exact(v.to_bits())
    }

    pub fn matches(&self, v: f64) -> bool {
        match *self {
            OperandMatcher::Exact(bits) => v.to_bits() == bits,
            OperandMatcher::Interval { lo, hi } => lo <= v && v <= hi,
            OperandMatcher::Any => true,
        }
    }
}

/// Fires on ops of `op_kind` whose operands match any one of `alternatives`
/// (each alternative has one matcher per operand position). An empty
/// alternative list fires on every op of the kind and must be marked `broad`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub op_kind: OpKind,
    pub alternatives: Vec<Vec<OperandMatcher>>,
    #[serde(default)]
    pub broad: bool,
}

impl Trigger {
    pub fn matches(&self, op: &PrimOp) -> bool {
        if op.kind != self.op_kind {
            return false;
        }
        if self.alternatives.is_empty() {
            return self.broad;
        }
        self.alternatives.iter().any(|alt| {
            alt.len() == op.operands.len()
                && alt.iter().zip(&op.operands).all(|(m, &v)| m.matches(v))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CorruptionTransform {
    /// Flip bit `bit` (0 = least significant, 63 = sign) of the result.
    Bitflip { bit: u32 },
    SetConstant { value: f64 },
    /// Flip bit `bit` (0..=10) of the 11-bit exponent field.
    ExponentFlip { bit: u32 },
    /// Replace the LUT_SQUARE result for table index `index` with `value`.
    LutEntryOverride { index: u32, value: f64 },
}

impl CorruptionTransform {
    pub fn validate(&self) -> Result<(), FaultError> {
        match *self {
            CorruptionTransform::Bitflip { bit } if bit > 63 => {
                Err(FaultError::BitIndex(bit, "BITFLIP (0..=63)"))
            }
            CorruptionTransform::ExponentFlip { bit } if bit > 10 => {
                Err(FaultError::BitIndex(bit, "EXPONENT_FLIP (0..=10)"))
            }
            CorruptionTransform::LutEntryOverride { index, .. } if index > 255 => {
                Err(FaultError::BitIndex(index, "LUT_ENTRY_OVERRIDE index (0..=255)"))
            }
            _ => Ok(()),
        }
    }

    /// Applies the transform to the result of `op`.
    pub fn apply(&self, value: f64, op: &PrimOp) -> f64 {
        match *self {
            CorruptionTransform::LutEntryOverride { index, value: replacement } => {
                if op.kind == OpKind::LutSquare && op.operands.first() == Some(&f64::from(index)) {
                    replacement
                } else {
                    value
                }
            }
            _ => corrupt(value, self).unwrap_or(value),
        }
    }
}

/// Value-level corruption. `LUT_ENTRY_OVERRIDE` needs the op and is the
/// identity here.
pub fn corrupt(value: f64, transform: &CorruptionTransform) -> Result<f64, FaultError> {
    transform.validate()?;
    Ok(match *transform {
        CorruptionTransform::Bitflip { bit } => f64::from_bits(value.to_bits() ^ (1u64 << bit)),
        CorruptionTransform::SetConstant { value } => value,
        CorruptionTransform::ExponentFlip { bit } => {
            f64::from_bits(value.to_bits() ^ (1u64 << (52 + bit)))
        }
        CorruptionTransform::LutEntryOverride { .. } => value,
    })
}

/// A deterministic, core-scoped, data-dependent corruption rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub id: String,
    pub scope: Scope,
    pub trigger: Trigger,
    pub transform: CorruptionTransform,
    pub onset: OnsetSchedule,
}

impl FaultSpec {
    pub fn defect_class(&self) -> DefectClass {
        self.onset.class()
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        let invalid = |message: String| FaultError::Invalid {
            id: self.id.clone(),
            message,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.trigger.alternatives.is_empty() && !self.trigger.broad {
            return Err(invalid(
                "empty operand match list fires on every op; mark the spec `broad`".into(),
            ));
        }
        if let Some(arity) = self.trigger.op_kind.arity() {
            if let Some(alt) = self.trigger.alternatives.iter().find(|a| a.len() != arity) {
                return Err(invalid(format!(
                    "{} takes {arity} operand(s), match alternative has {}",
                    self.trigger.op_kind,
                    alt.len()
                )));
            }
        }
        for alt in &self.trigger.alternatives {
            for m in alt {
                if let OperandMatcher::Interval { lo, hi } = m {
                    if lo.is_nan() || hi.is_nan() || lo > hi {
                        return Err(invalid(format!("bad interval {lo}..{hi}")));
                    }
                }
            }
        }
        self.transform.validate()?;
        let onset_param = match self.onset {
            OnsetSchedule::DeviceError => 0.0,
            OnsetSchedule::EarlyLife { activation_hours } => activation_hours,
            OnsetSchedule::Degradation { ramp_hours } => {
                if ramp_hours <= 0.0 {
                    return Err(invalid("ramp_hours must be > 0".into()));
                }
                ramp_hours
            }
            OnsetSchedule::Wearout { rated_life_hours } => rated_life_hours,
        };
        if !(onset_param.is_finite() && onset_param >= 0.0) {
            return Err(invalid(format!("onset parameter {onset_param} must be finite and >= 0")));
        }
        Ok(())
    }

    /// Copy of this spec relocated to one specific core.
    pub fn relocated(&self, core: CoreId) -> FaultSpec {
        let mut spec = self.clone();
        spec.scope = Scope {
            host_pattern: core.host.to_string(),
            core: CoreSelector::Index(core.core),
        };
        spec
    }
}

/// Degradation activation draw for `(spec id, whole hour)`, uniform in `[0, 1)`.
fn degradation_draw(id: &str, t: f64) -> f64 {
    let bucket = t.floor() as u64;
    let mut rng = SplitMix64::new(fnv1a64(id.as_bytes()) ^ bucket.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.next_unit()
}

/// Whether `spec` is active at simulated time `t` (hours, `t >= 0`).
pub fn onset_active(spec: &FaultSpec, t: f64) -> bool {
    match spec.onset {
        OnsetSchedule::DeviceError => true,
        OnsetSchedule::EarlyLife { activation_hours } => t >= activation_hours,
        OnsetSchedule::Degradation { ramp_hours } => {
            let p = (t / ramp_hours).min(1.0);
            degradation_draw(&spec.id, t) < p
        }
        OnsetSchedule::Wearout { rated_life_hours } => t > rated_life_hours,
    }
}

/// `scope(op.core) && onset_active(spec, t) && trigger(op)`.
pub fn trigger_eval(spec: &FaultSpec, op: &PrimOp, t: f64) -> bool {
    spec.scope.matches(op.core) && onset_active(spec, t) && spec.trigger.matches(op)
}

/// Checks and deduplicates a spec list. Identical repeats are dropped; the
/// same id with different content is rejected.
pub fn normalize_specs(specs: Vec<FaultSpec>) -> Result<Vec<FaultSpec>, FaultError> {
    let mut out: Vec<FaultSpec> = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        match out.iter().find(|s| s.id == spec.id) {
            Some(existing) if *existing == spec => {}
            Some(_) => return Err(FaultError::DuplicateId(spec.id)),
            None => out.push(spec),
        }
    }
    Ok(out)
}

/// A backend that corrupts selected results of a wrapped backend.
#[derive(Debug, Clone)]
pub struct FaultyBackend<B> {
    inner: B,
    specs: Arc<[FaultSpec]>,
    clock: f64,
    active: Vec<bool>,
    scope_cache: Option<(CoreId, Vec<usize>)>,
}

/// Wraps `reference` so that `specs` apply to its results.
pub fn inject<B: ArithmeticBackend>(
    reference: B,
    specs: Vec<FaultSpec>,
) -> Result<FaultyBackend<B>, FaultError> {
    Ok(FaultyBackend::from_shared(reference, normalize_specs(specs)?.into()))
}

impl<B: ArithmeticBackend> FaultyBackend<B> {
    /// Builds a backend over an already-normalized spec list.
    pub fn from_shared(inner: B, specs: Arc<[FaultSpec]>) -> Self {
        let mut backend = Self {
            inner,
            active: Vec::new(),
            specs,
            clock: 0.0,
            scope_cache: None,
        };
        backend.refresh_onset();
        backend
    }

    pub fn specs(&self) -> &[FaultSpec] {
        &self.specs
    }

    pub fn into_inner(self) -> B {
        self.inner
    }

    fn refresh_onset(&mut self) {
        let t = self.clock;
        self.active = self.specs.iter().map(|s| onset_active(s, t)).collect();
    }

    fn ensure_scope(&mut self, core: CoreId) {
        let stale = !matches!(&self.scope_cache, Some((c, _)) if *c == core);
        if stale {
            let idx = self
                .specs
                .iter()
                .enumerate()
                .filter(|(_, s)| s.scope.matches(core))
                .map(|(i, _)| i)
                .collect();
            self.scope_cache = Some((core, idx));
        }
    }
}

impl<B: ArithmeticBackend> ArithmeticBackend for FaultyBackend<B> {
    fn execute(&mut self, kind: OpKind, operands: &[f64], core: CoreId) -> TraceStep {
        let mut step = self.inner.execute(kind, operands, core);
        if self.specs.is_empty() {
            return step;
        }
        self.ensure_scope(core);
        let (_, candidates) = self.scope_cache.as_ref().expect("filled by ensure_scope");
        for &i in candidates {
            let spec = &self.specs[i];
            if self.active[i] && spec.trigger.matches(&step.op) {
                step.result = spec.transform.apply(step.result, &step.op);
            }
        }
        step
    }

    fn clock_hours(&self) -> f64 {
        self.clock
    }

    fn set_clock_hours(&mut self, hours: f64) {
        self.clock = hours;
        self.inner.set_clock_hours(hours);
        self.refresh_onset();
    }
}

#[cfg(test)]
mod tests;
