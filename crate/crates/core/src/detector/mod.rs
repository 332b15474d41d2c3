//! Per-core scanning against the reference, failing-input shrinking,
//! data-dependency classification and voted redundant execution.

mod shrink;

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::codec::fnv1a64;
use crate::kernels::{
    gen_operand_stream, ArithmeticBackend, CoreId, HostId, KernelError, KernelKind, KernelValue,
    OperandDomain, Status, TestKernel, TestVector, ValueKey,
};
use crate::oracle::{
    compare_parts, reference_eval, CompareError, ComparisonPolicy, Outcome, Verdict,
};

pub use shrink::{shrink, shrink_with_expected, Certificate, ShrinkResult, SHRINK_COST_CONSTANT};

/// Known reproducers: `(1.1, y)` for y in 53, 68, 78, 52, 3, 107, -3.
pub fn builtin_targeted() -> Vec<TestVector> {
    [53.0, 68.0, 78.0, 52.0, 3.0, 107.0, -3.0]
        .into_iter()
        .map(|y| TestVector::new(1.1, y))
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("scan plan rejected: {0}")]
    PlanRejected(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("core {core} is not part of the scan plan")]
    CoreNotInPlan { core: u32 },
    #[error("core {core} does not exist on a host with {cores} cores")]
    CoreOutOfRange { core: u32, cores: u32 },
    #[error("nothing to shrink: no vector in the stream mismatches")]
    NothingToShrink,
    #[error("redundant execution needs an odd number of at least 3 cores, got {0}")]
    BadRedundancy(usize),
    #[error("repeats must be at least 2, got {0}")]
    BadRepeats(u32),
    #[error("no majority among {} values", values.len())]
    NoMajority { values: Vec<(CoreId, KernelValue)> },
}

/// Generated part of a scan: `count` vectors from `seed` over `domain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub seed: u64,
    pub count: usize,
    #[serde(default)]
    pub domain: OperandDomain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub kernels: Vec<TestKernel>,
    pub stream: StreamSpec,
    /// Evaluated before the generated stream.
    #[serde(default)]
    pub targeted: Vec<TestVector>,
    #[serde(default)]
    pub policy: ComparisonPolicy,
    pub cores: Vec<u32>,
    /// Maximum primitive ops executed per core.
    pub budget: u64,
}

impl ScanPlan {
    /// `INT_POW` and `POW_CHAIN` over `count` generated vectors, unlimited budget.
    pub fn new(seed: u64, count: usize, cores: impl IntoIterator<Item = u32>) -> Self {
        Self {
            kernels: vec![KernelKind::IntPow.into(), KernelKind::PowChain.into()],
            stream: StreamSpec {
                seed,
                count,
                domain: OperandDomain::default(),
            },
            targeted: Vec::new(),
            policy: ComparisonPolicy::standard(),
            cores: cores.into_iter().collect(),
            budget: u64::MAX,
        }
    }

    pub fn with_kernels(mut self, kernels: impl IntoIterator<Item = KernelKind>) -> Self {
        self.kernels = kernels.into_iter().map(TestKernel::from).collect();
        self
    }

    pub fn with_targeted(mut self, targeted: Vec<TestVector>) -> Self {
        self.targeted = targeted;
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    /// Primitive ops one vector costs across all kernels of the plan.
    pub fn ops_per_vector(&self) -> u64 {
        self.kernels.iter().map(TestKernel::op_count).sum()
    }

    /// Ops one core executes for the whole plan (targeted plus as much of the
    /// stream as the budget allows).
    pub fn cost_per_core(&self) -> u64 {
        self.ops_per_vector() * self.vector_count() as u64
    }

    /// Number of vectors each core evaluates.
    pub fn vector_count(&self) -> usize {
        let per = self.ops_per_vector().max(1);
        let affordable = usize::try_from(self.budget / per).unwrap_or(usize::MAX);
        (self.targeted.len() + self.stream.count).min(affordable.max(self.targeted.len()))
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let reject = |m: String| Err(DetectorError::PlanRejected(m));
        if self.kernels.is_empty() {
            return reject("no kernels".into());
        }
        if self.stream.count == 0 && self.targeted.is_empty() {
            return reject("plan has no vectors".into());
        }
        if self.cores.is_empty() {
            return reject("no cores".into());
        }
        self.stream.domain.validate()?;
        self.policy.validate()?;
        let targeted_cost = self.ops_per_vector() * self.targeted.len() as u64;
        if targeted_cost > self.budget {
            return reject(format!(
                "budget {} cannot cover the {} targeted vectors ({targeted_cost} ops)",
                self.budget,
                self.targeted.len()
            ));
        }
        Ok(())
    }

    /// FNV-1a 64 of the plan's canonical JSON form, as 16 hex digits.
    pub fn plan_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        format!("{:016x}", fnv1a64(&json))
    }

    /// The vectors every core evaluates, in order.
    pub fn vectors(&self) -> Result<Vec<TestVector>, DetectorError> {
        self.validate()?;
        let n = self.vector_count();
        let mut out = self.targeted.clone();
        let generated = n - self.targeted.len();
        if generated > 0 {
            out.extend(gen_operand_stream(
                self.stream.seed,
                generated,
                &self.stream.domain,
            )?);
        }
        Ok(out)
    }
}

/// Expected result of one kernel on one vector, without its trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expected {
    pub status: Status,
    pub value: KernelValue,
}

/// A plan with its vectors generated and reference results computed once.
#[derive(Clone, Debug)]
pub struct PreparedPlan {
    plan: ScanPlan,
    vectors: Vec<TestVector>,
    /// `expected[v * kernels + k]`
    expected: Vec<Expected>,
}

impl PreparedPlan {
    pub fn new(plan: &ScanPlan) -> Result<Self, DetectorError> {
        let vectors = plan.vectors()?;
        let mut expected = Vec::with_capacity(vectors.len() * plan.kernels.len());
        for v in &vectors {
            for k in &plan.kernels {
                let out = reference_eval(k, v);
                expected.push(Expected {
                    status: out.status,
                    value: out.value,
                });
            }
        }
        Ok(Self {
            plan: plan.clone(),
            vectors,
            expected,
        })
    }

    pub fn plan(&self) -> &ScanPlan {
        &self.plan
    }

    pub fn vectors(&self) -> &[TestVector] {
        &self.vectors
    }

    pub fn expected(&self, vector: usize, kernel: usize) -> Expected {
        self.expected[vector * self.plan.kernels.len() + kernel]
    }

    /// Scans one core; returns its mismatching verdicts in evaluation order.
    pub fn scan_core<B: ArithmeticBackend + ?Sized>(
        &self,
        core: CoreId,
        backend: &mut B,
    ) -> Result<Vec<Verdict>, DetectorError> {
        self.scan_core_range(core, backend, 0..self.vectors.len())
    }

    /// Scans one core on the plan vectors with indices in `range`.
    pub fn scan_core_range<B: ArithmeticBackend + ?Sized>(
        &self,
        core: CoreId,
        backend: &mut B,
        range: Range<usize>,
    ) -> Result<Vec<Verdict>, DetectorError> {
        if !self.plan.cores.contains(&core.core) {
            return Err(DetectorError::CoreNotInPlan { core: core.core });
        }
        let policy = &self.plan.policy;
        let mut mismatches = Vec::new();
        let start = range.start;
        for (offset, vector) in self.vectors[range].iter().enumerate() {
            let vi = start + offset;
            for (ki, kernel) in self.plan.kernels.iter().enumerate() {
                let out = kernel.evaluate(vector, backend, core);
                let exp = self.expected(vi, ki);
                let outcome = compare_parts(
                    (out.kind, out.status, out.value),
                    (kernel.kind, exp.status, exp.value),
                    policy,
                )?;
                if outcome == Outcome::Mismatch {
                    mismatches.push(Verdict {
                        outcome,
                        kernel: kernel.kind,
                        observed: out.value,
                        expected: exp.value,
                        vector: vector.clone(),
                        core,
                    });
                }
            }
        }
        Ok(mismatches)
    }
}

/// Scans `core` with `plan`. Every primitive op carries `core`.
pub fn scan_core<B: ArithmeticBackend + ?Sized>(
    core: CoreId,
    plan: &ScanPlan,
    backend: &mut B,
) -> Result<Vec<Verdict>, DetectorError> {
    if !plan.cores.contains(&core.core) {
        return Err(DetectorError::CoreNotInPlan { core: core.core });
    }
    PreparedPlan::new(plan)?.scan_core(core, backend)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub id: HostId,
    pub cores: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScanStatus {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreFindings {
    pub core: u32,
    pub mismatches: Vec<Verdict>,
    /// One shrink result per kernel that mismatched on this core.
    pub minimal_reproducer: Vec<ShrinkResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub host: HostId,
    pub status: ScanStatus,
    pub cores_scanned: Vec<u32>,
    /// Only cores with at least one mismatch.
    pub findings: Vec<CoreFindings>,
    pub seed: u64,
    pub plan_hash: String,
    pub quantum_id: u64,
    pub vectors_per_core: usize,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub duration_ms: u64,
}

impl FaultReport {
    pub fn mismatch_count(&self) -> usize {
        self.findings.iter().map(|f| f.mismatches.len()).sum()
    }

    pub fn flagged_cores(&self) -> Vec<u32> {
        self.findings.iter().map(|f| f.core).collect()
    }

    /// Zeroes the wall-clock fields.
    pub fn canonicalize(&mut self) {
        self.timestamp = 0;
        self.duration_ms = 0;
    }
}

pub(crate) fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Scans every plan core of `host`, one backend session per core (from
/// `backend_for`), and shrinks each failing core's stream per failing kernel.
pub fn scan_host<B, F>(host: Host, plan: &ScanPlan, backend_for: F) -> Result<FaultReport, DetectorError>
where
    B: ArithmeticBackend,
    F: FnMut(CoreId) -> B,
{
    let prepared = PreparedPlan::new(plan)?;
    scan_host_prepared(host, &prepared, backend_for)
}

/// [`scan_host`] with reference results already computed.
pub fn scan_host_prepared<B, F>(
    host: Host,
    prepared: &PreparedPlan,
    mut backend_for: F,
) -> Result<FaultReport, DetectorError>
where
    B: ArithmeticBackend,
    F: FnMut(CoreId) -> B,
{
    let plan = prepared.plan();
    if let Some(&core) = plan.cores.iter().find(|&&c| c >= host.cores) {
        return Err(DetectorError::CoreOutOfRange {
            core,
            cores: host.cores,
        });
    }
    let started = Instant::now();
    let timestamp = unix_seconds();
    let mut findings = Vec::new();
    for &c in &plan.cores {
        let core = CoreId { host: host.id, core: c };
        let mut backend = backend_for(core);
        let mismatches = prepared.scan_core(core, &mut backend)?;
        if mismatches.is_empty() {
            continue;
        }
        let mut minimal_reproducer = Vec::new();
        for (ki, kernel) in plan.kernels.iter().enumerate() {
            if !mismatches.iter().any(|v| v.kernel == kernel.kind) {
                continue;
            }
            let mut session = backend_for(core);
            minimal_reproducer.push(shrink_with_expected(
                prepared.vectors(),
                core,
                kernel,
                &mut session,
                &plan.policy,
                |vi| prepared.expected(vi, ki),
            )?);
        }
        findings.push(CoreFindings {
            core: c,
            mismatches,
            minimal_reproducer,
        });
    }
    Ok(FaultReport {
        host: host.id,
        status: if findings.is_empty() {
            ScanStatus::Pass
        } else {
            ScanStatus::Fail
        },
        cores_scanned: plan.cores.clone(),
        findings,
        seed: plan.stream.seed,
        plan_hash: plan.plan_hash(),
        quantum_id: 0,
        vectors_per_core: prepared.vectors().len(),
        timestamp,
        duration_ms: started.elapsed().as_millis() as u64,
    })
}

/// Re-evaluates a verdict's vector on its core and checks the outcome recurs
/// with the same observed value.
pub fn reverify<B: ArithmeticBackend + ?Sized>(
    verdict: &Verdict,
    kernel: &TestKernel,
    backend: &mut B,
    policy: &ComparisonPolicy,
) -> Result<bool, DetectorError> {
    let out = kernel.evaluate(&verdict.vector, backend, verdict.core);
    let expected = reference_eval(kernel, &verdict.vector);
    let outcome = compare_parts(
        (out.kind, out.status, out.value),
        (expected.kind, expected.status, expected.value),
        policy,
    )?;
    Ok(outcome == verdict.outcome && out.value == verdict.observed && expected.value == verdict.expected)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Consistency {
    ConsistentFail,
    Flaky,
    ConsistentPass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependencyRow {
    pub vector: TestVector,
    pub fails: u32,
    pub passes: u32,
    pub consistency: Consistency,
}

/// Re-evaluates each minimal vector `repeats` times. Repeat `r` runs with the
/// backend clock at `start + r` hours, so each repeat is a separate scan for
/// time-sampled onset; the clock is restored afterwards.
pub fn classify_data_dependency<B: ArithmeticBackend + ?Sized>(
    reproducer: &ShrinkResult,
    core: CoreId,
    kernel: &TestKernel,
    backend: &mut B,
    repeats: u32,
) -> Result<Vec<DependencyRow>, DetectorError> {
    if repeats < 2 {
        return Err(DetectorError::BadRepeats(repeats));
    }
    let policy = ComparisonPolicy::standard();
    let start = backend.clock_hours();
    let mut rows = Vec::with_capacity(reproducer.minimal_vectors.len());
    for vector in &reproducer.minimal_vectors {
        let expected = reference_eval(kernel, vector);
        let (mut fails, mut passes) = (0, 0);
        for r in 0..repeats {
            backend.set_clock_hours(start + f64::from(r));
            let out = kernel.evaluate(vector, backend, core);
            match compare_parts(
                (out.kind, out.status, out.value),
                (expected.kind, expected.status, expected.value),
                &policy,
            )? {
                Outcome::Mismatch => fails += 1,
                Outcome::Match => passes += 1,
            }
        }
        let consistency = match (fails, passes) {
            (_, 0) => Consistency::ConsistentFail,
            (0, _) => Consistency::ConsistentPass,
            _ => Consistency::Flaky,
        };
        rows.push(DependencyRow {
            vector: vector.clone(),
            fails,
            passes,
            consistency,
        });
    }
    backend.set_clock_hours(start);
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub voted: KernelValue,
    pub status: Status,
    pub disagreement: bool,
    pub values: Vec<(CoreId, KernelValue)>,
}

/// Evaluates `vector` on each core and takes a strict-majority vote over the
/// (status, value) results, values compared bit-exactly.
pub fn redundant_execute<B: ArithmeticBackend + ?Sized>(
    kernel: &TestKernel,
    vector: &TestVector,
    cores: &[CoreId],
    backend: &mut B,
) -> Result<VoteResult, DetectorError> {
    if cores.len() < 3 || cores.len() % 2 == 0 {
        return Err(DetectorError::BadRedundancy(cores.len()));
    }
    let outputs: Vec<_> = cores
        .iter()
        .map(|&c| (c, kernel.evaluate(vector, backend, c)))
        .collect();
    let mut tally: BTreeMap<(bool, ValueKey), (usize, Status, KernelValue)> = BTreeMap::new();
    for (_, out) in &outputs {
        let entry = tally
            .entry((out.is_ok(), out.value.key()))
            .or_insert((0, out.status, out.value));
        entry.0 += 1;
    }
    let values: Vec<_> = outputs.iter().map(|(c, o)| (*c, o.value)).collect();
    let winner = tally.values().find(|(n, _, _)| 2 * n > cores.len());
    match winner {
        Some(&(n, status, voted)) => Ok(VoteResult {
            voted,
            status,
            disagreement: n != cores.len(),
            values,
        }),
        None => Err(DetectorError::NoMajority { values }),
    }
}
