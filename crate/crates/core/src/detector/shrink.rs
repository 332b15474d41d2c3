//! Delta-debugging minimization of a failing vector stream.
//!
//! A mismatch is identified by `(kernel, observed value, expected value)`.
//! The shrinker looks for a 1-minimal sub-list of the stream that still
//! exhibits every distinct mismatch identity of the whole stream.
//!
//! Each vector is evaluated on the backend under test at most once; later
//! subset tests reuse the cached outcome. `steps` counts those evaluations,
//! so `steps <= n`, which is within `C * n * log2(n) + k^2` with
//! [`SHRINK_COST_CONSTANT`] `C = 1` for every stream length `n >= 1` and
//! minimal size `k >= 1`. Reference evaluations are not counted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DetectorError, Expected};
use crate::kernels::{ArithmeticBackend, CoreId, KernelValue, TestKernel, TestVector, ValueKey};
use crate::oracle::{compare_parts, reference_eval, ComparisonPolicy, Outcome};

pub const SHRINK_COST_CONSTANT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub vector_id: u64,
    pub observed: KernelValue,
    pub expected: KernelValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkResult {
    pub kernel: TestKernel,
    pub core: CoreId,
    pub minimal_vectors: Vec<TestVector>,
    /// Kernel evaluations on the backend under test.
    pub steps: u64,
    /// Subset tests performed by the minimization.
    pub subset_tests: u64,
    pub stream_len: usize,
    pub certificate: Vec<Certificate>,
}

impl ShrinkResult {
    /// `C * n * log2(n) + k^2`.
    pub fn step_bound(&self) -> f64 {
        let n = self.stream_len as f64;
        let k = self.minimal_vectors.len() as f64;
        SHRINK_COST_CONSTANT * n * n.log2() + k * k
    }
}

type Identity = (ValueKey, ValueKey);

struct Oracle<'a, B: ?Sized, E> {
    stream: &'a [TestVector],
    core: CoreId,
    kernel: &'a TestKernel,
    backend: &'a mut B,
    policy: &'a ComparisonPolicy,
    expected: E,
    cache: Vec<Option<Option<(Identity, KernelValue, KernelValue)>>>,
    steps: u64,
}

impl<B: ArithmeticBackend + ?Sized, E: FnMut(usize) -> Expected> Oracle<'_, B, E> {
    /// The mismatch identity of vector `i`, or `None` if it matches.
    fn identity(&mut self, i: usize) -> Result<Option<Identity>, DetectorError> {
        if let Some(cached) = self.cache[i] {
            return Ok(cached.map(|(id, _, _)| id));
        }
        let out = self.kernel.evaluate(&self.stream[i], self.backend, self.core);
        self.steps += 1;
        let exp = (self.expected)(i);
        let outcome = compare_parts(
            (out.kind, out.status, out.value),
            (self.kernel.kind, exp.status, exp.value),
            self.policy,
        )?;
        let entry = (outcome == Outcome::Mismatch)
            .then(|| ((out.value.key(), exp.value.key()), out.value, exp.value));
        self.cache[i] = Some(entry);
        Ok(entry.map(|(id, _, _)| id))
    }

    fn identities(&mut self, subset: &[usize]) -> Result<BTreeSet<Identity>, DetectorError> {
        let mut set = BTreeSet::new();
        for &i in subset {
            if let Some(id) = self.identity(i)? {
                set.insert(id);
            }
        }
        Ok(set)
    }
}

/// Shrinks `failing_stream` on `core` for `kernel`, with expected values from
/// the reference backend.
pub fn shrink<B: ArithmeticBackend + ?Sized>(
    failing_stream: &[TestVector],
    core: CoreId,
    kernel: &TestKernel,
    backend: &mut B,
) -> Result<ShrinkResult, DetectorError> {
    shrink_with_expected(
        failing_stream,
        core,
        kernel,
        backend,
        &ComparisonPolicy::standard(),
        |i| {
            let out = reference_eval(kernel, &failing_stream[i]);
            Expected {
                status: out.status,
                value: out.value,
            }
        },
    )
}

/// [`shrink`] with expected results supplied by index into the stream.
pub fn shrink_with_expected<B, E>(
    failing_stream: &[TestVector],
    core: CoreId,
    kernel: &TestKernel,
    backend: &mut B,
    policy: &ComparisonPolicy,
    expected: E,
) -> Result<ShrinkResult, DetectorError>
where
    B: ArithmeticBackend + ?Sized,
    E: FnMut(usize) -> Expected,
{
    let mut oracle = Oracle {
        stream: failing_stream,
        core,
        kernel,
        backend,
        policy,
        expected,
        cache: vec![None; failing_stream.len()],
        steps: 0,
    };
    let all: Vec<usize> = (0..failing_stream.len()).collect();
    let target = oracle.identities(&all)?;
    if target.is_empty() {
        return Err(DetectorError::NothingToShrink);
    }

    let mut subset_tests = 0u64;
    let mut covers = |oracle: &mut Oracle<'_, B, E>, subset: &[usize]| {
        subset_tests += 1;
        oracle.identities(subset).map(|s| s == target)
    };

    // ddmin over indices.
    let mut current = all;
    let mut granularity = 2usize;
    while current.len() >= 2 {
        let chunks = split(&current, granularity);
        let mut reduced = false;
        for chunk in &chunks {
            if covers(&mut oracle, chunk)? {
                current = chunk.clone();
                granularity = 2;
                reduced = true;
                break;
            }
        }
        if !reduced && chunks.len() > 2 {
            for skip in 0..chunks.len() {
                let complement: Vec<usize> = chunks
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != skip)
                    .flat_map(|(_, c)| c.iter().copied())
                    .collect();
                if covers(&mut oracle, &complement)? {
                    current = complement;
                    granularity = (granularity - 1).max(2);
                    reduced = true;
                    break;
                }
            }
        }
        if !reduced {
            if granularity >= current.len() {
                break;
            }
            granularity = (granularity * 2).min(current.len());
        }
    }

    let certificate = current
        .iter()
        .map(|&i| {
            let (_, observed, expected) = oracle.cache[i]
                .flatten()
                .expect("minimal vectors mismatch and are cached");
            Certificate {
                vector_id: failing_stream[i].id,
                observed,
                expected,
            }
        })
        .collect();
    Ok(ShrinkResult {
        kernel: *kernel,
        core,
        minimal_vectors: current.iter().map(|&i| failing_stream[i].clone()).collect(),
        steps: oracle.steps,
        subset_tests,
        stream_len: failing_stream.len(),
        certificate,
    })
}

fn split(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let parts = parts.min(items.len()).max(1);
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}
