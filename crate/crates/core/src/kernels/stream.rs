//! Deterministic operand streams.
//!
//! The generator is SplitMix64:
//!
//! ```text
//! state  <- state + 0x9E3779B97F4A7C15
//! z      <- state
//! z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output <- z ^ (z >> 31)
//! ```
//!
//! A uniform unit draw is `(output >> 11) * 2^-53`, which lies in `[0, 1)`.
//! Each vector consumes exactly two outputs: the first picks the base, the
//! second the exponent. Integer exponents are `lo + output % (hi - lo + 1)`
//! over the integral sub-range of the exponent range.

use serde::{Deserialize, Serialize};

use super::{KernelError, TestVector};

/// SplitMix64 generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (`bound > 0`), by modulo reduction.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }
}

/// Value ranges for generated vectors. Both ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperandDomain {
    pub base: (f64, f64),
    pub exponent: (f64, f64),
    pub integer_exponent: bool,
}

impl Default for OperandDomain {
    fn default() -> Self {
        Self {
            base: (1.0, 2.0),
            exponent: (-128.0, 128.0),
            integer_exponent: true,
        }
    }
}

impl OperandDomain {
    pub fn validate(&self) -> Result<(), KernelError> {
        let (blo, bhi) = self.base;
        let (elo, ehi) = self.exponent;
        if !(blo.is_finite() && bhi.is_finite()) || blo <= 0.0 || blo > bhi {
            return Err(KernelError::InvalidRange(format!(
                "base range [{blo}, {bhi}] must be finite, positive and ordered"
            )));
        }
        if !(elo.is_finite() && ehi.is_finite()) || elo > ehi {
            return Err(KernelError::InvalidRange(format!(
                "exponent range [{elo}, {ehi}] must be finite and ordered"
            )));
        }
        if self.integer_exponent && elo.ceil() > ehi.floor() {
            return Err(KernelError::InvalidRange(format!(
                "exponent range [{elo}, {ehi}] contains no integer"
            )));
        }
        Ok(())
    }
}

/// Generates `count` vectors from `seed`. Identical arguments give identical lists.
pub fn gen_operand_stream(
    seed: u64,
    count: usize,
    domain: &OperandDomain,
) -> Result<Vec<TestVector>, KernelError> {
    if count == 0 {
        return Err(KernelError::InvalidRange("count must be at least 1".into()));
    }
    domain.validate()?;
    let mut rng = SplitMix64::new(seed);
    let (blo, bhi) = domain.base;
    let (elo, ehi) = domain.exponent;
    let int_lo = elo.ceil() as i64;
    let int_span = (ehi.floor() as i64 - int_lo + 1) as u64;

    let vectors = (0..count)
        .map(|_| {
            let base = (blo + rng.next_unit() * (bhi - blo)).min(bhi);
            let exponent = if domain.integer_exponent {
                (int_lo + rng.next_below(int_span) as i64) as f64
            } else {
                (elo + rng.next_unit() * (ehi - elo)).min(ehi)
            };
            TestVector::new(base, exponent)
        })
        .collect();
    Ok(vectors)
}
