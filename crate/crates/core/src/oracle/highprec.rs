//! Independent high-precision evaluation of the power chain.
//!
//! Each step (`log2`, multiply, `exp2`) is computed in fixed point with
//! [`FRAC_BITS`] fractional bits on big integers, then rounded to the nearest
//! binary64 (ties to even) before the next step. Truncation toward zero is done
//! on the exact binary expansion. Nothing here calls into the kernels module.
//!
//! The fixed-point error of each step is a few units of `2^-FRAC_BITS`
//! relative, so a step rounds wrongly only when the true value lies within
//! about `2^-300` (relative) of a binary64 rounding boundary. No binary64
//! argument in the default operand domain is known to come that close.

use std::sync::OnceLock;

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub const FRAC_BITS: u32 = 320;
const EXP_HALVINGS: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("base {0} outside the log2 domain (must be finite and > 0)")]
    BaseDomain(f64),
    #[error("exponent {0} is not finite")]
    ExponentDomain(f64),
}

/// Decomposes a finite binary64 into `(signed integer mantissa, power of two)`.
fn decompose(v: f64) -> (BigInt, i64) {
    let bits = v.to_bits();
    let negative = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    };
    let m = BigInt::from(mant);
    (if negative { -m } else { m }, exp)
}

fn pow2_f64(k: i64) -> f64 {
    debug_assert!((-1074..=1023).contains(&k));
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k + 1074))
    }
}

/// Rounds `value * 2^exp` to the nearest binary64, ties to even.
pub(crate) fn round_to_f64(value: &BigInt, exp: i64, negative_zero: bool) -> f64 {
    let negative = value.sign() == Sign::Minus;
    let mag = value.abs();
    if mag.is_zero() {
        return if negative_zero { -0.0 } else { 0.0 };
    }
    let bits = mag.bits() as i64;
    let lead = bits - 1 + exp;
    let magnitude = if lead > 1023 {
        f64::INFINITY
    } else {
        let ulp_exp = (lead - 52).max(-1074);
        let shift = ulp_exp - exp;
        let q = if shift <= 0 {
            mag << ((-shift) as usize)
        } else {
            let shift = shift as usize;
            let q = &mag >> shift;
            let rem = &mag - (&q << shift);
            let half = BigInt::one() << (shift - 1);
            if rem > half || (rem == half && q.bit(0)) {
                q + 1
            } else {
                q
            }
        };
        // q <= 2^53, exact in binary64; the product is exact or overflows.
        q.to_f64().expect("fits in 54 bits") * pow2_f64(ulp_exp)
    };
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// `2 * atanh(t)` for fixed-point `t` (|t| < 1), via the odd power series.
fn two_atanh(t: &BigInt) -> BigInt {
    if t.sign() == Sign::Minus {
        return -two_atanh(&-t);
    }
    let t2 = (t * t) >> FRAC_BITS;
    let mut power = t.clone();
    let mut sum = BigInt::zero();
    let mut k = 1u32;
    while !power.is_zero() {
        sum += &power / k;
        power = (&power * &t2) >> FRAC_BITS;
        k += 2;
    }
    sum << 1
}

fn ln2() -> &'static BigInt {
    static LN2: OnceLock<BigInt> = OnceLock::new();
    // ln 2 = 2 atanh(1/3)
    LN2.get_or_init(|| two_atanh(&((BigInt::one() << FRAC_BITS) / 3)))
}

/// `log2(x)` for finite `x > 0` as fixed point.
fn log2_fixed(x: f64) -> BigInt {
    let (mant, exp) = decompose(x);
    // x = mant * 2^exp; normalize to m = mant / 2^s in [sqrt(1/2), sqrt(2)).
    let bits = mant.bits() as i64;
    let mut s = bits - 1;
    let mut e = exp + s;
    let one = BigInt::one() << (s as usize);
    // mant / 2^s >= sqrt(2)  <=>  mant^2 >= 2 * 4^s
    if &mant * &mant >= (&one * &one) << 1 {
        s += 1;
        e += 1;
    }
    let denom_scale = BigInt::one() << (s as usize);
    let t = ((&mant - &denom_scale) << FRAC_BITS) / (&mant + &denom_scale);
    let ln_m = two_atanh(&t);
    let frac = (ln_m << FRAC_BITS) / ln2();
    (BigInt::from(e) << FRAC_BITS) + frac
}

/// `2^p` for finite `p`, returned as `(fixed-point mantissa, power-of-two offset)`
/// meaning `value = mantissa * 2^offset`.
fn exp2_fixed(p: f64) -> (BigInt, i64) {
    let (mant, exp) = decompose(p);
    // p * 2^FRAC_BITS, floored.
    let shift = exp + i64::from(FRAC_BITS);
    let scaled = if shift >= 0 {
        mant << (shift as usize)
    } else {
        // BigInt shifts round toward negative infinity.
        mant >> ((-shift) as usize)
    };
    let n = &scaled >> FRAC_BITS as usize; // floor
    let f = &scaled - (&n << FRAC_BITS as usize);
    let r = (&f * ln2()) >> FRAC_BITS;
    let r_small = r >> EXP_HALVINGS;

    let unit = BigInt::one() << FRAC_BITS;
    let mut sum = unit.clone();
    let mut term = unit;
    let mut k = 1u32;
    loop {
        term = ((&term * &r_small) >> FRAC_BITS) / k;
        if term.is_zero() {
            break;
        }
        sum += &term;
        k += 1;
    }
    for _ in 0..EXP_HALVINGS {
        sum = (&sum * &sum) >> FRAC_BITS;
    }
    let n = n.to_i64().expect("exponent magnitude checked by caller");
    (sum, n - i64::from(FRAC_BITS))
}

/// Correctly rounded (to ~2^-300 relative) `log2` of a positive finite binary64.
pub fn log2_step(x: f64) -> f64 {
    round_to_f64(&log2_fixed(x), -i64::from(FRAC_BITS), false)
}

/// Exactly rounded product of two finite binary64 values.
pub fn mul_step(a: f64, b: f64) -> f64 {
    let (ma, ea) = decompose(a);
    let (mb, eb) = decompose(b);
    let negative_zero = a.is_sign_negative() != b.is_sign_negative();
    round_to_f64(&(ma * mb), ea + eb, negative_zero)
}

/// Correctly rounded (to ~2^-300 relative) `exp2` of a finite binary64.
pub fn exp2_step(p: f64) -> f64 {
    if p > 1100.0 {
        return f64::INFINITY;
    }
    if p < -1100.0 {
        return 0.0;
    }
    let (m, off) = exp2_fixed(p);
    round_to_f64(&m, off, false)
}

/// Truncation toward zero of a binary64, saturating to `i128`.
pub fn trunc_saturating(v: f64) -> i128 {
    if v.is_nan() {
        return 0;
    }
    if v.is_infinite() {
        return if v > 0.0 { i128::MAX } else { i128::MIN };
    }
    let (mant, exp) = decompose(v);
    let negative = mant.sign() == Sign::Minus;
    let mag = mant.abs();
    let t = if exp >= 0 {
        mag << (exp as usize)
    } else {
        mag >> ((-exp) as usize)
    };
    let t = if negative { -t } else { t };
    t.to_i128().unwrap_or(if negative { i128::MIN } else { i128::MAX })
}

/// The three rounded intermediate results of the chain for `(x, y)`.
pub fn chain_steps(x: f64, y: f64) -> Result<[f64; 3], OracleError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(OracleError::BaseDomain(x));
    }
    if !y.is_finite() {
        return Err(OracleError::ExponentDomain(y));
    }
    let l = log2_step(x);
    let p = mul_step(y, l);
    let v = exp2_step(p);
    Ok([l, p, v])
}

/// `Int(2^(y * log2 x))` with binary64 rounding after every step.
pub fn highprec_chain_eval(x: f64, y: f64) -> Result<i128, OracleError> {
    let [_, _, v] = chain_steps(x, y)?;
    Ok(trunc_saturating(v))
}
