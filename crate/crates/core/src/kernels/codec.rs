//! Order-0 run-length codec and FNV-1a checksum used by the roundtrip kernel.
//!
//! Encoded form is a sequence of `(run_length, byte)` pairs with
//! `1 <= run_length <= 255`.

use thiserror::Error;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("encoded stream has odd length {0}")]
    Truncated(usize),
    #[error("zero-length run at offset {0}")]
    ZeroRun(usize),
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

pub(crate) fn fnv1a64_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

pub fn rle_encode(input: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(input.len() / 2 + 2);
    let mut iter = input.iter().copied().peekable();
    while let Some(byte) = iter.next() {
        let mut run: u8 = 1;
        while run < u8::MAX && iter.peek() == Some(&byte) {
            iter.next();
            run += 1;
        }
        out.push(run);
        out.push(byte);
    }
    out
}

pub fn rle_decode(encoded: &[u8]) -> Result<Vec<u8>, CodecError> {
    if encoded.len() % 2 != 0 {
        return Err(CodecError::Truncated(encoded.len()));
    }
    let mut out = Vec::with_capacity(encoded.len());
    for (i, pair) in encoded.chunks_exact(2).enumerate() {
        if pair[0] == 0 {
            return Err(CodecError::ZeroRun(i * 2));
        }
        out.extend(std::iter::repeat(pair[1]).take(usize::from(pair[0])));
    }
    Ok(out)
}
