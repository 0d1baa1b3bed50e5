//! Binary arithmetic coder with 62-bit state.
//!
//! Classic low/high interval coder with deferred ("pending") bits for the
//! straddle case. Symbols are coded as half-open cumulative-frequency
//! intervals `[cum_low, cum_high)` out of `total`. Intermediate products use
//! `u128`, so totals up to [`MAX_TOTAL`] lose at most ~2^-28 bits per symbol.
//!
//! Termination writes the shortest bit string whose zero-padded value lies in
//! the final interval, so a stream is at most `ceil(-log2 P) + 1` bits plus
//! the rounding loss, and the decoder reads zeros past the end. Because only
//! a point (not a whole dyadic interval) must fit, a stream can undercut
//! `-log2 P` by less than one bit.

use super::bits::{BitReader, BitWriter, Bitstream};

pub const PRECISION: u32 = 62;
const TOP: u64 = (1 << PRECISION) - 1;
const HALF: u64 = 1 << (PRECISION - 1);
const QUARTER: u64 = 1 << (PRECISION - 2);
const THREE_QUARTERS: u64 = 3 * QUARTER;

/// Largest supported frequency total.
pub const MAX_TOTAL: u64 = 1 << 32;

#[derive(Debug)]
pub struct ArithEncoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitWriter,
}

impl Default for ArithEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl ArithEncoder {
    pub fn new() -> Self {
        ArithEncoder {
            low: 0,
            high: TOP,
            pending: 0,
            out: BitWriter::new(),
        }
    }

    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        for _ in 0..self.pending {
            self.out.push(!bit);
        }
        self.pending = 0;
    }

    pub fn encode(&mut self, cum_low: u64, cum_high: u64, total: u64) {
        assert!(
            cum_low < cum_high && cum_high <= total && total <= MAX_TOTAL,
            "bad interval"
        );
        let range = (self.high - self.low) as u128 + 1;
        self.high = self.low + (range * cum_high as u128 / total as u128) as u64 - 1;
        self.low += (range * cum_low as u128 / total as u128) as u64;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = self.high << 1 | 1;
        }
    }

    /// Encode `symbol` uniformly among `n` choices.
    pub fn encode_uniform(&mut self, symbol: u64, n: u64) {
        self.encode(symbol, symbol + 1, n);
    }

    /// Bits emitted so far, excluding pending and termination bits.
    pub fn bits_written(&self) -> u64 {
        self.out.bit_len()
    }

    pub fn finish(mut self) -> Bitstream {
        let min_k = if self.pending > 0 { 1 } else { 0 };
        for k in min_k..=PRECISION {
            let shift = PRECISION - k;
            let unit = 1u128 << shift;
            let v = (self.low as u128).div_ceil(unit) * unit;
            if v <= self.high as u128 {
                let prefix = (v >> shift) as u64;
                if k > 0 {
                    self.emit(prefix >> (k - 1) & 1 == 1);
                    self.out.push_bits(prefix, k - 1);
                }
                break;
            }
        }
        self.out.finish()
    }
}

#[derive(Debug)]
pub struct ArithDecoder<'a> {
    low: u64,
    high: u64,
    value: u64,
    input: BitReader<'a>,
}

impl<'a> ArithDecoder<'a> {
    pub fn new(mut input: BitReader<'a>) -> Self {
        let mut value = 0;
        for _ in 0..PRECISION {
            value = value << 1 | input.next_bit() as u64;
        }
        ArithDecoder {
            low: 0,
            high: TOP,
            value,
            input,
        }
    }

    /// Cumulative frequency in `[0, total)` identifying the next symbol.
    pub fn target(&self, total: u64) -> u64 {
        let range = (self.high - self.low) as u128 + 1;
        let offset = (self.value - self.low) as u128 + 1;
        ((offset * total as u128 - 1) / range) as u64
    }

    /// Remove the symbol occupying `[cum_low, cum_high)` (must contain the target).
    pub fn consume(&mut self, cum_low: u64, cum_high: u64, total: u64) {
        let range = (self.high - self.low) as u128 + 1;
        self.high = self.low + (range * cum_high as u128 / total as u128) as u64 - 1;
        self.low += (range * cum_low as u128 / total as u128) as u64;
        loop {
            if self.high < HALF {
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = self.high << 1 | 1;
            self.value = self.value << 1 | self.input.next_bit() as u64;
        }
    }

    pub fn decode_uniform(&mut self, n: u64) -> u64 {
        let s = self.target(n);
        self.consume(s, s + 1, n);
        s
    }

    /// True once the decoder has consumed more zero padding than any
    /// well-formed stream can require, i.e. the input was truncated.
    pub fn overran(&self) -> bool {
        self.input.padding_read() > PRECISION as u64
    }
}
