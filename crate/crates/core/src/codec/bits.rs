//! MSB-first bit packing.

use serde::{Deserialize, Serialize};

/// Packed bits plus the number of valid bits (the tail of the last byte is zero).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitstream {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl Bitstream {
    /// Wrap `bytes`, of which the first `bit_len` bits are meaningful.
    ///
    /// Returns `None` if `bit_len` exceeds the bytes available.
    pub fn from_parts(bytes: Vec<u8>, bit_len: u64) -> Option<Self> {
        if bit_len > bytes.len() as u64 * 8 {
            return None;
        }
        Some(Bitstream { bytes, bit_len })
    }

    /// A whole-byte stream.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let bit_len = bytes.len() as u64 * 8;
        Bitstream { bytes, bit_len }
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }

    pub fn bit(&self, i: u64) -> bool {
        debug_assert!(i < self.bit_len);
        self.bytes[(i / 8) as usize] >> (7 - (i % 8)) & 1 == 1
    }
}

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        if self.bit_len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().expect("byte pushed above");
            *last |= 1 << (7 - (self.bit_len % 8));
        }
        self.bit_len += 1;
    }

    /// Append the low `n` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.push(value >> i & 1 == 1);
        }
    }

    pub fn append(&mut self, other: &Bitstream) {
        for i in 0..other.bit_len() {
            self.push(other.bit(i));
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn finish(self) -> Bitstream {
        Bitstream {
            bytes: self.bytes,
            bit_len: self.bit_len,
        }
    }
}

/// Reads bits from a [`Bitstream`]; past the end it yields zeros and counts them.
#[derive(Debug)]
pub struct BitReader<'a> {
    stream: &'a Bitstream,
    pos: u64,
    end: u64,
    padding: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(stream: &'a Bitstream) -> Self {
        BitReader {
            stream,
            pos: 0,
            end: stream.bit_len(),
            padding: 0,
        }
    }

    /// Reader over bits `[start, start + len)` of `stream`.
    pub fn window(stream: &'a Bitstream, start: u64, len: u64) -> Option<Self> {
        let end = start.checked_add(len)?;
        if end > stream.bit_len() {
            return None;
        }
        Some(BitReader {
            stream,
            pos: start,
            end,
            padding: 0,
        })
    }

    pub fn next_bit(&mut self) -> bool {
        if self.pos < self.end {
            let b = self.stream.bit(self.pos);
            self.pos += 1;
            b
        } else {
            self.padding += 1;
            false
        }
    }

    /// Read `n` bits (at most 64) as an unsigned integer. `None` if the
    /// window has fewer than `n` bits left.
    pub fn read_bits(&mut self, n: u32) -> Option<u64> {
        if self.remaining() < n as u64 {
            return None;
        }
        let mut v = 0u64;
        for _ in 0..n {
            v = v << 1 | self.next_bit() as u64;
        }
        Some(v)
    }

    pub fn remaining(&self) -> u64 {
        self.end - self.pos
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    /// Zero bits synthesized beyond the end of the window.
    pub fn padding_read(&self) -> u64 {
        self.padding
    }
}
