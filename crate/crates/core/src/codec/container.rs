//! Whole-corpus container: each chunk is stored either as its program or as
//! raw bytes, behind a one-bit flag.
//!
//! Layout, big-endian, bits packed MSB-first:
//!
//! ```text
//! header   magic "KCC1" | version u8 | num_functions, byte_size,
//!          max_num_repetitions, max_list_len, max_step (u32 each) |
//!          chunk count u32 | CRC-32 of the concatenated chunks u32
//! table    one u32 per chunk: raw length in bytes (flag 0) or
//!          program stream length in bits (flag 1)
//! body     per chunk: flag bit, then 8·L literal bits or the program stream
//! ```
//!
//! The body is not byte aligned; the final byte is zero padded.

use super::bits::{BitReader, BitWriter, Bitstream};
use super::program::{decode_program_window, encode_program, PriorCostModel};
use super::DecodeError;
use crate::dsl::{execute, ByteSeq, Program, DEFAULT_STEP_BUDGET};
use crate::par;

const MAGIC: &[u8; 4] = b"KCC1";
const VERSION: u8 = 1;

/// Fixed header size in bits (excluding the chunk table).
pub const HEADER_BITS: u64 = 8 * (4 + 1 + 5 * 4 + 4 + 4);

/// Bits spent on header plus chunk table for `n_chunks` chunks.
pub fn container_overhead_bits(n_chunks: usize) -> u64 {
    HEADER_BITS + 32 * n_chunks as u64
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ContainerError {
    #[error("chunk {chunk}: candidate program does not reproduce the chunk")]
    CandidateMismatch { chunk: usize },
    #[error("{chunks} chunks but {candidates} candidate slots")]
    LengthMismatch { chunks: usize, candidates: usize },
    #[error("chunk {chunk} is too large for the container")]
    ChunkTooLarge { chunk: usize },
}

enum Payload {
    Raw,
    Program(Bitstream),
}

/// Compress `chunks`, using `candidates[i]` for chunk `i` when it is given
/// and its encoding is shorter than the raw bytes.
pub fn compress_container(
    chunks: &[ByteSeq],
    candidates: &[Option<Program>],
    model: &PriorCostModel,
) -> Result<Bitstream, ContainerError> {
    if chunks.len() != candidates.len() {
        return Err(ContainerError::LengthMismatch {
            chunks: chunks.len(),
            candidates: candidates.len(),
        });
    }
    let indexed: Vec<usize> = (0..chunks.len()).collect();
    let payloads = par::map(&indexed, |&i| -> Result<Payload, ContainerError> {
        let chunk = &chunks[i];
        if u32::try_from(chunk.len()).is_err() {
            return Err(ContainerError::ChunkTooLarge { chunk: i });
        }
        let Some(p) = &candidates[i] else {
            return Ok(Payload::Raw);
        };
        match execute(p, DEFAULT_STEP_BUDGET) {
            Ok(out) if out == *chunk => {}
            _ => return Err(ContainerError::CandidateMismatch { chunk: i }),
        }
        // Programs outside the prior's bounds cannot be coded; store raw.
        Ok(match encode_program(p, model) {
            Ok(bits) if bits.bit_len() < 8 * chunk.len() as u64 => Payload::Program(bits),
            _ => Payload::Raw,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut w = BitWriter::new();
    for &b in MAGIC {
        w.push_bits(b as u64, 8);
    }
    w.push_bits(VERSION as u64, 8);
    for v in [
        model.num_functions,
        model.byte_size,
        model.max_num_repetitions,
        model.max_list_len,
        model.max_step,
    ] {
        w.push_bits(v as u64, 32);
    }
    w.push_bits(chunks.len() as u64, 32);
    let mut crc = crc32fast::Hasher::new();
    for c in chunks {
        crc.update(c);
    }
    w.push_bits(crc.finalize() as u64, 32);
    for (chunk, payload) in chunks.iter().zip(&payloads) {
        let entry = match payload {
            Payload::Raw => chunk.len() as u64,
            Payload::Program(bits) => bits.bit_len(),
        };
        w.push_bits(entry, 32);
    }
    for (chunk, payload) in chunks.iter().zip(&payloads) {
        match payload {
            Payload::Raw => {
                w.push(false);
                for &b in chunk.iter() {
                    w.push_bits(b as u64, 8);
                }
            }
            Payload::Program(bits) => {
                w.push(true);
                w.append(bits);
            }
        }
    }
    Ok(w.finish())
}

/// Inverse of [`compress_container`]; returns the chunks in order.
pub fn decompress_container(
    stream: &Bitstream,
    model: &PriorCostModel,
) -> Result<Vec<ByteSeq>, DecodeError> {
    if stream.is_empty() {
        return Err(DecodeError::Empty);
    }
    let mut r = BitReader::new(stream);
    let mut read = |n: u32| r.read_bits(n).ok_or(DecodeError::Truncated);
    let mut magic = [0u8; 4];
    for b in &mut magic {
        *b = read(8)? as u8;
    }
    if &magic != MAGIC {
        return Err(DecodeError::BadHeader("not a container stream".into()));
    }
    let version = read(8)?;
    if version != VERSION as u64 {
        return Err(DecodeError::BadHeader(format!(
            "unsupported version {version}"
        )));
    }
    let params = [read(32)?, read(32)?, read(32)?, read(32)?, read(32)?];
    let expected = [
        model.num_functions,
        model.byte_size,
        model.max_num_repetitions,
        model.max_list_len,
        model.max_step,
    ]
    .map(u64::from);
    if params != expected {
        return Err(DecodeError::BadHeader(
            "prior parameters differ from the decoding model".into(),
        ));
    }
    let n = read(32)? as usize;
    let crc = read(32)? as u32;
    if (n as u64).saturating_mul(32) > r.remaining() {
        return Err(DecodeError::Truncated);
    }
    let table: Vec<u64> = (0..n)
        .map(|_| r.read_bits(32).ok_or(DecodeError::Truncated))
        .collect::<Result<_, _>>()?;

    // Walk the flags sequentially to locate every payload, then decode
    // programs in parallel.
    enum Slot {
        Raw(ByteSeq),
        Program { start: u64, len: u64 },
    }
    let mut slots = Vec::with_capacity(n);
    for &entry in &table {
        let flag = r.read_bits(1).ok_or(DecodeError::Truncated)? == 1;
        if flag {
            let start = r.position();
            if r.remaining() < entry {
                return Err(DecodeError::Truncated);
            }
            for _ in 0..entry {
                r.next_bit();
            }
            slots.push(Slot::Program { start, len: entry });
        } else {
            if r.remaining() < entry * 8 {
                return Err(DecodeError::Truncated);
            }
            let bytes: ByteSeq = (0..entry)
                .map(|_| r.read_bits(8).expect("length checked") as u8)
                .collect();
            slots.push(Slot::Raw(bytes));
        }
    }
    if r.remaining() >= 8 || (0..r.remaining()).any(|_| r.next_bit()) {
        return Err(DecodeError::Corrupt(
            "trailing data after the last chunk".into(),
        ));
    }

    let chunks = par::map(&slots, |slot| match slot {
        Slot::Raw(bytes) => Ok(bytes.clone()),
        Slot::Program { start, len } => {
            let p = decode_program_window(stream, *start, *len, model)?;
            execute(&p, DEFAULT_STEP_BUDGET)
                .map_err(|e| DecodeError::Corrupt(format!("stored program fails: {e}")))
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut h = crc32fast::Hasher::new();
    for c in &chunks {
        h.update(c);
    }
    if h.finalize() != crc {
        return Err(DecodeError::Corrupt("checksum mismatch".into()));
    }
    Ok(chunks)
}
