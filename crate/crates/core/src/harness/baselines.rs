//! Classical reference compressors over whole corpora.

use crate::codec::{deflate_cost, lm_compress, AdaptiveContextModel};
use crate::corpus::Chunk;
use crate::par;

/// How sequences are laid out before compressing a corpus as one stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Framing {
    /// Raw bytes, sequences separated by a newline byte.
    RawNewline,
    /// Decimal values joined by `,`, one sequence per line.
    DecimalComma,
}

pub fn frame<'a>(seqs: impl IntoIterator<Item = &'a [u8]>, framing: Framing) -> Vec<u8> {
    let mut out = Vec::new();
    for s in seqs {
        match framing {
            Framing::RawNewline => out.extend_from_slice(s),
            Framing::DecimalComma => {
                for (i, v) in s.iter().enumerate() {
                    if i > 0 {
                        out.push(b',');
                    }
                    out.extend_from_slice(v.to_string().as_bytes());
                }
            }
        }
        out.push(b'\n');
    }
    out
}

fn raw_bits<'a>(seqs: impl IntoIterator<Item = &'a [u8]>) -> u64 {
    seqs.into_iter().map(|s| 8 * s.len() as u64).sum()
}

/// gzip of all sequences as a single stream, over 8 bits per element.
pub fn gzip_joined_cr(seqs: &[&[u8]], framing: Framing) -> f64 {
    deflate_cost(&frame(seqs.iter().copied(), framing)) as f64
        / raw_bits(seqs.iter().copied()) as f64
}

/// Each chunk gzipped on its own; ratio of summed sizes.
pub fn gzip_per_chunk_cr(chunks: &[Chunk]) -> f64 {
    let bits: u64 = par::map(chunks, |c| deflate_cost(&c.data))
        .into_iter()
        .sum();
    bits as f64 / raw_bits(chunks.iter().map(|c| c.data.as_slice())) as f64
}

/// Each chunk coded with a fresh adaptive order-`order` model.
pub fn lm_per_chunk_cr(chunks: &[Chunk], order: usize) -> f64 {
    let bits: u64 = par::map(chunks, |c| {
        lm_compress(&c.data, &mut AdaptiveContextModel::new(order)).bit_len()
    })
    .into_iter()
    .sum();
    bits as f64 / raw_bits(chunks.iter().map(|c| c.data.as_slice())) as f64
}
