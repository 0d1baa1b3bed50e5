//! gzip (RFC 1952) streams at a fixed level, used as the cost of free-form
//! program text and as the classical baseline.

use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::DecodeError;

/// Compression level used everywhere; recorded in reports.
pub const DEFLATE_LEVEL: u32 = 9;

pub fn deflate_compress(data: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(
        Vec::with_capacity(data.len() / 2 + 32),
        Compression::new(DEFLATE_LEVEL),
    );
    enc.write_all(data).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

pub fn deflate_decompress(stream: &[u8]) -> Result<Vec<u8>, DecodeError> {
    let mut out = Vec::new();
    GzDecoder::new(stream)
        .read_to_end(&mut out)
        .map_err(|e| DecodeError::Corrupt(format!("gzip: {e}")))?;
    Ok(out)
}

/// Size in bits of the gzip stream for `data`.
pub fn deflate_cost(data: &[u8]) -> u64 {
    8 * deflate_compress(data).len() as u64
}
