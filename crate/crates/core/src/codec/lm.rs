//! Compression with a sequential byte probability model and the arithmetic
//! coder.
//!
//! Stream layout (big-endian): magic `KLM1`, model fingerprint (u32), byte
//! count (u64), then the arithmetic-coded payload padded with zero bits to a
//! byte boundary. The explicit length replaces an end-of-stream symbol.

use std::collections::HashMap;
use std::io::BufRead;

use serde::Deserialize;

use super::arith::{ArithDecoder, ArithEncoder, MAX_TOTAL};
use super::bits::{BitReader, Bitstream};
use super::DecodeError;

const MAGIC: &[u8; 4] = b"KLM1";
const HEADER_BYTES: usize = 16;
/// Size of the stream header (magic, model fingerprint, length) preceding the payload.
pub const LM_HEADER_BITS: u64 = 8 * HEADER_BYTES as u64;

/// Cumulative byte frequencies (Fenwick tree over 256 symbols).
#[derive(Clone, Debug)]
pub struct Frequencies {
    tree: [u32; 257],
    total: u64,
}

impl Frequencies {
    /// Every symbol starts with count `init` (must be ≥ 1).
    pub fn flat(init: u32) -> Self {
        assert!(init >= 1);
        let mut f = Frequencies {
            tree: [0; 257],
            total: 0,
        };
        for s in 0..256 {
            f.add(s as u8, init);
        }
        f
    }

    /// Build from explicit counts; zero counts are raised to 1.
    pub fn from_counts(counts: &[u32; 256]) -> Self {
        let mut f = Frequencies {
            tree: [0; 257],
            total: 0,
        };
        for (s, &c) in counts.iter().enumerate() {
            f.add(s as u8, c.max(1));
        }
        f
    }

    pub fn add(&mut self, sym: u8, delta: u32) {
        let mut i = sym as usize + 1;
        while i <= 256 {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
        self.total += delta as u64;
    }

    fn prefix(&self, sym: usize) -> u64 {
        let mut i = sym;
        let mut s = 0u64;
        while i > 0 {
            s += self.tree[i] as u64;
            i &= i - 1;
        }
        s
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `[low, high)` occupied by `sym`.
    pub fn interval(&self, sym: u8) -> (u64, u64) {
        (self.prefix(sym as usize), self.prefix(sym as usize + 1))
    }

    pub fn count(&self, sym: u8) -> u64 {
        let (lo, hi) = self.interval(sym);
        hi - lo
    }

    /// Symbol whose interval contains `target`.
    pub fn find(&self, target: u64) -> u8 {
        let mut pos = 0usize;
        let mut rem = target;
        let mut step = 256;
        while step > 0 {
            let next = pos + step;
            if next <= 256 && (self.tree[next] as u64) <= rem {
                pos = next;
                rem -= self.tree[next] as u64;
            }
            step >>= 1;
        }
        pos as u8
    }

    /// Halve all counts (keeping each ≥ 1).
    fn rescale(&mut self) {
        let counts: Vec<u32> = (0..=255u8).map(|s| self.count(s) as u32).collect();
        *self = Frequencies {
            tree: [0; 257],
            total: 0,
        };
        for (s, c) in counts.into_iter().enumerate() {
            self.add(s as u8, (c / 2).max(1));
        }
    }
}

/// Sequential next-byte predictor. Encoder and decoder must see identical
/// predictions, so implementations must be deterministic in `history`.
pub trait ProbabilityModel {
    /// Identifies the model and its parameters; stored in stream headers.
    fn fingerprint(&self) -> u32;
    /// Return to the initial state before coding a new stream.
    fn reset(&mut self);
    /// Distribution of the byte following `history`.
    fn predict(&mut self, history: &[u8]) -> &Frequencies;
    /// Observe that `sym` followed `history`.
    fn update(&mut self, history: &[u8], sym: u8);
}

/// Adaptive order-k context model with add-one smoothing (k ≤ 2).
#[derive(Clone, Debug)]
pub struct AdaptiveContextModel {
    order: usize,
    contexts: HashMap<u32, Frequencies>,
}

/// Counts are halved once a context's total reaches this.
const RESCALE_AT: u64 = MAX_TOTAL / 2;

impl AdaptiveContextModel {
    pub fn new(order: usize) -> Self {
        assert!(order <= 2, "context order must be 0, 1 or 2");
        AdaptiveContextModel {
            order,
            contexts: HashMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn context(&self, history: &[u8]) -> u32 {
        let k = self.order.min(history.len());
        // Short histories at the start get their own contexts via the length tag.
        let mut c = (k as u32) << 16;
        for &b in &history[history.len() - k..] {
            c = (c & 0xFFFF_0000) | ((c & 0xFF) << 8) | b as u32;
        }
        c
    }
}

impl ProbabilityModel for AdaptiveContextModel {
    fn fingerprint(&self) -> u32 {
        crc32fast::hash(format!("adaptive-order-{}", self.order).as_bytes())
    }

    fn reset(&mut self) {
        self.contexts.clear();
    }

    fn predict(&mut self, history: &[u8]) -> &Frequencies {
        let c = self.context(history);
        self.contexts
            .entry(c)
            .or_insert_with(|| Frequencies::flat(1))
    }

    fn update(&mut self, history: &[u8], sym: u8) {
        let c = self.context(history);
        let f = self
            .contexts
            .entry(c)
            .or_insert_with(|| Frequencies::flat(1));
        f.add(sym, 1);
        if f.total() >= RESCALE_AT {
            f.rescale();
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogProbError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Deserialize)]
struct LogProbRecord {
    position: usize,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default)]
    logprobs: Option<Vec<Option<f64>>>,
}

/// Quantization scale for imported probabilities.
const QUANT: f64 = (1u64 << 24) as f64;

/// Position-indexed distributions produced by an external model.
///
/// Input is JSON lines `{"position": i, "probs": [256 floats]}` or
/// `{"position": i, "logprobs": [256 natural-log values]}` (`null` meaning
/// probability zero), one per byte
/// position, positions `0..n` each exactly once. Probabilities are quantized
/// to counts out of 2^24 (every symbol gets at least 1). Positions past the
/// end fall back to a uniform distribution.
#[derive(Clone, Debug)]
pub struct ExternalLogProbModel {
    dists: Vec<Frequencies>,
    uniform: Frequencies,
    fingerprint: u32,
}

impl ExternalLogProbModel {
    pub fn from_reader(reader: impl BufRead) -> Result<Self, LogProbError> {
        let mut slots: Vec<Option<Frequencies>> = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| LogProbError::Format { line: n + 1, msg };
            let rec: LogProbRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let probs: Vec<f64> = match (rec.probs, rec.logprobs) {
                (Some(p), None) => p,
                (None, Some(lp)) => lp.into_iter().map(|v| v.map_or(0.0, f64::exp)).collect(),
                _ => {
                    return Err(err(
                        "exactly one of `probs` or `logprobs` is required".into()
                    ))
                }
            };
            if probs.len() != 256 || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(err("expected 256 non-negative finite values".into()));
            }
            let sum: f64 = probs.iter().sum();
            if sum <= 0.0 {
                return Err(err("distribution sums to zero".into()));
            }
            let mut counts = [0u32; 256];
            for (c, p) in counts.iter_mut().zip(&probs) {
                *c = ((p / sum) * QUANT).round() as u32;
            }
            if rec.position >= slots.len() {
                slots.resize(rec.position + 1, None);
            }
            if slots[rec.position].is_some() {
                return Err(err(format!("duplicate position {}", rec.position)));
            }
            slots[rec.position] = Some(Frequencies::from_counts(&counts));
        }
        let dists = slots
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                f.ok_or(LogProbError::Format {
                    line: 0,
                    msg: format!("missing position {i}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(b"external-logprob");
        for f in &dists {
            for s in 0..=255u8 {
                hasher.update(&(f.count(s) as u32).to_be_bytes());
            }
        }
        Ok(ExternalLogProbModel {
            dists,
            uniform: Frequencies::flat(1),
            fingerprint: hasher.finalize(),
        })
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }
}

impl ProbabilityModel for ExternalLogProbModel {
    fn fingerprint(&self) -> u32 {
        self.fingerprint
    }

    fn reset(&mut self) {}

    fn predict(&mut self, history: &[u8]) -> &Frequencies {
        self.dists.get(history.len()).unwrap_or(&self.uniform)
    }

    fn update(&mut self, _history: &[u8], _sym: u8) {}
}

/// Ideal code length `-Σ log2 p(x_i | x_<i)` of `data` under `model`.
pub fn model_information(data: &[u8], model: &mut dyn ProbabilityModel) -> f64 {
    model.reset();
    let mut bits = 0.0;
    for (i, &b) in data.iter().enumerate() {
        let f = model.predict(&data[..i]);
        bits -= (f.count(b) as f64 / f.total() as f64).log2();
        model.update(&data[..i], b);
    }
    bits
}

pub fn lm_compress(data: &[u8], model: &mut dyn ProbabilityModel) -> Bitstream {
    model.reset();
    let mut enc = ArithEncoder::new();
    for (i, &b) in data.iter().enumerate() {
        let f = model.predict(&data[..i]);
        let (lo, hi) = f.interval(b);
        enc.encode(lo, hi, f.total());
        model.update(&data[..i], b);
    }
    let payload = enc.finish();
    let mut out = Vec::with_capacity(HEADER_BYTES + payload.bytes().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&model.fingerprint().to_be_bytes());
    out.extend_from_slice(&(data.len() as u64).to_be_bytes());
    out.extend_from_slice(payload.bytes());
    Bitstream::from_bytes(out)
}

pub fn lm_decompress(
    stream: &Bitstream,
    model: &mut dyn ProbabilityModel,
) -> Result<Vec<u8>, DecodeError> {
    let bytes = stream.bytes();
    if bytes.is_empty() {
        return Err(DecodeError::Empty);
    }
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return Err(DecodeError::BadHeader("missing LM stream magic".into()));
    }
    let found = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let expected = model.fingerprint();
    if found != expected {
        return Err(DecodeError::ModelMismatch { expected, found });
    }
    let len = u64::from_be_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let payload = Bitstream::from_bytes(bytes[HEADER_BYTES..].to_vec());
    // Every symbol costs at least 2^-32 of the interval, so a stream can
    // never encode more than 32 symbols per payload bit plus slack.
    if len > (payload.bit_len() + 64) * 32 {
        return Err(DecodeError::Truncated);
    }
    model.reset();
    let mut dec = ArithDecoder::new(BitReader::new(&payload));
    let mut out = Vec::with_capacity(len as usize);
    for _ in 0..len {
        let f = model.predict(&out);
        let total = f.total();
        let sym = f.find(dec.target(total));
        let (lo, hi) = f.interval(sym);
        dec.consume(lo, hi, total);
        if dec.overran() {
            return Err(DecodeError::Truncated);
        }
        model.update(&out, sym);
        out.push(sym);
    }
    Ok(out)
}
