//! Real-world byte sources and their division into evaluation chunks.
//!
//! DNA uses the fixed table `A C G T a c g t → 0..=7`. Audio is read from PCM
//! WAV: 16-bit samples become little-endian byte pairs; the 8-bit form takes
//! the high byte of each sample offset to unsigned (`(s >> 8) + 128`).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::dsl::ByteSeq;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Dna,
    Audio16,
    Audio8,
    Raw,
    Synthetic,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Dna => "dna",
            Modality::Audio16 => "audio16",
            Modality::Audio8 => "audio8",
            Modality::Raw => "raw",
            Modality::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "text" => Modality::Text,
            "dna" => Modality::Dna,
            "audio16" => Modality::Audio16,
            "audio8" => Modality::Audio8,
            "raw" => Modality::Raw,
            "synthetic" => Modality::Synthetic,
            _ => return Err(format!("unknown modality `{s}`")),
        })
    }
}

/// All bytes of one source file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OriginStream {
    pub id: String,
    pub bytes: ByteSeq,
    pub modality: Modality,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: no data")]
    Empty(PathBuf),
    #[error("{path}: unsupported audio encoding ({detail})")]
    UnsupportedCodec { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error("chunk file line {line}: {msg}")]
    ChunkFormat { line: usize, msg: String },
}

fn read_file(path: &Path) -> Result<Vec<u8>, CorpusError> {
    std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.into(),
        source,
    })
}

fn origin_id(path: &Path) -> String {
    path.display().to_string()
}

/// Raw file bytes, optionally truncated to the first `limit` bytes.
pub fn load_text(path: &Path, limit: Option<usize>) -> Result<OriginStream, CorpusError> {
    let mut bytes = read_file(path)?;
    if let Some(n) = limit {
        bytes.truncate(n);
    }
    if bytes.is_empty() {
        return Err(CorpusError::Empty(path.into()));
    }
    Ok(OriginStream {
        id: origin_id(path),
        bytes: bytes.into(),
        modality: Modality::Text,
    })
}

/// Raw bytes of any file (e.g. precomputed feature files).
pub fn load_raw(path: &Path) -> Result<OriginStream, CorpusError> {
    let bytes = read_file(path)?;
    if bytes.is_empty() {
        return Err(CorpusError::Empty(path.into()));
    }
    Ok(OriginStream {
        id: origin_id(path),
        bytes: bytes.into(),
        modality: Modality::Raw,
    })
}

/// Nucleotide letters in code order.
pub const DNA_ALPHABET: &[u8; 8] = b"ACGTacgt";

pub fn dna_code(letter: u8) -> Option<u8> {
    DNA_ALPHABET
        .iter()
        .position(|&c| c == letter)
        .map(|i| i as u8)
}

pub fn dna_letter(code: u8) -> Option<u8> {
    DNA_ALPHABET.get(code as usize).copied()
}

/// Result of FASTA parsing; `skipped` counts letters outside the alphabet.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FastaParse {
    pub codes: Vec<u8>,
    pub skipped: u64,
}

/// Map sequence lines to codes, dropping `>` headers and whitespace.
pub fn parse_fasta(text: &[u8]) -> FastaParse {
    let mut out = FastaParse::default();
    for line in text.split(|&b| b == b'\n') {
        if line.first() == Some(&b'>') || line.first() == Some(&b';') {
            continue;
        }
        for &b in line {
            if b.is_ascii_whitespace() {
                continue;
            }
            match dna_code(b) {
                Some(c) => out.codes.push(c),
                None => out.skipped += 1,
            }
        }
    }
    out
}

/// Load a FASTA file; symbols such as `N` are skipped and counted.
pub fn load_fasta(path: &Path) -> Result<(OriginStream, u64), CorpusError> {
    let parsed = parse_fasta(&read_file(path)?);
    if parsed.skipped > 0 {
        log::warn!(
            "{}: skipped {} symbols outside {:?}",
            path.display(),
            parsed.skipped,
            "ACGTacgt"
        );
    }
    if parsed.codes.is_empty() {
        return Err(CorpusError::Empty(path.into()));
    }
    let stream = OriginStream {
        id: origin_id(path),
        bytes: parsed.codes.into(),
        modality: Modality::Dna,
    };
    Ok((stream, parsed.skipped))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcmDepth {
    Bits8,
    Bits16,
}

/// Read the first channel of an integer PCM WAV file.
pub fn load_wav_pcm(path: &Path, depth: PcmDepth) -> Result<OriginStream, CorpusError> {
    let wav_err = |source| CorpusError::Wav {
        path: path.into(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let unsupported = |detail: String| CorpusError::UnsupportedCodec {
        path: path.into(),
        detail,
    };
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported("floating-point samples".into()));
    }
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<i32> = reader
        .samples::<i32>()
        .step_by(channels)
        .collect::<Result<_, _>>()
        .map_err(wav_err)?;
    let bytes: Vec<u8> = match (spec.bits_per_sample, depth) {
        (16, PcmDepth::Bits16) => samples
            .iter()
            .flat_map(|&s| (s as i16).to_le_bytes())
            .collect(),
        (16, PcmDepth::Bits8) => samples.iter().map(|&s| ((s >> 8) + 128) as u8).collect(),
        (8, PcmDepth::Bits8) => samples.iter().map(|&s| (s + 128) as u8).collect(),
        (bits, _) => {
            return Err(unsupported(format!(
                "{bits}-bit samples for {depth:?} output"
            )))
        }
    };
    if bytes.is_empty() {
        return Err(CorpusError::Empty(path.into()));
    }
    let modality = match depth {
        PcmDepth::Bits16 => Modality::Audio16,
        PcmDepth::Bits8 => Modality::Audio8,
    };
    Ok(OriginStream {
        id: origin_id(path),
        bytes: bytes.into(),
        modality,
    })
}

/// Inverse of the 16-bit byte layout: little-endian pairs to samples.
pub fn pcm16_samples(bytes: &[u8]) -> Vec<i16> {
    bytes
        .chunks_exact(2)
        .map(|p| i16::from_le_bytes([p[0], p[1]]))
        .collect()
}

/// Load one file per path in parallel.
pub fn load_many(paths: &[PathBuf], modality: Modality) -> Result<Vec<OriginStream>, CorpusError> {
    par::map(paths, |p| match modality {
        Modality::Text => load_text(p, None),
        Modality::Dna => load_fasta(p).map(|(s, _)| s),
        Modality::Audio16 => load_wav_pcm(p, PcmDepth::Bits16),
        Modality::Audio8 => load_wav_pcm(p, PcmDepth::Bits8),
        Modality::Raw | Modality::Synthetic => load_raw(p),
    })
    .into_iter()
    .collect()
}

/// A window of one origin stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ChunkRepr", try_from = "ChunkRepr")]
pub struct Chunk {
    pub origin: String,
    pub offset: usize,
    pub data: ByteSeq,
    pub modality: Option<Modality>,
}

#[derive(Serialize, Deserialize)]
struct ChunkRepr {
    origin: String,
    offset: usize,
    bytes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modality: Option<Modality>,
}

impl From<Chunk> for ChunkRepr {
    fn from(c: Chunk) -> Self {
        ChunkRepr {
            origin: c.origin,
            offset: c.offset,
            bytes: base64::engine::general_purpose::STANDARD.encode(c.data.as_slice()),
            modality: c.modality,
        }
    }
}

impl TryFrom<ChunkRepr> for Chunk {
    type Error = base64::DecodeError;

    fn try_from(r: ChunkRepr) -> Result<Self, Self::Error> {
        let data = base64::engine::general_purpose::STANDARD.decode(r.bytes)?;
        Ok(Chunk {
            origin: r.origin,
            offset: r.offset,
            data: data.into(),
            modality: r.modality,
        })
    }
}

impl Chunk {
    /// Key identifying a chunk within a corpus.
    pub fn key(&self) -> (&str, usize) {
        (&self.origin, self.offset)
    }
}

/// Tile each stream into `window`-byte chunks (the last one may be shorter),
/// never crossing stream boundaries. With a `budget`, stop once that many
/// bytes have been emitted, truncating the final chunk.
pub fn chunk_streams(streams: &[OriginStream], window: usize, budget: Option<u64>) -> Vec<Chunk> {
    assert!(window >= 1, "window must be positive");
    let mut left = budget.unwrap_or(u64::MAX);
    let mut out = Vec::new();
    'streams: for s in streams {
        for (i, piece) in s.bytes.chunks(window).enumerate() {
            if left == 0 {
                break 'streams;
            }
            let take = piece.len().min(usize::try_from(left).unwrap_or(usize::MAX));
            left -= take as u64;
            out.push(Chunk {
                origin: s.id.clone(),
                offset: i * window,
                data: piece[..take].into(),
                modality: Some(s.modality),
            });
        }
    }
    out
}

/// Concatenate chunks back into per-origin byte strings (by offset).
pub fn reassemble(chunks: &[Chunk]) -> BTreeMap<String, Vec<u8>> {
    let mut by_origin: BTreeMap<String, Vec<&Chunk>> = BTreeMap::new();
    for c in chunks {
        by_origin.entry(c.origin.clone()).or_default().push(c);
    }
    by_origin
        .into_iter()
        .map(|(k, mut cs)| {
            cs.sort_by_key(|c| c.offset);
            (k, cs.iter().flat_map(|c| c.data.iter().copied()).collect())
        })
        .collect()
}

pub fn write_chunks(mut w: impl Write, chunks: &[Chunk]) -> std::io::Result<()> {
    for c in chunks {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_chunks(r: impl BufRead) -> Result<Vec<Chunk>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::from("<chunks>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let c = serde_json::from_str(&line).map_err(|e| CorpusError::ChunkFormat {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(c);
    }
    Ok(out)
}
