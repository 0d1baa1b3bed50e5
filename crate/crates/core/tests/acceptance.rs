//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
//! the binary exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use kcomp::codec::*;
use kcomp::corpus::*;
use kcomp::dsl::{
    execute, execute_with_feedback, parse_program, ByteSeq, FunctionClass, Program,
    DEFAULT_STEP_BUDGET,
};
use kcomp::harness::baselines::{gzip_joined_cr, gzip_per_chunk_cr, Framing};
use kcomp::harness::pyrunner::NoRunner;
use kcomp::harness::*;
use kcomp::par;
use kcomp::sampler::*;
use rand::{Rng, RngCore, SeedableRng};

#[path = "common/gold.rs"]
mod gold;

const MB: usize = 1 << 20;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

// ---------------------------------------------------------------------------

fn golden_reproduction() -> Result<String, String> {
    let p = parse_program(gold::GOLD_PROGRAM).map_err(|e| e.to_string())?;
    let out = execute(&p, DEFAULT_STEP_BUDGET).map_err(|e| e.to_string())?;
    ensure(out[..] == gold::GOLD_SEQUENCE[..], || {
        "output differs from the recorded sequence".into()
    })?;
    let trace = execute_with_feedback(&p, DEFAULT_STEP_BUDGET);
    let comments: Vec<&str> = gold::GOLD_PROGRAM
        .lines()
        .map(|l| l.split_once('#').unwrap().1.trim())
        .collect();
    let mut matched = 0;
    for (i, (_, v)) in trace.iter().enumerate() {
        let rendered = abbreviate(v.as_ref().map_err(|e| e.to_string())?);
        let expected = match gold::ANNOTATION_ERRATA.iter().find(|e| e.0 == i) {
            Some(&(_, printed, implied)) => {
                ensure(comments[i] == printed, || {
                    format!("line {i}: erratum no longer applies")
                })?;
                implied
            }
            None => comments[i],
        };
        ensure(rendered == expected, || {
            format!("line {i}: {rendered} != {expected}")
        })?;
        matched += 1;
    }
    ensure(abbreviate(&out) == comments[comments.len() - 1], || {
        "output annotation differs".into()
    })?;
    Ok(format!(
        "{} bytes, {} line values ({} known annotation errata)",
        out.len(),
        matched + 1,
        gold::ANNOTATION_ERRATA.len()
    ))
}

fn initiator_count(p: &Program) -> usize {
    p.lines()
        .iter()
        .filter(|f| f.kind().class() == FunctionClass::Initiator)
        .count()
}

fn sampler_statistics() -> Result<String, String> {
    let cfg = SamplerConfig::default();
    let pairs = sample_batch(&cfg, 0, 10_000).map_err(|e| e.to_string())?;
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|r| r.seq_len as f64).sum::<f64>() / n;
    let std = (pairs
        .iter()
        .map(|r| (r.seq_len as f64 - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let mut counts = [0u32; 5];
    for r in &pairs {
        let k = initiator_count(&r.program);
        ensure((1..=5).contains(&k), || {
            format!("program with {k} initiators")
        })?;
        counts[k - 1] += 1;
    }
    let expected = n / 5.0;
    let sigma = (n * 0.2 * 0.8).sqrt();
    ensure(within(mean, 75.9, 8.0), || format!("mean length {mean:.1}"))?;
    ensure(within(std, 73.7, 15.0), || format!("std {std:.1}"))?;
    ensure(
        counts
            .iter()
            .all(|&c| within(c as f64, expected, 3.0 * sigma)),
        || {
            format!(
                "initiator counts {counts:?} vs {expected} ± {:.0}",
                3.0 * sigma
            )
        },
    )?;
    Ok(format!(
        "mean {mean:.1}, std {std:.1}, initiator counts {counts:?}"
    ))
}

/// Order-1 source over {0,1,2,3}: next = (prev + d) mod 4 with d drawn from
/// `STEP_PROBS`.
const STEP_PROBS: [f64; 4] = [0.5, 0.25, 0.125, 0.125];

fn order1_source(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0u8; n];
    for i in 1..n {
        let d = match rng.random_range(0..8u32) {
            0..=3 => 0,
            4 | 5 => 1,
            6 => 2,
            _ => 3,
        };
        x[i] = (x[i - 1] + d) % 4;
    }
    x
}

fn random_bytes(n: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rand_chacha::ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

fn codec_round_trip() -> Result<String, String> {
    let cfg = SamplerConfig {
        seed: 17,
        ..SamplerConfig::default()
    };
    let m = cfg.prior();
    let pairs = sample_batch(&cfg, 0, 10_000).map_err(|e| e.to_string())?;
    let failures: Vec<String> = par::map(&pairs, |r| {
        let bits = encode_program(&r.program, &m).map_err(|e| e.to_string())?;
        let bound = program_bit_cost(&r.program, &m)
            .map_err(|e| e.to_string())?
            .ceil()
            + 2.0;
        if bits.bit_len() as f64 > bound {
            return Err(format!("{} bits > {bound}", bits.bit_len()));
        }
        match decode_program(&bits, &m) {
            Ok(p) if p == r.program => Ok(()),
            Ok(_) => Err("decoded a different program".into()),
            Err(e) => Err(e.to_string()),
        }
    })
    .into_iter()
    .filter_map(Result::err)
    .collect();
    ensure(failures.is_empty(), || {
        format!(
            "{} program failures, first: {}",
            failures.len(),
            failures[0]
        )
    })?;

    // Mixed corpus: synthetic sequences (half with their programs), text-like
    // bytes, order-1 symbols and noise, in uneven chunk sizes.
    let mut chunks: Vec<ByteSeq> = Vec::new();
    let mut cands: Vec<Option<Program>> = Vec::new();
    let mut total = 0;
    for (i, r) in sample_batch(
        &SamplerConfig {
            seed: 18,
            ..cfg.clone()
        },
        0,
        20_000,
    )
    .map_err(|e| e.to_string())?
    .into_iter()
    .enumerate()
    {
        if total >= MB / 2 {
            break;
        }
        total += r.seq_len;
        chunks.push(r.sequence);
        cands.push((i % 2 == 0).then_some(r.program));
    }
    let text: Vec<u8> = b"It was the best of times, it was the worst of times; "
        .iter()
        .copied()
        .cycle()
        .take(MB / 6)
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
    for source in [text, order1_source(MB / 6, 20), random_bytes(MB / 6, 21)] {
        let mut rest = &source[..];
        while !rest.is_empty() {
            let k = rng.random_range(1..=300).min(rest.len());
            chunks.push(rest[..k].to_vec().into());
            cands.push(None);
            total += k;
            rest = &rest[k..];
        }
    }
    ensure(total >= MB, || format!("corpus only {total} bytes"))?;
    let stream = compress_container(&chunks, &cands, &m).map_err(|e| e.to_string())?;
    let back = decompress_container(&stream, &m).map_err(|e| e.to_string())?;
    ensure(back == chunks, || "container round trip differs".into())?;
    Ok(format!(
        "{} programs; container {} chunks, {total} bytes -> {:.3} CR",
        pairs.len(),
        chunks.len(),
        stream.bit_len() as f64 / (8 * total) as f64
    ))
}

fn coder_optimality() -> Result<String, String> {
    let entropy: f64 = STEP_PROBS.iter().map(|p| -p * p.log2()).sum();
    let x = order1_source(MB, 7);
    let s = lm_compress(&x, &mut AdaptiveContextModel::new(1));
    let rate = (s.bit_len() - LM_HEADER_BITS) as f64 / x.len() as f64;
    ensure(within(rate / entropy, 1.0, 0.01), || {
        format!("{rate:.4} bits/byte vs entropy {entropy}")
    })?;
    ensure(
        lm_decompress(&s, &mut AdaptiveContextModel::new(1)).as_deref() == Ok(&x[..]),
        || "decode differs".into(),
    )?;

    let noise = random_bytes(MB, 8);
    let s = lm_compress(&noise, &mut AdaptiveContextModel::new(0));
    let cr = s.bit_len() as f64 / (8 * noise.len()) as f64;
    ensure(within(cr, 1.0, 0.02), || format!("uniform CR {cr:.4}"))?;
    Ok(format!(
        "order-1 source {rate:.4} bits/byte (entropy {entropy}), uniform CR {cr:.4}"
    ))
}

fn gzip_baselines() -> Result<String, String> {
    let cfg = SamplerConfig {
        seed: 2,
        ..SamplerConfig::default()
    };
    let corpus = sample_corpus(&cfg, 1, MB as u64).map_err(|e| e.to_string())?;
    let seqs: Vec<&[u8]> = corpus.eval.iter().map(|r| r.sequence.as_slice()).collect();
    let cr = gzip_joined_cr(&seqs, Framing::DecimalComma);
    let raw = gzip_joined_cr(&seqs, Framing::RawNewline);
    ensure(within(cr, 0.593, 0.08), || {
        format!("synthetic gzip CR {cr:.3}")
    })?;
    let dna = match std::env::var_os("KCOMP_DNA_FASTA") {
        Some(path) => {
            let (stream, _) = load_fasta(Path::new(&path)).map_err(|e| e.to_string())?;
            let stream = OriginStream {
                bytes: stream.bytes.as_slice()[..MB.min(stream.bytes.len())]
                    .to_vec()
                    .into(),
                ..stream
            };
            let dna_cr = gzip_per_chunk_cr(&chunk_streams(&[stream], 128, None));
            ensure(within(dna_cr, 0.714, 0.05), || {
                format!("DNA gzip CR {dna_cr:.3}")
            })?;
            format!("DNA {dna_cr:.3}")
        }
        None => {
            println!("notice: DNA gzip check skipped; set KCOMP_DNA_FASTA to a GRCh38 FASTA file to run it");
            "DNA skipped".into()
        }
    };
    Ok(format!(
        "synthetic {cr:.3} (raw-byte framing {raw:.3}), {dna}"
    ))
}

fn upper_bound() -> Result<String, String> {
    let cfg = SamplerConfig::default();
    let corpus = sample_corpus(&cfg, 1, MB as u64).map_err(|e| e.to_string())?;
    let report = upper_bound_baseline(&corpus.eval, &cfg.prior());
    let o = &report.overall;
    ensure(o.n_correct == o.n_chunks, || {
        format!("{} of {} gold programs correct", o.n_correct, o.n_chunks)
    })?;
    ensure(o.corpus_cr <= 0.45, || {
        format!("corpus CR {:.3}", o.corpus_cr)
    })?;
    let precision = o.mean_precision.ok_or("no precision")?;
    ensure(precision < 1.0, || format!("mean precision {precision:.3}"))?;
    Ok(format!(
        "{} chunks, {} bytes, corpus CR {:.3}, mean precision {precision:.3}",
        o.n_chunks, o.total_bytes, o.corpus_cr
    ))
}

fn metric_oracle() -> Result<String, String> {
    fn chunk(origin: &str, data: Vec<u8>) -> Chunk {
        Chunk {
            origin: origin.into(),
            offset: 0,
            data: data.into(),
            modality: Some(Modality::Synthetic),
        }
    }
    fn cand(c: &Chunk, payload: Payload) -> Candidate {
        Candidate {
            origin: c.origin.clone(),
            offset: c.offset,
            payload,
            provenance: serde_json::Value::Null,
        }
    }
    fn dsl(c: &Chunk, code: &str) -> Candidate {
        cand(c, Payload::Dsl { code: code.into() })
    }
    fn gzip_bits(data: &[u8]) -> u64 {
        use std::io::Write;
        let mut e = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::new(9));
        e.write_all(data).unwrap();
        8 * e.finish().unwrap().len() as u64
    }
    // cr = (1 + program bits) / 8L when correct, (1 + 8L) / 8L otherwise.
    fn naive(data: &[u8], correct: bool, program_bits: u64) -> (f64, Option<f64>) {
        let raw = 8.0 * data.len() as f64;
        if correct {
            (
                (1.0 + program_bits as f64) / raw,
                Some(program_bits as f64 / gzip_bits(data) as f64),
            )
        } else {
            ((1.0 + raw) / raw, None)
        }
    }

    let runner = NoRunner;
    let ctx = ScoreContext::new(&runner);
    let gz = ScoreContext {
        prior: PriorKind::Gzip,
        ..ScoreContext::new(&runner)
    };
    let one = chunk("one", vec![7]);
    let ramp = chunk("ramp", (0..128).collect());
    let small = chunk("small", vec![1, 2, 3]);
    let ramp_code = "a = range_up(0, 127)\noutput = a";
    // Uniform-prior costs: 2·log2(24) + 16 bits, rounded up.
    let cases: Vec<(&Chunk, EvalRecord, bool, u64)> = vec![
        (&one, score(&one, None, &ctx), false, 0),
        (
            &one,
            score(
                &one,
                Some(&dsl(&one, "a = repeat_num(1, 8)\noutput = a")),
                &ctx,
            ),
            false,
            0,
        ),
        (&ramp, score(&ramp, None, &ctx), false, 0),
        (
            &ramp,
            score(&ramp, Some(&dsl(&ramp, ramp_code)), &ctx),
            true,
            26,
        ),
        (
            &ramp,
            score(&ramp, Some(&dsl(&ramp, ramp_code)), &gz),
            true,
            gzip_bits(ramp_code.as_bytes()),
        ),
        (
            &ramp,
            score(&ramp, Some(&dsl(&ramp, "a = range_up(0,")), &ctx),
            false,
            0,
        ),
        (
            &one,
            score(
                &one,
                Some(&dsl(
                    &one,
                    "a = repeat_num(2, 200)\nb = scan_add(a)\noutput = b",
                )),
                &ctx,
            ),
            false,
            0,
        ),
        (
            &small,
            score(
                &small,
                Some(&dsl(&small, "a = range_up(1, 3)\noutput = a")),
                &ctx,
            ),
            true,
            26,
        ),
        (
            &small,
            score(
                &small,
                Some(&cand(
                    &small,
                    Payload::Python {
                        code: "print([1, 2, 3])".into(),
                    },
                )),
                &ctx,
            ),
            false,
            0,
        ),
        (
            &small,
            score(
                &small,
                Some(&cand(
                    &small,
                    Payload::Unparsed {
                        reason: "no code".into(),
                    },
                )),
                &ctx,
            ),
            false,
            0,
        ),
    ];
    for (i, (c, rec, correct, bits)) in cases.iter().enumerate() {
        let (cr, precision) = naive(&c.data, *correct, *bits);
        ensure(rec.acc == u8::from(*correct), || {
            format!("case {i}: acc {}", rec.acc)
        })?;
        ensure(rec.cr == cr, || format!("case {i}: cr {} != {cr}", rec.cr))?;
        ensure(rec.precision == precision, || {
            format!("case {i}: precision {:?} != {precision:?}", rec.precision)
        })?;
    }
    ensure(
        cases[0].1.cr == 9.0 / 8.0 && cases[2].1.cr == 1025.0 / 1024.0,
        || "back-off CR not exact".into(),
    )?;
    let records: Vec<EvalRecord> = cases.into_iter().map(|c| c.1).collect();
    let agg = aggregate(&records);
    let num: u64 = records.iter().map(|r| 1 + r.bits_y).sum();
    let den: u64 = records.iter().map(|r| 8 * r.len as u64).sum();
    ensure(agg.corpus_cr == num as f64 / den as f64, || {
        format!("corpus CR {}", agg.corpus_cr)
    })?;
    ensure(agg.acc == 30.0, || format!("acc {}", agg.acc))?;
    Ok(format!(
        "10 cases; back-off CR 9/8 and 1025/1024; corpus CR {:.4}",
        agg.corpus_cr
    ))
}

fn ingestion_losslessness() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let err = |e: CorpusError| e.to_string();

    let text = "Ünïcode text\r\nwith CRLF, tabs\tand emoji \u{1F9EC}\n"
        .repeat(500)
        .into_bytes();
    std::fs::write(d.join("t.txt"), &text).map_err(|e| e.to_string())?;
    let t = load_text(&d.join("t.txt"), None).map_err(err)?;
    ensure(t.bytes.as_slice() == &text[..], || "text differs".into())?;

    let samples: Vec<i16> = (0..20_000i32)
        .map(|i| ((i * 7919) % 65_536 - 32_768) as i16)
        .collect();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(d.join("a.wav"), spec).map_err(|e| e.to_string())?;
    for &s in &samples {
        w.write_sample(s).map_err(|e| e.to_string())?;
    }
    w.finalize().map_err(|e| e.to_string())?;
    let a = load_wav_pcm(&d.join("a.wav"), PcmDepth::Bits16).map_err(err)?;
    ensure(pcm16_samples(a.bytes.as_slice()) == samples, || {
        "WAV samples differ".into()
    })?;
    let le: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    ensure(a.bytes.as_slice() == &le[..], || {
        "WAV bytes are not little-endian PCM".into()
    })?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let letters: Vec<u8> = (0..30_000)
        .map(|_| b"ACGTacgt"[rng.random_range(0..8)])
        .collect();
    let mut fasta = b">chr1 synthetic\n".to_vec();
    for line in letters.chunks(60) {
        fasta.extend_from_slice(line);
        fasta.push(b'\n');
    }
    std::fs::write(d.join("g.fa"), &fasta).map_err(|e| e.to_string())?;
    let (g, skipped) = load_fasta(&d.join("g.fa")).map_err(err)?;
    let back: Option<Vec<u8>> = g.bytes.iter().map(|&c| dna_letter(c)).collect();
    ensure(
        skipped == 0 && back.as_deref() == Some(&letters[..]),
        || "FASTA letters differ".into(),
    )?;

    let streams = [t, a, g];
    let chunks = chunk_streams(&streams, 128, None);
    let mut file = Vec::new();
    write_chunks(&mut file, &chunks).map_err(|e| e.to_string())?;
    let read = read_chunks(std::io::BufReader::new(&file[..])).map_err(err)?;
    let rebuilt = reassemble(&read);
    for s in &streams {
        ensure(
            rebuilt.get(&s.id).map(Vec::as_slice) == Some(s.bytes.as_slice()),
            || format!("{} not reassembled", s.id),
        )?;
    }

    // Python candidates are scored without any foreign runtime.
    let runner = NoRunner;
    let c = &chunks[0];
    let rec = score(
        c,
        Some(&Candidate::python(c, "print([1])")),
        &ScoreContext::new(&runner),
    );
    ensure(rec.status == ExecStatus::ExecError && rec.acc == 0, || {
        format!("python without runner: {:?}", rec.status)
    })?;
    Ok(format!(
        "text {} B, WAV {} samples, FASTA {} bases, {} chunks",
        text.len(),
        samples.len(),
        letters.len(),
        chunks.len()
    ))
}

// ---------------------------------------------------------------------------

type Check = fn() -> Result<String, String>;

fn main() {
    // No foreign interpreter may be reached from this suite.
    std::env::set_var("PATH", "");
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, Check, Option<Duration>); 8] = [
        (
            "golden reproduction",
            golden_reproduction,
            Some(Duration::from_secs(1)),
        ),
        (
            "sampler statistics",
            sampler_statistics,
            Some(Duration::from_secs(60)),
        ),
        (
            "codec round trip",
            codec_round_trip,
            Some(Duration::from_secs(120)),
        ),
        ("arithmetic coder optimality", coder_optimality, None),
        ("gzip baseline consistency", gzip_baselines, None),
        ("upper-bound compression", upper_bound, None),
        ("metric oracle", metric_oracle, None),
        ("ingestion losslessness", ingestion_losslessness, None),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or(e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            }
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
