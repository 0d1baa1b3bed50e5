use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use kcomp::codec::{compress_container, decompress_container, Bitstream, PriorCostModel};
use kcomp::corpus::{chunk_streams, load_many, read_chunks, write_chunks, Chunk, Modality};
use kcomp::dsl::{parse_program, Program, RenderStyle};
use kcomp::harness::baselines::{gzip_joined_cr, gzip_per_chunk_cr, lm_per_chunk_cr, Framing};
use kcomp::harness::pyrunner::{NoRunner, ProcessRunner, PythonRunner};
use kcomp::harness::{
    read_candidates, repeat_seq_baseline, run_benchmark, Payload, PriorKind, Report, ReportConfig,
    ScoreContext,
};
use kcomp::llm_client::{
    fetch_candidates, EndpointConfig, PromptVariant, RetryPolicy, UreqTransport,
};
use kcomp::sampler::{emit_training_pairs, sample_corpus, Feedback, PairRecord, SamplerConfig};

#[derive(Parser)]
#[command(name = "kcomp", version, about = "Compression by program synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample program/sequence pairs into train.jsonl and eval.jsonl.
    Sample(SampleArgs),
    /// Cut source files into fixed-size chunks.
    Ingest(IngestArgs),
    /// Score candidates against chunks and write a report.
    Eval(EvalArgs),
    /// Ask a chat-completion endpoint for candidate programs.
    Fetch(FetchArgs),
    /// Classical compression ratios for a chunk file.
    Baselines(BaselinesArgs),
    /// Pack chunks (and any DSL candidates) into a container.
    Compress(CompressArgs),
    /// Unpack a container, writing the chunks' bytes back to back.
    Decompress(DecompressArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackArg {
    None,
    Inline,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Canonical,
    Alias,
}

#[derive(clap::Args)]
struct SampleArgs {
    #[arg(long)]
    n: usize,
    /// Overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Bytes of sequence to reserve for the eval split.
    #[arg(long, default_value_t = 0)]
    eval_bytes: u64,
    #[arg(long, value_enum, default_value_t = FeedbackArg::None)]
    feedback: FeedbackArg,
    #[arg(long, value_enum, default_value_t = StyleArg::Canonical)]
    style: StyleArg,
    /// TOML file with SamplerConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct IngestArgs {
    #[arg(long)]
    modality: Modality,
    #[arg(long, default_value_t = 128)]
    window: usize,
    /// Stop after this many bytes of chunks.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Uniform,
    Gzip,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Repeatseq,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    chunks: PathBuf,
    /// Candidate file; chunks without a candidate back off to the raw sequence.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Score a built-in baseline instead of candidates.
    #[arg(long, value_enum, conflicts_with = "candidates")]
    baseline: Option<BaselineArg>,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    prior: PriorArg,
    /// Seconds per Python candidate.
    #[arg(long, default_value_t = 5.0)]
    timeout: f64,
    /// Command speaking the runner protocol, e.g. "python3 runner.py".
    #[arg(long)]
    runner: Option<String>,
    #[arg(long, default_value_t = 4)]
    runner_concurrency: usize,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Plain,
    Cot,
}

#[derive(clap::Args)]
struct FetchArgs {
    #[arg(long)]
    chunks: PathBuf,
    /// Base URL of an OpenAI-compatible API, e.g. http://localhost:8000/v1.
    #[arg(long)]
    endpoint: String,
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value_t = VariantArg::Plain)]
    variant: VariantArg,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "KCOMP_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1024)]
    max_tokens: u32,
    /// Seconds per request.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 5)]
    max_retries: u32,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    /// Appended to; chunks already answered are skipped.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct BaselinesArgs {
    #[arg(long)]
    chunks: PathBuf,
}

#[derive(clap::Args)]
struct CompressArgs {
    #[arg(long)]
    chunks: PathBuf,
    /// DSL candidates to use where they reproduce the chunk more cheaply.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct DecompressArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Sample(a) => sample(a),
        Command::Ingest(a) => ingest(a),
        Command::Eval(a) => eval(a),
        Command::Fetch(a) => fetch(a),
        Command::Baselines(a) => baselines(a),
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_chunks(path: &Path) -> Result<Vec<Chunk>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_chunks(BufReader::new(f))?)
}

fn write_pairs(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    let mut w = create(path)?;
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SamplerConfig::from_toml_str(&fs::read_to_string(p)?)
            .with_context(|| format!("{}", p.display()))?,
        None => SamplerConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let corpus = sample_corpus(&cfg, a.n, a.eval_bytes)?;
    fs::create_dir_all(&a.out)?;
    write_pairs(&a.out.join("train.jsonl"), &corpus.train)?;
    write_pairs(&a.out.join("eval.jsonl"), &corpus.eval)?;
    let feedback = match a.feedback {
        FeedbackArg::None => Feedback::None,
        FeedbackArg::Inline => Feedback::Inline,
    };
    let style = match a.style {
        StyleArg::Canonical => RenderStyle::Canonical,
        StyleArg::Alias => RenderStyle::Alias,
    };
    fs::write(
        a.out.join("train_text.jsonl"),
        emit_training_pairs(&corpus.train, feedback, style),
    )?;
    log::info!(
        "wrote {} train and {} eval pairs to {}",
        corpus.train.len(),
        corpus.eval.len(),
        a.out.display()
    );
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    if a.window == 0 {
        bail!("--window must be positive");
    }
    let streams = load_many(&a.inputs, a.modality)?;
    let chunks = chunk_streams(&streams, a.window, a.budget);
    let mut w = create(&a.out)?;
    write_chunks(&mut w, &chunks)?;
    w.flush()?;
    log::info!("wrote {} chunks from {} files", chunks.len(), streams.len());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let chunks = load_chunks(&a.chunks)?;
    let runner: Box<dyn PythonRunner> = match &a.runner {
        Some(cmd) => {
            let parts: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if parts.is_empty() {
                bail!("--runner is empty");
            }
            Box::new(ProcessRunner::new(parts, a.runner_concurrency))
        }
        None => Box::new(NoRunner),
    };
    let mut ctx = ScoreContext::new(runner.as_ref());
    ctx.prior = match a.prior {
        PriorArg::Uniform => PriorKind::Uniform,
        PriorArg::Gzip => PriorKind::Gzip,
    };
    ctx.timeout = Duration::from_secs_f64(a.timeout);
    let report = match a.baseline {
        Some(BaselineArg::Repeatseq) => {
            let records = chunks.iter().map(repeat_seq_baseline).collect();
            Report::from_records(
                records,
                ReportConfig {
                    prior: ctx.prior,
                    model: ctx.model.clone(),
                    step_budget: ctx.step_budget,
                    timeout_s: a.timeout,
                    deflate_level: kcomp::codec::DEFLATE_LEVEL,
                },
            )
        }
        None => {
            let candidates = match &a.candidates {
                Some(p) => read_candidates(BufReader::new(
                    File::open(p).with_context(|| format!("{}", p.display()))?,
                ))?,
                None => Vec::new(),
            };
            run_benchmark(&chunks, &candidates, &ctx)
        }
    };
    let mut w = create(&a.report)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.flush()?;
    let csv = report.to_csv();
    if let Some(p) = &a.csv {
        fs::write(p, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

fn fetch(a: FetchArgs) -> Result<()> {
    let chunks = load_chunks(&a.chunks)?;
    let endpoint = EndpointConfig {
        base_url: a.endpoint,
        model: a.model,
        api_key_env: a.api_key_env,
        temperature: a.temperature,
        max_tokens: a.max_tokens,
        timeout_s: a.timeout,
        retry: RetryPolicy {
            max_retries: a.max_retries,
            ..RetryPolicy::default()
        },
    };
    let variant = match a.variant {
        VariantArg::Plain => PromptVariant::Plain,
        VariantArg::Cot => PromptVariant::Cot,
    };
    let transport = UreqTransport::new(endpoint.timeout());
    let summary = fetch_candidates(
        &chunks,
        &endpoint,
        variant,
        a.concurrency,
        &transport,
        &a.out,
    )?;
    log::info!(
        "{} written, {} already present, {} failed",
        summary.written,
        summary.skipped,
        summary.failed.len()
    );
    for (origin, offset, msg) in &summary.failed {
        eprintln!("failed {origin}@{offset}: {msg}");
    }
    Ok(())
}

fn baselines(a: BaselinesArgs) -> Result<()> {
    let chunks = load_chunks(&a.chunks)?;
    let seqs: Vec<&[u8]> = chunks.iter().map(|c| &c.data[..]).collect();
    println!("gzip per chunk        {:.4}", gzip_per_chunk_cr(&chunks));
    println!(
        "gzip joined (raw)     {:.4}",
        gzip_joined_cr(&seqs, Framing::RawNewline)
    );
    println!(
        "gzip joined (decimal) {:.4}",
        gzip_joined_cr(&seqs, Framing::DecimalComma)
    );
    for order in 0..=2 {
        println!(
            "order-{order} model        {:.4}",
            lm_per_chunk_cr(&chunks, order)
        );
    }
    Ok(())
}

/// Container files hold the stream's bit length (u64 LE) followed by its bytes.
fn compress(a: CompressArgs) -> Result<()> {
    let chunks = load_chunks(&a.chunks)?;
    let mut programs: Vec<Option<Program>> = vec![None; chunks.len()];
    if let Some(p) = &a.candidates {
        let candidates = read_candidates(BufReader::new(File::open(p)?))?;
        for (i, c) in chunks.iter().enumerate() {
            let code = candidates.iter().find_map(|cand| match &cand.payload {
                Payload::Dsl { code } if (cand.origin.as_str(), cand.offset) == c.key() => {
                    Some(code)
                }
                _ => None,
            });
            programs[i] = code.and_then(|code| parse_program(code).ok());
        }
    }
    let data: Vec<_> = chunks.into_iter().map(|c| c.data).collect();
    let stream = compress_container(&data, &programs, &PriorCostModel::default())?;
    let mut w = create(&a.out)?;
    w.write_all(&stream.bit_len().to_le_bytes())?;
    w.write_all(stream.bytes())?;
    w.flush()?;
    let raw: usize = data.iter().map(|d| d.len()).sum();
    log::info!(
        "{} bytes -> {} bits ({:.4} of raw)",
        raw,
        stream.bit_len(),
        stream.bit_len() as f64 / (8 * raw.max(1)) as f64
    );
    Ok(())
}

fn decompress(a: DecompressArgs) -> Result<()> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if bytes.len() < 8 {
        bail!("{}: not a container file", a.input.display());
    }
    let bit_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let stream = Bitstream::from_parts(bytes[8..].to_vec(), bit_len)
        .context("bit length does not match file size")?;
    let chunks = decompress_container(&stream, &PriorCostModel::default())?;
    let mut w = create(&a.out)?;
    for c in &chunks {
        w.write_all(c)?;
    }
    w.flush()?;
    Ok(())
}
