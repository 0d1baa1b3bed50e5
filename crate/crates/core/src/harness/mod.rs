//! Scoring candidate programs against chunks.
//!
//! For a chunk `x` of `L` bytes and a candidate `ρ`:
//!
//! * `acc` is 1 iff `ρ` runs and outputs `x` exactly;
//! * `y = ρ` when correct, otherwise `x` itself (the back-off);
//! * `cr = (1 + ‖y‖) / 8L`, the extra bit saying which of the two `y` is;
//! * `precision = ‖ρ‖ / gzip(x)` for correct candidates only.
//!
//! `‖ρ‖` is the rounded-up uniform-prior cost for DSL programs and the gzip
//! size of the source text for Python (or for everything with
//! [`PriorKind::Gzip`]); `‖x‖` is `8L`. Corpus-level CR is the ratio of sums.

pub mod baselines;
pub mod pyrunner;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::codec::container::container_overhead_bits;
use crate::codec::{deflate_cost, program_bit_cost, PriorCostModel, DEFLATE_LEVEL};
use crate::corpus::{Chunk, Modality};
use crate::dsl::{
    execute, parse_program, render_program, ExecErrorKind, Program, RenderStyle,
    DEFAULT_STEP_BUDGET,
};
use crate::par;
use crate::sampler::PairRecord;
use pyrunner::{PythonRunner, RunOutcome, RunStatus};

/// What a candidate carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    /// DSL program text.
    Dsl { code: String },
    /// Free-form Python assigning `output`.
    Python { code: String },
    /// A response from which no program could be extracted.
    Unparsed { reason: String },
}

/// One candidate program for the chunk at (`origin`, `offset`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub origin: String,
    pub offset: usize,
    #[serde(flatten)]
    pub payload: Payload,
    /// Where the candidate came from (model name, sampling settings, ...).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub provenance: serde_json::Value,
}

impl Candidate {
    pub fn dsl(chunk: &Chunk, program: &Program) -> Self {
        Candidate {
            origin: chunk.origin.clone(),
            offset: chunk.offset,
            payload: Payload::Dsl {
                code: render_program(program, RenderStyle::Canonical),
            },
            provenance: serde_json::Value::Null,
        }
    }

    pub fn python(chunk: &Chunk, code: impl Into<String>) -> Self {
        Candidate {
            origin: chunk.origin.clone(),
            offset: chunk.offset,
            payload: Payload::Python { code: code.into() },
            provenance: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("candidate line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

/// Read a JSON-lines candidate file; blank lines are ignored.
pub fn read_candidates(reader: impl BufRead) -> Result<Vec<Candidate>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| HarnessError::Json {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn write_candidates(
    mut writer: impl Write,
    candidates: &[Candidate],
) -> Result<(), HarnessError> {
    for c in candidates {
        serde_json::to_writer(&mut writer, c).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecStatus {
    Correct,
    WrongOutput,
    ExecError,
    Timeout,
    NonParsing,
    /// No candidate was supplied for the chunk.
    Missing,
}

impl ExecStatus {
    /// Ran to completion and produced a value.
    pub fn is_executable(self) -> bool {
        matches!(self, ExecStatus::Correct | ExecStatus::WrongOutput)
    }
}

/// How candidate programs are charged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// DSL under the uniform prior, Python under gzip.
    #[default]
    Uniform,
    /// Every candidate's source text under gzip.
    Gzip,
}

/// Settings shared by every scored chunk.
pub struct ScoreContext<'a> {
    pub prior: PriorKind,
    pub model: PriorCostModel,
    pub step_budget: u64,
    pub timeout: Duration,
    pub runner: &'a dyn PythonRunner,
}

impl<'a> ScoreContext<'a> {
    pub fn new(runner: &'a dyn PythonRunner) -> Self {
        ScoreContext {
            prior: PriorKind::Uniform,
            model: PriorCostModel::default(),
            step_budget: DEFAULT_STEP_BUDGET,
            timeout: Duration::from_secs(5),
            runner,
        }
    }
}

/// One row of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub origin: String,
    pub offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    pub len: usize,
    /// `dsl`, `python`, `none`, or the name of a baseline.
    pub source: String,
    pub status: ExecStatus,
    /// `‖ρ‖` when the candidate could be costed.
    pub bits_program: Option<u64>,
    pub bits_sequence_raw: u64,
    pub bits_sequence_gzip: u64,
    /// `‖y‖`: the program when correct, the raw sequence otherwise.
    pub bits_y: u64,
    pub acc: u8,
    pub cr: f64,
    pub precision: Option<f64>,
    /// For baselines whose reported precision is a convention, the value
    /// the formula would give.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_formula: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

fn cr(bits_y: u64, len: usize) -> f64 {
    (1 + bits_y) as f64 / (8 * len as u64) as f64
}

struct Outcome {
    status: ExecStatus,
    bits_program: Option<u64>,
    detail: Option<String>,
}

fn exec_dsl(chunk: &Chunk, code: &str, ctx: &ScoreContext) -> Outcome {
    let program = match parse_program(code) {
        Ok(p) => p,
        Err(e) => {
            return Outcome {
                status: ExecStatus::NonParsing,
                bits_program: None,
                detail: Some(e.to_string()),
            }
        }
    };
    let (bits_program, cost_note) = match ctx.prior {
        PriorKind::Uniform => match program_bit_cost(&program, &ctx.model) {
            Ok(bits) => (bits.ceil() as u64, None),
            // Outside the prior's bounds the program can only be shipped as text.
            Err(e) => (
                deflate_cost(code.as_bytes()),
                Some(format!("charged as gzip text: {e}")),
            ),
        },
        PriorKind::Gzip => (deflate_cost(code.as_bytes()), None),
    };
    let (status, detail) = match execute(&program, ctx.step_budget) {
        Ok(out) if out == chunk.data => (ExecStatus::Correct, cost_note),
        Ok(_) => (ExecStatus::WrongOutput, None),
        Err(e) if e.kind == ExecErrorKind::StepBudgetExceeded => {
            (ExecStatus::Timeout, Some(e.to_string()))
        }
        Err(e) => (ExecStatus::ExecError, Some(e.to_string())),
    };
    Outcome {
        status,
        bits_program: Some(bits_program),
        detail,
    }
}

fn exec_python(chunk: &Chunk, code: &str, ctx: &ScoreContext) -> Outcome {
    let bits_program = Some(deflate_cost(code.as_bytes()));
    let (status, detail) = match ctx.runner.run(code, ctx.timeout) {
        RunOutcome::Unavailable(msg) => (ExecStatus::ExecError, Some(msg)),
        RunOutcome::Finished(r) => match r.status {
            RunStatus::Ok => match &r.output {
                Some(out) if out.iter().all(|v| (0..=255).contains(v)) => {
                    let matches = out.len() == chunk.data.len()
                        && out
                            .iter()
                            .zip(chunk.data.iter())
                            .all(|(a, &b)| *a == b as i64);
                    (
                        if matches {
                            ExecStatus::Correct
                        } else {
                            ExecStatus::WrongOutput
                        },
                        None,
                    )
                }
                _ => (
                    ExecStatus::WrongOutput,
                    Some("output is not a list of byte values".into()),
                ),
            },
            RunStatus::BadType => (ExecStatus::WrongOutput, r.stderr),
            RunStatus::Exception | RunStatus::NoOutput => (ExecStatus::ExecError, r.stderr),
            RunStatus::Timeout => (ExecStatus::Timeout, r.stderr),
        },
    };
    Outcome {
        status,
        bits_program,
        detail,
    }
}

/// Score `candidate` (if any) against `chunk`.
pub fn score(chunk: &Chunk, candidate: Option<&Candidate>, ctx: &ScoreContext) -> EvalRecord {
    let len = chunk.data.len();
    let (source, outcome) = match candidate.map(|c| &c.payload) {
        None => (
            "none",
            Outcome {
                status: ExecStatus::Missing,
                bits_program: None,
                detail: None,
            },
        ),
        Some(Payload::Dsl { code }) => ("dsl", exec_dsl(chunk, code, ctx)),
        Some(Payload::Python { code }) => ("python", exec_python(chunk, code, ctx)),
        Some(Payload::Unparsed { reason }) => (
            "none",
            Outcome {
                status: ExecStatus::NonParsing,
                bits_program: None,
                detail: Some(reason.clone()),
            },
        ),
    };
    let raw = 8 * len as u64;
    let gzip = deflate_cost(&chunk.data);
    let correct = outcome.status == ExecStatus::Correct;
    let bits_y = match (correct, outcome.bits_program) {
        (true, Some(b)) => b,
        _ => raw,
    };
    EvalRecord {
        origin: chunk.origin.clone(),
        offset: chunk.offset,
        modality: chunk.modality,
        len,
        source: source.into(),
        status: outcome.status,
        bits_program: outcome.bits_program,
        bits_sequence_raw: raw,
        bits_sequence_gzip: gzip,
        bits_y,
        acc: correct as u8,
        cr: cr(bits_y, len),
        precision: correct.then(|| bits_y as f64 / gzip as f64),
        precision_formula: None,
        detail: outcome.detail,
    }
}

/// The baseline that always answers with the sequence itself.
pub fn repeat_seq_baseline(chunk: &Chunk) -> EvalRecord {
    let len = chunk.data.len();
    let raw = 8 * len as u64;
    let gzip = deflate_cost(&chunk.data);
    EvalRecord {
        origin: chunk.origin.clone(),
        offset: chunk.offset,
        modality: chunk.modality,
        len,
        source: "repeatseq".into(),
        status: ExecStatus::Correct,
        bits_program: Some(raw),
        bits_sequence_raw: raw,
        bits_sequence_gzip: gzip,
        bits_y: raw,
        acc: 1,
        cr: cr(raw, len),
        precision: Some(1.0),
        precision_formula: Some(raw as f64 / gzip as f64),
        detail: None,
    }
}

/// Summary over a set of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_chunks: usize,
    pub total_bytes: u64,
    pub n_correct: usize,
    /// Percentage of chunks solved.
    pub acc: f64,
    /// Mean precision over correct chunks.
    pub mean_precision: Option<f64>,
    /// `Σ(1 + ‖y‖) / Σ 8L`.
    pub corpus_cr: f64,
    /// Mean of the per-chunk CRs.
    pub mean_cr: f64,
    /// Corpus CR including the container header and chunk table.
    pub container_cr: f64,
    /// Percentage of candidates that ran to completion.
    pub pct_executable: f64,
}

/// Sum of floats in a canonical order, so the total does not depend on input order.
fn ordered_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

/// Aggregate `records`; the result does not depend on their order.
pub fn aggregate(records: &[EvalRecord]) -> Aggregate {
    let n = records.len();
    let total_bytes: u64 = records.iter().map(|r| r.len as u64).sum();
    let y_bits: u64 = records.iter().map(|r| 1 + r.bits_y).sum();
    let precisions: Vec<f64> = records.iter().filter_map(|r| r.precision).collect();
    let n_precision = precisions.len();
    let n_correct = records.iter().filter(|r| r.acc == 1).count();
    let executable = records.iter().filter(|r| r.status.is_executable()).count();
    let pct = |k: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * k as f64 / n as f64
        }
    };
    let raw = (8 * total_bytes) as f64;
    Aggregate {
        n_chunks: n,
        total_bytes,
        n_correct,
        acc: pct(n_correct),
        mean_precision: (n_precision > 0).then(|| ordered_sum(precisions) / n_precision as f64),
        corpus_cr: y_bits as f64 / raw,
        mean_cr: if n == 0 {
            0.0
        } else {
            ordered_sum(records.iter().map(|r| r.cr).collect()) / n as f64
        },
        container_cr: (y_bits + container_overhead_bits(n)) as f64 / raw,
        pct_executable: pct(executable),
    }
}

/// Settings echoed into reports (never includes credentials).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub prior: PriorKind,
    pub model: PriorCostModel,
    pub step_budget: u64,
    pub timeout_s: f64,
    pub deflate_level: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub overall: Aggregate,
    pub by_modality: BTreeMap<String, Aggregate>,
    pub records: Vec<EvalRecord>,
}

impl Report {
    pub fn from_records(records: Vec<EvalRecord>, config: ReportConfig) -> Self {
        let mut groups: BTreeMap<String, Vec<EvalRecord>> = BTreeMap::new();
        for r in &records {
            let key = r.modality.map_or("unknown", Modality::name).to_string();
            groups.entry(key).or_default().push(r.clone());
        }
        Report {
            config,
            overall: aggregate(&records),
            by_modality: groups
                .into_iter()
                .map(|(k, v)| (k, aggregate(&v)))
                .collect(),
            records,
        }
    }

    /// One row per modality plus `all`: acc, precision, CR, % executable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "modality,chunks,bytes,acc,precision,corpus_cr,container_cr,pct_executable\n",
        );
        let rows = self
            .by_modality
            .iter()
            .map(|(k, a)| (k.as_str(), a))
            .chain([("all", &self.overall)]);
        for (name, a) in rows {
            let prec = a
                .mean_precision
                .map(|p| format!("{p:.4}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{name},{},{},{:.2},{prec},{:.4},{:.4},{:.2}",
                a.n_chunks, a.total_bytes, a.acc, a.corpus_cr, a.container_cr, a.pct_executable
            );
        }
        out
    }
}

/// Score every chunk against its candidate (first one wins when a chunk has
/// several). Chunks without a candidate back off to the raw sequence.
pub fn run_benchmark(chunks: &[Chunk], candidates: &[Candidate], ctx: &ScoreContext) -> Report {
    let mut by_key: HashMap<(&str, usize), &Candidate> = HashMap::new();
    for c in candidates {
        if by_key.insert((c.origin.as_str(), c.offset), c).is_some() {
            log::warn!(
                "duplicate candidate for {}@{}; keeping the first",
                c.origin,
                c.offset
            );
        }
    }
    // Re-insert in reverse so the first candidate for a key wins.
    for c in candidates.iter().rev() {
        by_key.insert((c.origin.as_str(), c.offset), c);
    }
    let records = par::map(chunks, |chunk| {
        score(chunk, by_key.get(&chunk.key()).copied(), ctx)
    });
    let config = ReportConfig {
        prior: ctx.prior,
        model: ctx.model.clone(),
        step_budget: ctx.step_budget,
        timeout_s: ctx.timeout.as_secs_f64(),
        deflate_level: DEFLATE_LEVEL,
    };
    Report::from_records(records, config)
}

/// Chunks and gold candidates for sampled pairs (`synthetic:<i>` origins).
pub fn pairs_as_chunks(pairs: &[PairRecord]) -> (Vec<Chunk>, Vec<Candidate>) {
    let chunks: Vec<Chunk> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| Chunk {
            origin: format!("synthetic:{i}"),
            offset: 0,
            data: p.sequence.clone(),
            modality: Some(Modality::Synthetic),
        })
        .collect();
    let candidates = chunks
        .iter()
        .zip(pairs)
        .map(|(c, p)| Candidate::dsl(c, &p.program))
        .collect();
    (chunks, candidates)
}

/// Score the generating programs of sampled pairs under the uniform prior.
pub fn upper_bound_baseline(pairs: &[PairRecord], model: &PriorCostModel) -> Report {
    let (chunks, candidates) = pairs_as_chunks(pairs);
    let runner = pyrunner::NoRunner;
    let ctx = ScoreContext {
        model: model.clone(),
        ..ScoreContext::new(&runner)
    };
    run_benchmark(&chunks, &candidates, &ctx)
}
