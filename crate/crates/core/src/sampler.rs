//! Random program/sequence pairs drawn from the DSL.
//!
//! A program is grown in four stages: initiators, non-arithmetic modifiers,
//! arithmetic modifiers and filters, then a left fold of mergers over the
//! shuffled pool until a single sequence remains. Every candidate operation is
//! run through the interpreter and only kept if it succeeds, yields a
//! non-empty result and actually changes its input.
//!
//! Sample `i` of a corpus is drawn from its own ChaCha stream, so results do
//! not depend on how the work is split across threads.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{program_bit_cost, PriorCostModel};
use crate::dsl::{
    apply, execute, execute_with_feedback, parse_program, render_lines, ByteSeq, Function,
    FunctionKind, LineRef, Program, RenderStyle, DEFAULT_STEP_BUDGET,
};
use crate::par;

/// Sampling hyperparameters. Inclusive ranges are written `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_initiators: [u32; 2],
    /// Length of each initiated sequence.
    pub fixed_len: [u32; 2],
    pub p_nonmath_modifier: f64,
    pub p_reuse_original: f64,
    pub p_substitute_exclude_original: f64,
    pub p_math_modifier: f64,
    pub p_math_merger: f64,
    pub p_concatenate: f64,
    pub p_interleave: f64,
    pub byte_size: u32,
    pub max_repetitions: u32,
    pub max_list_len: u32,
    pub max_step: u32,
    /// Times argument of `repeat_list`.
    pub repeat_list_times: [u32; 2],
    /// Longest sequence any line may produce; longer candidates are rejected.
    pub max_seq_len: u32,
    /// Keep the input of an arithmetic modifier or filter as a separate pool
    /// entry with this probability.
    pub p_reuse_math_original: f64,
    /// Relative weights of set_list, range_up, range_up_step and repeat_num
    /// when drawing an initiator.
    pub initiator_weights: [f64; 4],
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_initiators: [1, 5],
            fixed_len: [5, 25],
            p_nonmath_modifier: 0.4,
            p_reuse_original: 0.2,
            p_substitute_exclude_original: 0.25,
            p_math_modifier: 0.4,
            p_math_merger: 0.4,
            p_concatenate: 0.8,
            p_interleave: 0.2,
            byte_size: 8,
            max_repetitions: 25,
            max_list_len: 25,
            max_step: 8,
            repeat_list_times: [2, 16],
            initiator_weights: [0.7, 1.0, 1.0, 1.0],
            max_seq_len: 512,
            p_reuse_math_original: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("sampler exhausted after {attempts} attempts")]
    Exhausted { attempts: u64 },
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

impl SamplerConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, SamplerError> {
        let cfg: SamplerConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.into()));
        let probs = [
            self.p_nonmath_modifier,
            self.p_reuse_original,
            self.p_substitute_exclude_original,
            self.p_math_modifier,
            self.p_math_merger,
            self.p_concatenate,
            self.p_interleave,
            self.p_reuse_math_original,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if (self.p_concatenate + self.p_interleave - 1.0).abs() > 1e-9 {
            return bad("p_concatenate + p_interleave must equal 1");
        }
        for (name, [lo, hi]) in [
            ("n_initiators", self.n_initiators),
            ("fixed_len", self.fixed_len),
            ("repeat_list_times", self.repeat_list_times),
        ] {
            if lo == 0 || lo > hi {
                return bad(&format!(
                    "{name} must be a non-empty range of positive integers"
                ));
            }
        }
        if self.byte_size != 8 {
            return bad("only byte_size = 8 is supported");
        }
        if self.fixed_len[1] > self.max_list_len || self.fixed_len[1] > self.max_repetitions {
            return bad("fixed_len exceeds max_list_len or max_repetitions");
        }
        if self.repeat_list_times[1] > self.max_repetitions {
            return bad("repeat_list_times exceeds max_repetitions");
        }
        let w = self.initiator_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return bad("initiator_weights must be non-negative with a positive sum");
        }
        if self.max_step < 2 {
            return bad("max_step must be at least 2");
        }
        Ok(())
    }

    /// The uniform prior whose bounds match this config.
    pub fn prior(&self) -> PriorCostModel {
        PriorCostModel {
            byte_size: self.byte_size,
            max_num_repetitions: self.max_repetitions,
            max_list_len: self.max_list_len,
            max_step: self.max_step,
            ..PriorCostModel::default()
        }
    }
}

/// A program with its output and prior cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PairRepr", try_from = "PairRepr")]
pub struct PairRecord {
    pub program: Program,
    pub sequence: ByteSeq,
    pub bit_cost: f64,
    pub seq_len: usize,
}

#[derive(Serialize, Deserialize)]
struct PairRepr {
    sequence: ByteSeq,
    program: String,
    bit_cost: f64,
    seq_len: usize,
}

impl From<PairRecord> for PairRepr {
    fn from(r: PairRecord) -> Self {
        PairRepr {
            program: crate::dsl::render_program(&r.program, RenderStyle::Canonical),
            sequence: r.sequence,
            bit_cost: r.bit_cost,
            seq_len: r.seq_len,
        }
    }
}

impl TryFrom<PairRepr> for PairRecord {
    type Error = String;

    fn try_from(r: PairRepr) -> Result<Self, String> {
        let program = parse_program(&r.program).map_err(|e| e.to_string())?;
        let out = execute(&program, DEFAULT_STEP_BUDGET).map_err(|e| e.to_string())?;
        if out != r.sequence || r.seq_len != out.len() {
            return Err("program does not produce the recorded sequence".into());
        }
        Ok(PairRecord {
            program,
            sequence: r.sequence,
            bit_cost: r.bit_cost,
            seq_len: r.seq_len,
        })
    }
}

impl PairRecord {
    /// Execute and cost `program`; `None` if it fails or is outside the prior.
    pub fn from_program(program: Program, prior: &PriorCostModel) -> Option<Self> {
        let sequence = execute(&program, DEFAULT_STEP_BUDGET).ok()?;
        let bit_cost = program_bit_cost(&program, prior).ok()?;
        let seq_len = sequence.len();
        Some(PairRecord {
            program,
            sequence,
            bit_cost,
            seq_len,
        })
    }
}

const MAX_RETRIES: u32 = 100;

/// Draw one pair, retrying dead ends up to 100 times.
pub fn sample_program(cfg: &SamplerConfig, rng: &mut impl Rng) -> Result<PairRecord, SamplerError> {
    cfg.validate()?;
    let prior = cfg.prior();
    for _ in 0..MAX_RETRIES {
        if let Some(p) = Builder::new(cfg, rng).build() {
            if let Some(rec) = PairRecord::from_program(p, &prior) {
                if !rec.sequence.is_empty() {
                    return Ok(rec);
                }
            }
        }
    }
    Err(SamplerError::Exhausted {
        attempts: MAX_RETRIES as u64,
    })
}

/// The RNG for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample `index` of the stream defined by `cfg.seed`.
pub fn sample_nth(cfg: &SamplerConfig, index: u64) -> Result<PairRecord, SamplerError> {
    sample_program(cfg, &mut sample_rng(cfg.seed, index))
}

/// Samples `start..end` of the seeded stream (in parallel when enabled).
pub fn sample_batch(
    cfg: &SamplerConfig,
    start: u64,
    end: u64,
) -> Result<Vec<PairRecord>, SamplerError> {
    cfg.validate()?;
    par::map_range(start, end, |i| sample_nth(cfg, i))
        .into_iter()
        .collect()
}

struct Builder<'a, R> {
    cfg: &'a SamplerConfig,
    rng: &'a mut R,
    lines: Vec<Function>,
    values: Vec<ByteSeq>,
}

const NONMATH_MODIFIERS: [FunctionKind; 7] = [
    FunctionKind::Substitute,
    FunctionKind::ReverseList,
    FunctionKind::Subseq,
    FunctionKind::SubseqStep,
    FunctionKind::RepeatList,
    FunctionKind::MaxN,
    FunctionKind::MinN,
];

const MATH_MODIFIERS: [FunctionKind; 7] = [
    FunctionKind::AddConst,
    FunctionKind::SubConst,
    FunctionKind::ModConst,
    FunctionKind::ScanAdd,
    FunctionKind::FilterEven,
    FunctionKind::FilterOdd,
    FunctionKind::FilterNonzero,
];

const MATH_MERGERS: [FunctionKind; 3] = [
    FunctionKind::AddLists,
    FunctionKind::SubLists,
    FunctionKind::ModLists,
];

impl<'a, R: Rng> Builder<'a, R> {
    fn new(cfg: &'a SamplerConfig, rng: &'a mut R) -> Self {
        Builder {
            cfg,
            rng,
            lines: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Append `f` if it evaluates to a non-empty sequence.
    fn push(&mut self, f: Function) -> Option<LineRef> {
        let cap = self.cfg.max_seq_len as usize;
        let v = apply(&f, &self.values)
            .ok()
            .filter(|v| !v.is_empty() && v.len() <= cap)?;
        self.lines.push(f);
        self.values.push(v);
        Some(self.lines.len() - 1)
    }

    /// Append a modifier of `src` only if it changes the sequence.
    fn push_modifier(&mut self, f: Function, src: LineRef) -> Option<LineRef> {
        let cap = self.cfg.max_seq_len as usize;
        let v = apply(&f, &self.values)
            .ok()
            .filter(|v| !v.is_empty() && v.len() <= cap && *v != self.values[src])?;
        self.lines.push(f);
        self.values.push(v);
        Some(self.lines.len() - 1)
    }

    fn range(&mut self, [lo, hi]: [u32; 2]) -> u32 {
        self.rng.random_range(lo..=hi)
    }

    fn byte(&mut self) -> u8 {
        self.rng.random()
    }

    fn build(mut self) -> Option<Program> {
        let n = self.range(self.cfg.n_initiators);
        let mut pool: Vec<LineRef> = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let f = self.initiator();
            pool.push(self.push(f)?);
        }

        // Non-arithmetic modifiers; results join the pool and may be
        // modified again.
        let mut i = 0;
        while i < pool.len() {
            let src = pool[i];
            if self.rng.random_bool(self.cfg.p_nonmath_modifier) {
                if let Some((kind, line)) = self.modify(src, &NONMATH_MODIFIERS) {
                    let p_keep = if kind == FunctionKind::Substitute {
                        1.0 - self.cfg.p_substitute_exclude_original
                    } else {
                        self.cfg.p_reuse_original
                    };
                    if self.rng.random_bool(p_keep) {
                        i += 1;
                    } else {
                        pool.remove(i);
                    }
                    pool.push(line);
                    continue;
                }
            }
            i += 1;
        }

        let mut kept = Vec::new();
        for slot in pool.iter_mut() {
            if self.rng.random_bool(self.cfg.p_math_modifier) {
                if let Some((_, line)) = self.modify(*slot, &MATH_MODIFIERS) {
                    if self.rng.random_bool(self.cfg.p_reuse_math_original) {
                        kept.push(*slot);
                    }
                    *slot = line;
                }
            }
        }
        pool.extend(kept);

        pool.shuffle(self.rng);
        let mut acc = pool[0];
        for &next in &pool[1..] {
            acc = self.merge(acc, next)?;
        }
        Program::new(self.lines, acc).ok()
    }

    fn initiator(&mut self) -> Function {
        let len = self.range(self.cfg.fixed_len);
        let w = self.cfg.initiator_weights;
        let mut u = self.rng.random::<f64>() * w.iter().sum::<f64>();
        let mut pick = 3;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                pick = i;
                break;
            }
            u -= wi;
        }
        match pick {
            0 => Function::SetList((0..len).map(|_| self.byte()).collect()),
            1 => {
                let start = self.rng.random_range(0..=255 - (len - 1)) as u8;
                Function::RangeUp {
                    start,
                    end: start + (len - 1) as u8,
                }
            }
            2 => {
                // Largest stride that still fits `len` elements in a byte.
                let max_step = (255 / (len - 1).max(1)).clamp(1, self.cfg.max_step);
                let step = if max_step >= 2 {
                    self.rng.random_range(2..=max_step)
                } else {
                    1
                };
                let span = (len - 1) * step;
                let start = self.rng.random_range(0..=255 - span);
                Function::RangeUpStep {
                    start: start as u8,
                    end: (start + span) as u8,
                    step,
                }
            }
            _ => Function::RepeatNum {
                count: len,
                value: self.byte(),
            },
        }
    }

    /// Apply one uniformly chosen applicable operation from `kinds` to `src`.
    fn modify(&mut self, src: LineRef, kinds: &[FunctionKind]) -> Option<(FunctionKind, LineRef)> {
        let mut kinds = kinds.to_vec();
        kinds.shuffle(self.rng);
        for kind in kinds {
            if let Some(f) = self.modifier_args(kind, src) {
                if let Some(line) = self.push_modifier(f, src) {
                    return Some((kind, line));
                }
            }
        }
        None
    }

    fn modifier_args(&mut self, kind: FunctionKind, src: LineRef) -> Option<Function> {
        use Function as F;
        let s = &self.values[src];
        let n = s.len() as u32;
        let (lo, hi) = (*s.iter().min()?, *s.iter().max()?);
        let idx_cap = n.min(self.cfg.max_list_len);
        Some(match kind {
            FunctionKind::Substitute => {
                let old = *s.as_slice().choose(self.rng)?;
                let mut new = self.byte();
                while new == old {
                    new = self.byte();
                }
                F::Substitute { src, old, new }
            }
            FunctionKind::ReverseList => F::ReverseList(src),
            FunctionKind::Subseq | FunctionKind::SubseqStep => {
                if idx_cap < 2 {
                    return None;
                }
                let end = self.rng.random_range(2..=idx_cap);
                let start = self.rng.random_range(0..end - 1);
                if kind == FunctionKind::Subseq {
                    F::Subseq { src, start, end }
                } else {
                    let step = self.rng.random_range(2..=self.cfg.max_step);
                    F::SubseqStep {
                        src,
                        start,
                        end,
                        step,
                    }
                }
            }
            FunctionKind::RepeatList => F::RepeatList {
                src,
                times: self.range(self.cfg.repeat_list_times),
            },
            FunctionKind::MaxN | FunctionKind::MinN => {
                let k = self.rng.random_range(1..=idx_cap);
                if kind == FunctionKind::MaxN {
                    F::MaxN { src, n: k }
                } else {
                    F::MinN { src, n: k }
                }
            }
            FunctionKind::AddConst if hi < 255 => F::AddConst {
                src,
                c: self.rng.random_range(1..=255 - hi),
            },
            FunctionKind::SubConst if lo > 0 => F::SubConst {
                src,
                c: self.rng.random_range(1..=lo),
            },
            FunctionKind::ModConst if hi >= 2 => F::ModConst {
                src,
                c: self.rng.random_range(2..=hi),
            },
            FunctionKind::ScanAdd => F::ScanAdd(src),
            FunctionKind::FilterEven => F::FilterEven(src),
            FunctionKind::FilterOdd => F::FilterOdd(src),
            FunctionKind::FilterNonzero => F::FilterNonzero(src),
            _ => return None,
        })
    }

    fn merge(&mut self, a: LineRef, b: LineRef) -> Option<LineRef> {
        use Function as F;
        if self.rng.random_bool(self.cfg.p_math_merger) {
            let mut kinds = MATH_MERGERS.to_vec();
            kinds.shuffle(self.rng);
            for kind in kinds {
                let f = match kind {
                    FunctionKind::AddLists => F::AddLists(a, b),
                    FunctionKind::SubLists => F::SubLists(a, b),
                    _ => F::ModLists(a, b),
                };
                if let Some(line) = self.push(f) {
                    return Some(line);
                }
            }
        }
        if self.rng.random_bool(self.cfg.p_concatenate) {
            self.push(F::Concatenate(a, b))
        } else {
            self.push(F::Interleave(a, b))
        }
    }
}

/// Deduplicated train and eval splits.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub train: Vec<PairRecord>,
    pub eval: Vec<PairRecord>,
}

const BATCH: u64 = 4096;

/// Fill the eval split until it holds at least `eval_bytes` bytes of
/// sequence, then draw `n_pairs` training pairs. Sequences are unique across
/// both splits; when a sequence is drawn again the cheaper program is kept.
pub fn sample_corpus(
    cfg: &SamplerConfig,
    n_pairs: usize,
    eval_bytes: u64,
) -> Result<Corpus, SamplerError> {
    if n_pairs == 0 {
        return Err(SamplerError::InvalidConfig(
            "n_pairs must be at least 1".into(),
        ));
    }
    cfg.validate()?;
    // (split, position) of each known sequence; split 0 = eval, 1 = train.
    let mut seen: HashMap<ByteSeq, (u8, usize)> = HashMap::new();
    let mut corpus = Corpus::default();
    let mut eval_total = 0u64;
    let mut next = 0u64;
    let mut stale = 0u64;
    // Give up once this many consecutive draws produced nothing new.
    let stale_limit = 100 * BATCH;
    while corpus.train.len() < n_pairs {
        for rec in sample_batch(cfg, next, next + BATCH)? {
            if let Some(&(split, pos)) = seen.get(&rec.sequence) {
                let slot = if split == 0 {
                    &mut corpus.eval[pos]
                } else {
                    &mut corpus.train[pos]
                };
                if rec.bit_cost < slot.bit_cost {
                    *slot = rec;
                }
                stale += 1;
                if stale >= stale_limit {
                    return Err(SamplerError::Exhausted {
                        attempts: next + BATCH,
                    });
                }
                continue;
            }
            stale = 0;
            if eval_total < eval_bytes {
                eval_total += rec.seq_len as u64;
                seen.insert(rec.sequence.clone(), (0, corpus.eval.len()));
                corpus.eval.push(rec);
            } else if corpus.train.len() < n_pairs {
                seen.insert(rec.sequence.clone(), (1, corpus.train.len()));
                corpus.train.push(rec);
            }
        }
        next += BATCH;
    }
    Ok(corpus)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    #[default]
    None,
    Inline,
}

/// `[a, b, c]`, or `[a, b, ..., y, z]` for more than 8 elements.
pub fn abbreviate(v: &[u8]) -> String {
    let list = |xs: &[u8]| {
        xs.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    if v.len() > 8 {
        format!("[{}, ..., {}]", list(&v[..2]), list(&v[v.len() - 2..]))
    } else {
        format!("[{}]", list(v))
    }
}

/// Program text with each statement followed by `# <value>`.
pub fn render_with_feedback(p: &Program, style: RenderStyle) -> String {
    let trace = execute_with_feedback(p, DEFAULT_STEP_BUDGET);
    let lines = render_lines(p, style);
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(line);
        let line_ref = if i < p.len() { i } else { p.output() };
        match trace.get(line_ref) {
            Some((_, Ok(v))) => {
                let _ = write!(out, " # {}", abbreviate(v));
            }
            Some((_, Err(e))) => {
                let _ = write!(out, " # error: {}", e.kind);
            }
            None => {}
        }
    }
    out
}

#[derive(Serialize)]
struct TrainingLine<'a> {
    sequence: &'a ByteSeq,
    program_text: String,
}

/// One JSON object per pair: `{"sequence": [...], "program_text": "..."}`.
pub fn emit_training_pairs(pairs: &[PairRecord], feedback: Feedback, style: RenderStyle) -> String {
    let rendered = par::map(pairs, |r| {
        let program_text = match feedback {
            Feedback::None => crate::dsl::render_program(&r.program, style),
            Feedback::Inline => render_with_feedback(&r.program, style),
        };
        serde_json::to_string(&TrainingLine {
            sequence: &r.sequence,
            program_text,
        })
        .expect("plain data")
    });
    let mut out = String::with_capacity(rendered.iter().map(|s| s.len() + 1).sum());
    for line in rendered {
        out.push_str(&line);
        out.push('\n');
    }
    out
}
