//! Program bit cost under the uniform prior, and the matching arithmetic-coded
//! bitstream.
//!
//! Each line spends `log2(num_functions + 1)` bits on the function choice (the
//! extra symbol is "stop and pick the output"), then a uniform code for every
//! parameter. Sequence references choose among the lines defined so far, so a
//! reference on line `i` costs `log2(i)`.

use serde::{Deserialize, Serialize};

use super::arith::{ArithDecoder, ArithEncoder};
use super::bits::{BitReader, Bitstream};
use super::DecodeError;
use crate::dsl::{ByteSeq, Function, FunctionKind, LineRef, Program};

/// Parameters of the uniform program prior.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorCostModel {
    /// Number of DSL functions; the stop symbol is added on top.
    pub num_functions: u32,
    pub byte_size: u32,
    pub max_num_repetitions: u32,
    pub max_list_len: u32,
    /// Largest stride accepted by the stepped range/sub-sequence functions.
    pub max_step: u32,
}

impl Default for PriorCostModel {
    fn default() -> Self {
        PriorCostModel {
            num_functions: FunctionKind::ALL.len() as u32,
            byte_size: 8,
            max_num_repetitions: 25,
            max_list_len: 25,
            max_step: 8,
        }
    }
}

impl PriorCostModel {
    /// Size of the function alphabet including the stop symbol.
    pub fn func_alphabet(&self) -> u64 {
        self.num_functions as u64 + 1
    }

    pub fn bits_per_func(&self) -> f64 {
        (self.func_alphabet() as f64).log2()
    }

    fn stop_symbol(&self) -> u64 {
        self.num_functions as u64
    }

    fn byte_alphabet(&self) -> u64 {
        1u64 << self.byte_size
    }

    fn check(&self) -> Result<(), CostError> {
        if self.num_functions as usize != FunctionKind::ALL.len()
            || self.byte_size == 0
            || self.byte_size > 8
        {
            return Err(CostError::UnsupportedModel);
        }
        if self.max_num_repetitions == 0 || self.max_list_len == 0 || self.max_step == 0 {
            return Err(CostError::UnsupportedModel);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("program has no lines")]
    EmptyProgram,
    #[error("line {line}: {what} is outside the prior's bounds")]
    OutOfBounds { line: LineRef, what: &'static str },
    #[error("cost model parameters are not supported")]
    UnsupportedModel,
}

/// One uniform choice: `symbol` out of `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Choice {
    symbol: u64,
    n: u64,
}

struct Params<'m> {
    model: &'m PriorCostModel,
    line: LineRef,
    out: Vec<Choice>,
}

impl Params<'_> {
    fn push(&mut self, symbol: u64, n: u64, what: &'static str) -> Result<(), CostError> {
        if symbol >= n {
            return Err(CostError::OutOfBounds {
                line: self.line,
                what,
            });
        }
        self.out.push(Choice { symbol, n });
        Ok(())
    }

    fn byte(&mut self, v: u8) -> Result<(), CostError> {
        self.push(v as u64, self.model.byte_alphabet(), "byte value")
    }

    /// Values in `1..=max` coded as `v - 1`.
    fn one_based(&mut self, v: u32, max: u32, what: &'static str) -> Result<(), CostError> {
        if v == 0 {
            return Err(CostError::OutOfBounds {
                line: self.line,
                what,
            });
        }
        self.push(v as u64 - 1, max as u64, what)
    }

    fn index(&mut self, v: u32) -> Result<(), CostError> {
        self.push(
            v as u64,
            self.model.max_list_len as u64,
            "sub-sequence start",
        )
    }

    fn line_ref(&mut self, r: LineRef) -> Result<(), CostError> {
        self.push(r as u64, self.line as u64, "sequence reference")
    }
}

/// Parameter choices for line `line` (which has `line` predecessors).
fn param_choices(
    f: &Function,
    line: LineRef,
    model: &PriorCostModel,
) -> Result<Vec<Choice>, CostError> {
    use Function as F;
    let (reps, list, step) = (
        model.max_num_repetitions,
        model.max_list_len,
        model.max_step,
    );
    let mut p = Params {
        model,
        line,
        out: Vec::with_capacity(4),
    };
    match f {
        F::SetList(values) => {
            p.one_based(
                values.len().try_into().unwrap_or(u32::MAX),
                list,
                "list length",
            )?;
            for &v in values.iter() {
                p.byte(v)?;
            }
        }
        F::RangeUp { start, end } => {
            p.byte(*start)?;
            p.byte(*end)?;
        }
        F::RangeUpStep {
            start,
            end,
            step: s,
        } => {
            p.byte(*start)?;
            p.byte(*end)?;
            p.one_based(*s, step, "step")?;
        }
        F::RepeatNum { count, value } => {
            p.byte(*value)?;
            p.one_based(*count, reps, "repetition count")?;
        }
        F::Substitute { src, old, new } => {
            p.line_ref(*src)?;
            p.byte(*old)?;
            p.byte(*new)?;
        }
        F::ReverseList(s)
        | F::ScanAdd(s)
        | F::FilterEven(s)
        | F::FilterOdd(s)
        | F::FilterNonzero(s) => {
            p.line_ref(*s)?;
        }
        F::Subseq { src, start, end } => {
            p.line_ref(*src)?;
            p.index(*start)?;
            p.one_based(*end, list, "sub-sequence end")?;
        }
        F::SubseqStep {
            src,
            start,
            end,
            step: s,
        } => {
            p.line_ref(*src)?;
            p.index(*start)?;
            p.one_based(*end, list, "sub-sequence end")?;
            p.one_based(*s, step, "step")?;
        }
        F::RepeatList { src, times } => {
            p.line_ref(*src)?;
            p.one_based(*times, reps, "repetition count")?;
        }
        F::MaxN { src, n } | F::MinN { src, n } => {
            p.line_ref(*src)?;
            p.one_based(*n, list, "element count")?;
        }
        F::AddConst { src, c } | F::SubConst { src, c } | F::ModConst { src, c } => {
            p.line_ref(*src)?;
            p.byte(*c)?;
        }
        F::AddLists(a, b)
        | F::SubLists(a, b)
        | F::ModLists(a, b)
        | F::Concatenate(a, b)
        | F::Interleave(a, b) => {
            p.line_ref(*a)?;
            p.line_ref(*b)?;
        }
    }
    Ok(p.out)
}

/// Full choice sequence for a program: per line the function symbol then its
/// parameters, finally the stop symbol and the output reference.
fn program_choices(p: &Program, model: &PriorCostModel) -> Result<Vec<Choice>, CostError> {
    model.check()?;
    if p.is_empty() {
        return Err(CostError::EmptyProgram);
    }
    let alphabet = model.func_alphabet();
    let mut out = Vec::new();
    for (i, f) in p.lines().iter().enumerate() {
        out.push(Choice {
            symbol: f.kind().index() as u64,
            n: alphabet,
        });
        out.extend(param_choices(f, i, model)?);
    }
    out.push(Choice {
        symbol: model.stop_symbol(),
        n: alphabet,
    });
    out.push(Choice {
        symbol: p.output() as u64,
        n: p.len() as u64,
    });
    Ok(out)
}

/// Bits needed to encode `p` under the uniform prior (fractional).
pub fn program_bit_cost(p: &Program, model: &PriorCostModel) -> Result<f64, CostError> {
    Ok(program_choices(p, model)?
        .iter()
        .map(|c| (c.n as f64).log2())
        .sum())
}

/// Arithmetic-code `p`; the stream length is within two bits of the
/// rounded-up [`program_bit_cost`].
pub fn encode_program(p: &Program, model: &PriorCostModel) -> Result<Bitstream, CostError> {
    let mut enc = ArithEncoder::new();
    for c in program_choices(p, model)? {
        enc.encode_uniform(c.symbol, c.n);
    }
    Ok(enc.finish())
}

/// Upper bound on lines accepted by the decoder.
const MAX_DECODED_LINES: usize = 1 << 16;

struct Reader<'a, 'b> {
    dec: &'b mut ArithDecoder<'a>,
    model: &'b PriorCostModel,
    line: LineRef,
}

impl Reader<'_, '_> {
    fn uniform(&mut self, n: u64) -> Result<u64, DecodeError> {
        if n == 0 {
            return Err(DecodeError::Corrupt(
                "reference on a line with no predecessors".into(),
            ));
        }
        let v = self.dec.decode_uniform(n);
        if self.dec.overran() {
            return Err(DecodeError::Truncated);
        }
        Ok(v)
    }

    fn byte(&mut self) -> Result<u8, DecodeError> {
        Ok(self.uniform(self.model.byte_alphabet())? as u8)
    }

    fn one_based(&mut self, max: u32) -> Result<u32, DecodeError> {
        Ok(self.uniform(max as u64)? as u32 + 1)
    }

    fn line_ref(&mut self) -> Result<LineRef, DecodeError> {
        Ok(self.uniform(self.line as u64)? as LineRef)
    }

    fn function(&mut self, kind: FunctionKind) -> Result<Function, DecodeError> {
        use Function as F;
        let (reps, list, step) = (
            self.model.max_num_repetitions,
            self.model.max_list_len,
            self.model.max_step,
        );
        Ok(match kind {
            FunctionKind::SetList => {
                let len = self.one_based(list)?;
                F::SetList(
                    (0..len)
                        .map(|_| self.byte())
                        .collect::<Result<ByteSeq, _>>()?,
                )
            }
            FunctionKind::RangeUp => F::RangeUp {
                start: self.byte()?,
                end: self.byte()?,
            },
            FunctionKind::RangeUpStep => F::RangeUpStep {
                start: self.byte()?,
                end: self.byte()?,
                step: self.one_based(step)?,
            },
            FunctionKind::RepeatNum => {
                let value = self.byte()?;
                F::RepeatNum {
                    count: self.one_based(reps)?,
                    value,
                }
            }
            FunctionKind::Substitute => F::Substitute {
                src: self.line_ref()?,
                old: self.byte()?,
                new: self.byte()?,
            },
            FunctionKind::ReverseList => F::ReverseList(self.line_ref()?),
            FunctionKind::ScanAdd => F::ScanAdd(self.line_ref()?),
            FunctionKind::FilterEven => F::FilterEven(self.line_ref()?),
            FunctionKind::FilterOdd => F::FilterOdd(self.line_ref()?),
            FunctionKind::FilterNonzero => F::FilterNonzero(self.line_ref()?),
            FunctionKind::Subseq => F::Subseq {
                src: self.line_ref()?,
                start: self.uniform(list as u64)? as u32,
                end: self.one_based(list)?,
            },
            FunctionKind::SubseqStep => F::SubseqStep {
                src: self.line_ref()?,
                start: self.uniform(list as u64)? as u32,
                end: self.one_based(list)?,
                step: self.one_based(step)?,
            },
            FunctionKind::RepeatList => F::RepeatList {
                src: self.line_ref()?,
                times: self.one_based(reps)?,
            },
            FunctionKind::MaxN => F::MaxN {
                src: self.line_ref()?,
                n: self.one_based(list)?,
            },
            FunctionKind::MinN => F::MinN {
                src: self.line_ref()?,
                n: self.one_based(list)?,
            },
            FunctionKind::AddConst => F::AddConst {
                src: self.line_ref()?,
                c: self.byte()?,
            },
            FunctionKind::SubConst => F::SubConst {
                src: self.line_ref()?,
                c: self.byte()?,
            },
            FunctionKind::ModConst => F::ModConst {
                src: self.line_ref()?,
                c: self.byte()?,
            },
            FunctionKind::AddLists => F::AddLists(self.line_ref()?, self.line_ref()?),
            FunctionKind::SubLists => F::SubLists(self.line_ref()?, self.line_ref()?),
            FunctionKind::ModLists => F::ModLists(self.line_ref()?, self.line_ref()?),
            FunctionKind::Concatenate => F::Concatenate(self.line_ref()?, self.line_ref()?),
            FunctionKind::Interleave => F::Interleave(self.line_ref()?, self.line_ref()?),
        })
    }
}

/// Decode a stream produced by [`encode_program`].
///
/// The stream must be exactly the canonical encoding of the decoded program;
/// anything else (truncation, flipped bits, trailing garbage) is rejected.
pub fn decode_program(bits: &Bitstream, model: &PriorCostModel) -> Result<Program, DecodeError> {
    decode_program_window(bits, 0, bits.bit_len(), model)
}

/// Decode a program occupying bits `[start, start + len)` of `bits`.
pub fn decode_program_window(
    bits: &Bitstream,
    start: u64,
    len: u64,
    model: &PriorCostModel,
) -> Result<Program, DecodeError> {
    model
        .check()
        .map_err(|e| DecodeError::Corrupt(e.to_string()))?;
    if len == 0 {
        return Err(DecodeError::Empty);
    }
    let input = BitReader::window(bits, start, len).ok_or(DecodeError::Truncated)?;
    let mut dec = ArithDecoder::new(input);
    let mut lines: Vec<Function> = Vec::new();
    let output = loop {
        if lines.len() >= MAX_DECODED_LINES {
            return Err(DecodeError::Corrupt("too many lines".into()));
        }
        let mut r = Reader {
            dec: &mut dec,
            model,
            line: lines.len(),
        };
        let sym = r.uniform(model.func_alphabet())?;
        if sym == model.stop_symbol() {
            break r.uniform(lines.len() as u64)? as LineRef;
        }
        let kind = FunctionKind::from_index(sym as usize).expect("symbol below num_functions");
        let f = r.function(kind)?;
        lines.push(f);
    };
    let program = Program::new(lines, output).map_err(|e| DecodeError::Corrupt(e.to_string()))?;

    let canonical =
        encode_program(&program, model).map_err(|e| DecodeError::Corrupt(e.to_string()))?;
    let matches =
        canonical.bit_len() == len && (0..len).all(|i| canonical.bit(i) == bits.bit(start + i));
    if !matches {
        return Err(DecodeError::Corrupt(
            "stream is not a canonical program encoding".into(),
        ));
    }
    Ok(program)
}
