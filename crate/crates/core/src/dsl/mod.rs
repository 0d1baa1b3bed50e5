//! The compositional sequence language.
//!
//! A [`Program`] is a list of single-call assignment lines. Each line applies
//! one [`Function`] whose sequence arguments refer to earlier lines only, so a
//! program is a DAG evaluated top to bottom. The final line designates which
//! sequence is the program's output.
//!
//! ```text
//! sequence_1 = range_up(149, 171)
//! sequence_2 = reverse_list(sequence_1)
//! output = sequence_2
//! ```

mod exec;
mod parse;

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

pub(crate) use exec::apply;
pub use exec::{
    execute, execute_with_feedback, ExecError, ExecErrorKind, Trace, DEFAULT_STEP_BUDGET,
};
pub(crate) use parse::render_lines;
pub use parse::{parse_program, render_program, ParseError, ParseErrorKind, RenderStyle};

/// Index of an earlier line in a program (0-based).
pub type LineRef = usize;

/// A sequence of byte values, the data being compressed.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ByteSeq(Vec<u8>);

impl ByteSeq {
    pub fn new(values: Vec<u8>) -> Self {
        ByteSeq(values)
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

impl Deref for ByteSeq {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for ByteSeq {
    fn from(v: Vec<u8>) -> Self {
        ByteSeq(v)
    }
}

impl From<&[u8]> for ByteSeq {
    fn from(v: &[u8]) -> Self {
        ByteSeq(v.to_vec())
    }
}

impl FromIterator<u8> for ByteSeq {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        ByteSeq(iter.into_iter().collect())
    }
}

impl fmt::Debug for ByteSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl fmt::Display for ByteSeq {
    /// Python-style list: `[1, 2, 3]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

/// Function class, used by the sampler to stage program construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FunctionClass {
    Initiator,
    Modifier,
    MathModifier,
    Filter,
    Merger,
}

/// Tag of a DSL function without its arguments.
///
/// The discriminant order is the symbol order used by the program codec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionKind {
    SetList,
    RangeUp,
    RangeUpStep,
    RepeatNum,
    Substitute,
    ReverseList,
    Subseq,
    SubseqStep,
    RepeatList,
    MaxN,
    MinN,
    AddConst,
    SubConst,
    ModConst,
    ScanAdd,
    FilterEven,
    FilterOdd,
    FilterNonzero,
    AddLists,
    SubLists,
    ModLists,
    Concatenate,
    Interleave,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 23] = [
        FunctionKind::SetList,
        FunctionKind::RangeUp,
        FunctionKind::RangeUpStep,
        FunctionKind::RepeatNum,
        FunctionKind::Substitute,
        FunctionKind::ReverseList,
        FunctionKind::Subseq,
        FunctionKind::SubseqStep,
        FunctionKind::RepeatList,
        FunctionKind::MaxN,
        FunctionKind::MinN,
        FunctionKind::AddConst,
        FunctionKind::SubConst,
        FunctionKind::ModConst,
        FunctionKind::ScanAdd,
        FunctionKind::FilterEven,
        FunctionKind::FilterOdd,
        FunctionKind::FilterNonzero,
        FunctionKind::AddLists,
        FunctionKind::SubLists,
        FunctionKind::ModLists,
        FunctionKind::Concatenate,
        FunctionKind::Interleave,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FunctionKind> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::SetList => "set_list",
            FunctionKind::RangeUp => "range_up",
            FunctionKind::RangeUpStep => "range_up_step",
            FunctionKind::RepeatNum => "repeat_num",
            FunctionKind::Substitute => "substitute",
            FunctionKind::ReverseList => "reverse_list",
            FunctionKind::Subseq => "subseq",
            FunctionKind::SubseqStep => "subseq_step",
            FunctionKind::RepeatList => "repeat_list",
            FunctionKind::MaxN => "max_n",
            FunctionKind::MinN => "min_n",
            FunctionKind::AddConst => "add_const",
            FunctionKind::SubConst => "sub_const",
            FunctionKind::ModConst => "mod_const",
            FunctionKind::ScanAdd => "scan_add",
            FunctionKind::FilterEven => "filter_even",
            FunctionKind::FilterOdd => "filter_odd",
            FunctionKind::FilterNonzero => "filter_nonzero",
            FunctionKind::AddLists => "add_lists",
            FunctionKind::SubLists => "sub_lists",
            FunctionKind::ModLists => "mod_lists",
            FunctionKind::Concatenate => "concatenate",
            FunctionKind::Interleave => "interleave",
        }
    }

    /// Alternate surface name (e.g. `range_func_up`), where one exists.
    pub fn alias(self) -> &'static str {
        match self {
            FunctionKind::RangeUp => "range_func_up",
            FunctionKind::RangeUpStep => "range_func_up_step",
            other => other.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<FunctionKind> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name || k.alias() == name)
    }

    pub fn class(self) -> FunctionClass {
        use FunctionKind::*;
        match self {
            SetList | RangeUp | RangeUpStep | RepeatNum => FunctionClass::Initiator,
            Substitute | ReverseList | Subseq | SubseqStep | RepeatList | MaxN | MinN => {
                FunctionClass::Modifier
            }
            AddConst | SubConst | ModConst | ScanAdd => FunctionClass::MathModifier,
            FilterEven | FilterOdd | FilterNonzero => FunctionClass::Filter,
            AddLists | SubLists | ModLists | Concatenate | Interleave => FunctionClass::Merger,
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One DSL call with its arguments.
///
/// Byte arguments are `u8`; counts, indices and strides are `u32`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Function {
    SetList(ByteSeq),
    RangeUp {
        start: u8,
        end: u8,
    },
    RangeUpStep {
        start: u8,
        end: u8,
        step: u32,
    },
    RepeatNum {
        count: u32,
        value: u8,
    },
    Substitute {
        src: LineRef,
        old: u8,
        new: u8,
    },
    ReverseList(LineRef),
    Subseq {
        src: LineRef,
        start: u32,
        end: u32,
    },
    SubseqStep {
        src: LineRef,
        start: u32,
        end: u32,
        step: u32,
    },
    RepeatList {
        src: LineRef,
        times: u32,
    },
    MaxN {
        src: LineRef,
        n: u32,
    },
    MinN {
        src: LineRef,
        n: u32,
    },
    AddConst {
        src: LineRef,
        c: u8,
    },
    SubConst {
        src: LineRef,
        c: u8,
    },
    ModConst {
        src: LineRef,
        c: u8,
    },
    ScanAdd(LineRef),
    FilterEven(LineRef),
    FilterOdd(LineRef),
    FilterNonzero(LineRef),
    AddLists(LineRef, LineRef),
    SubLists(LineRef, LineRef),
    ModLists(LineRef, LineRef),
    Concatenate(LineRef, LineRef),
    Interleave(LineRef, LineRef),
}

impl Function {
    pub fn kind(&self) -> FunctionKind {
        use Function as F;
        match self {
            F::SetList(_) => FunctionKind::SetList,
            F::RangeUp { .. } => FunctionKind::RangeUp,
            F::RangeUpStep { .. } => FunctionKind::RangeUpStep,
            F::RepeatNum { .. } => FunctionKind::RepeatNum,
            F::Substitute { .. } => FunctionKind::Substitute,
            F::ReverseList(_) => FunctionKind::ReverseList,
            F::Subseq { .. } => FunctionKind::Subseq,
            F::SubseqStep { .. } => FunctionKind::SubseqStep,
            F::RepeatList { .. } => FunctionKind::RepeatList,
            F::MaxN { .. } => FunctionKind::MaxN,
            F::MinN { .. } => FunctionKind::MinN,
            F::AddConst { .. } => FunctionKind::AddConst,
            F::SubConst { .. } => FunctionKind::SubConst,
            F::ModConst { .. } => FunctionKind::ModConst,
            F::ScanAdd(_) => FunctionKind::ScanAdd,
            F::FilterEven(_) => FunctionKind::FilterEven,
            F::FilterOdd(_) => FunctionKind::FilterOdd,
            F::FilterNonzero(_) => FunctionKind::FilterNonzero,
            F::AddLists(..) => FunctionKind::AddLists,
            F::SubLists(..) => FunctionKind::SubLists,
            F::ModLists(..) => FunctionKind::ModLists,
            F::Concatenate(..) => FunctionKind::Concatenate,
            F::Interleave(..) => FunctionKind::Interleave,
        }
    }

    /// Line references used as sequence operands, in argument order.
    pub fn refs(&self) -> Vec<LineRef> {
        use Function as F;
        match *self {
            F::SetList(_) | F::RangeUp { .. } | F::RangeUpStep { .. } | F::RepeatNum { .. } => {
                Vec::new()
            }
            F::Substitute { src, .. }
            | F::Subseq { src, .. }
            | F::SubseqStep { src, .. }
            | F::RepeatList { src, .. }
            | F::MaxN { src, .. }
            | F::MinN { src, .. }
            | F::AddConst { src, .. }
            | F::SubConst { src, .. }
            | F::ModConst { src, .. }
            | F::ReverseList(src)
            | F::ScanAdd(src)
            | F::FilterEven(src)
            | F::FilterOdd(src)
            | F::FilterNonzero(src) => vec![src],
            F::AddLists(a, b)
            | F::SubLists(a, b)
            | F::ModLists(a, b)
            | F::Concatenate(a, b)
            | F::Interleave(a, b) => vec![a, b],
        }
    }
}

/// A straight-line DSL program.
///
/// Line `i` is rendered as `sequence_{i+1}`; `output` selects the line whose
/// value is the program's result.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Program {
    lines: Vec<Function>,
    output: LineRef,
}

/// Structural problem found by [`Program::new`].
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("program has no lines")]
    Empty,
    #[error("line {line} references line {target}, which is not an earlier line")]
    ForwardReference { line: LineRef, target: LineRef },
    #[error("output refers to line {0}, which does not exist")]
    BadOutput(LineRef),
}

impl Program {
    pub fn new(lines: Vec<Function>, output: LineRef) -> Result<Self, ProgramError> {
        if lines.is_empty() {
            return Err(ProgramError::Empty);
        }
        for (i, f) in lines.iter().enumerate() {
            if let Some(&target) = f.refs().iter().find(|&&r| r >= i) {
                return Err(ProgramError::ForwardReference { line: i, target });
            }
        }
        if output >= lines.len() {
            return Err(ProgramError::BadOutput(output));
        }
        Ok(Program { lines, output })
    }

    /// Program whose output is its last line.
    pub fn from_lines(lines: Vec<Function>) -> Result<Self, ProgramError> {
        let output = lines.len().saturating_sub(1);
        Program::new(lines, output)
    }

    pub fn lines(&self) -> &[Function] {
        &self.lines
    }

    pub fn output(&self) -> LineRef {
        self.output
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Name given to line `i` when rendering.
pub fn line_name(i: LineRef) -> String {
    format!("sequence_{}", i + 1)
}
