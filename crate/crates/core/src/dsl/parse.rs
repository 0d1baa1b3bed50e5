//! Text form of DSL programs.
//!
//! One statement per line: `name = func(arg, ...)`. Arguments are integers,
//! bracketed integer lists, or names of earlier lines. The last statement is
//! `output = name` (or `output = func(...)`). `#` starts a comment.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{line_name, ByteSeq, Function, FunctionKind, LineRef, Program};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownFunction(String),
    Arity { expected: usize, found: usize },
    BadArgument(String),
    BadReference(String),
    DuplicateName(String),
    MissingOutput,
    StatementAfterOutput,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {}", describe(.kind))]
pub struct ParseError {
    /// 1-based source line.
    pub line: usize,
    pub kind: ParseErrorKind,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::Syntax(s) => format!("syntax error: {s}"),
        ParseErrorKind::UnknownFunction(s) => format!("unknown function `{s}`"),
        ParseErrorKind::Arity { expected, found } => {
            format!("expected {expected} arguments, found {found}")
        }
        ParseErrorKind::BadArgument(s) => format!("bad argument: {s}"),
        ParseErrorKind::BadReference(s) => format!("`{s}` is not a previously defined sequence"),
        ParseErrorKind::DuplicateName(s) => format!("`{s}` is assigned twice"),
        ParseErrorKind::MissingOutput => "program never assigns `output`".into(),
        ParseErrorKind::StatementAfterOutput => "statement after the `output` assignment".into(),
    }
}

/// Function naming used by [`render_program`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RenderStyle {
    #[default]
    Canonical,
    /// Alternate names such as `range_func_up`.
    Alias,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Arg {
    Int(i64),
    List(Vec<i64>),
    Name(String),
}

#[derive(Clone, Copy)]
enum Slot {
    Byte,
    Count,
    Ref,
    List,
}

fn signature(kind: FunctionKind) -> &'static [Slot] {
    use FunctionKind::*;
    use Slot::*;
    match kind {
        SetList => &[List],
        RangeUp => &[Byte, Byte],
        RangeUpStep => &[Byte, Byte, Count],
        RepeatNum => &[Count, Byte],
        Substitute => &[Ref, Byte, Byte],
        ReverseList | ScanAdd | FilterEven | FilterOdd | FilterNonzero => &[Ref],
        Subseq => &[Ref, Count, Count],
        SubseqStep => &[Ref, Count, Count, Count],
        RepeatList | MaxN | MinN => &[Ref, Count],
        AddConst | SubConst | ModConst => &[Ref, Byte],
        AddLists | SubLists | ModLists | Concatenate | Interleave => &[Ref, Ref],
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_int(s: &str) -> Result<i64, ParseErrorKind> {
    s.parse::<i64>()
        .map_err(|_| ParseErrorKind::Syntax(format!("expected an integer, found `{s}`")))
}

/// Split on top-level commas (commas inside brackets belong to list literals).
fn split_args(s: &str) -> Result<Vec<&str>, ParseErrorKind> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ParseErrorKind::Syntax("unbalanced `]`".into()));
                }
            }
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(ParseErrorKind::Syntax("unbalanced `[`".into()));
    }
    let last = s[start..].trim();
    if !(parts.is_empty() && last.is_empty()) {
        parts.push(last);
    }
    Ok(parts)
}

fn parse_arg(s: &str) -> Result<Arg, ParseErrorKind> {
    if let Some(inner) = s.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| ParseErrorKind::Syntax(format!("malformed list `{s}`")))?;
        let items = split_args(inner)?;
        return items
            .iter()
            .map(|x| parse_int(x))
            .collect::<Result<_, _>>()
            .map(Arg::List);
    }
    if is_ident(s) {
        return Ok(Arg::Name(s.to_string()));
    }
    parse_int(s).map(Arg::Int)
}

fn to_byte(v: i64) -> Result<u8, ParseErrorKind> {
    u8::try_from(v).map_err(|_| ParseErrorKind::BadArgument(format!("{v} is not a byte value")))
}

fn to_count(v: i64) -> Result<u32, ParseErrorKind> {
    u32::try_from(v)
        .map_err(|_| ParseErrorKind::BadArgument(format!("{v} is not a non-negative count")))
}

enum Value {
    Byte(u8),
    Count(u32),
    Ref(LineRef),
    List(ByteSeq),
}

fn build_function(
    kind: FunctionKind,
    args: Vec<Arg>,
    names: &HashMap<String, LineRef>,
) -> Result<Function, ParseErrorKind> {
    let sig = signature(kind);
    if sig.len() != args.len() {
        return Err(ParseErrorKind::Arity {
            expected: sig.len(),
            found: args.len(),
        });
    }
    let mut vals = Vec::with_capacity(args.len());
    for (slot, arg) in sig.iter().zip(args) {
        let v = match (slot, arg) {
            (Slot::Byte, Arg::Int(v)) => Value::Byte(to_byte(v)?),
            (Slot::Count, Arg::Int(v)) => Value::Count(to_count(v)?),
            (Slot::Ref, Arg::Name(n)) => {
                Value::Ref(*names.get(&n).ok_or(ParseErrorKind::BadReference(n))?)
            }
            (Slot::List, Arg::List(items)) => Value::List(
                items
                    .into_iter()
                    .map(to_byte)
                    .collect::<Result<ByteSeq, _>>()?,
            ),
            (Slot::Ref, Arg::Int(v)) => {
                return Err(ParseErrorKind::BadArgument(format!(
                    "expected a sequence name, found {v}"
                )))
            }
            (_, Arg::Name(n)) => {
                // A name where a number belongs may be a typo'd reference.
                return Err(if names.contains_key(&n) {
                    ParseErrorKind::BadArgument(format!("expected a number, found sequence `{n}`"))
                } else {
                    ParseErrorKind::BadReference(n)
                });
            }
            (_, other) => {
                return Err(ParseErrorKind::BadArgument(format!(
                    "unexpected argument {other:?}"
                )))
            }
        };
        vals.push(v);
    }

    use Function as F;
    use Value::*;
    let mut it = vals.into_iter();
    let mut next = || it.next().expect("arity checked");
    let byte = |v: Value| match v {
        Byte(b) => b,
        _ => unreachable!(),
    };
    let count = |v: Value| match v {
        Count(c) => c,
        _ => unreachable!(),
    };
    let line = |v: Value| match v {
        Ref(r) => r,
        _ => unreachable!(),
    };
    Ok(match kind {
        FunctionKind::SetList => match next() {
            List(l) => F::SetList(l),
            _ => unreachable!(),
        },
        FunctionKind::RangeUp => F::RangeUp {
            start: byte(next()),
            end: byte(next()),
        },
        FunctionKind::RangeUpStep => F::RangeUpStep {
            start: byte(next()),
            end: byte(next()),
            step: count(next()),
        },
        FunctionKind::RepeatNum => F::RepeatNum {
            count: count(next()),
            value: byte(next()),
        },
        FunctionKind::Substitute => F::Substitute {
            src: line(next()),
            old: byte(next()),
            new: byte(next()),
        },
        FunctionKind::ReverseList => F::ReverseList(line(next())),
        FunctionKind::Subseq => F::Subseq {
            src: line(next()),
            start: count(next()),
            end: count(next()),
        },
        FunctionKind::SubseqStep => F::SubseqStep {
            src: line(next()),
            start: count(next()),
            end: count(next()),
            step: count(next()),
        },
        FunctionKind::RepeatList => F::RepeatList {
            src: line(next()),
            times: count(next()),
        },
        FunctionKind::MaxN => F::MaxN {
            src: line(next()),
            n: count(next()),
        },
        FunctionKind::MinN => F::MinN {
            src: line(next()),
            n: count(next()),
        },
        FunctionKind::AddConst => F::AddConst {
            src: line(next()),
            c: byte(next()),
        },
        FunctionKind::SubConst => F::SubConst {
            src: line(next()),
            c: byte(next()),
        },
        FunctionKind::ModConst => F::ModConst {
            src: line(next()),
            c: byte(next()),
        },
        FunctionKind::ScanAdd => F::ScanAdd(line(next())),
        FunctionKind::FilterEven => F::FilterEven(line(next())),
        FunctionKind::FilterOdd => F::FilterOdd(line(next())),
        FunctionKind::FilterNonzero => F::FilterNonzero(line(next())),
        FunctionKind::AddLists => F::AddLists(line(next()), line(next())),
        FunctionKind::SubLists => F::SubLists(line(next()), line(next())),
        FunctionKind::ModLists => F::ModLists(line(next()), line(next())),
        FunctionKind::Concatenate => F::Concatenate(line(next()), line(next())),
        FunctionKind::Interleave => F::Interleave(line(next()), line(next())),
    })
}

fn parse_call(rhs: &str, names: &HashMap<String, LineRef>) -> Result<Function, ParseErrorKind> {
    let open = rhs.find('(').ok_or_else(|| {
        ParseErrorKind::Syntax(format!("expected a function call, found `{rhs}`"))
    })?;
    let body = rhs[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| ParseErrorKind::Syntax("missing closing `)`".into()))?;
    let fname = rhs[..open].trim();
    let kind = FunctionKind::from_name(fname)
        .ok_or_else(|| ParseErrorKind::UnknownFunction(fname.to_string()))?;
    let args = split_args(body)?
        .into_iter()
        .map(parse_arg)
        .collect::<Result<Vec<_>, _>>()?;
    build_function(kind, args, names)
}

/// Parse program text into a [`Program`].
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut names: HashMap<String, LineRef> = HashMap::new();
    let mut lines: Vec<Function> = Vec::new();
    let mut output: Option<LineRef> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let err = |kind| ParseError { line: lineno, kind };
        let stmt = raw.split('#').next().unwrap_or("").trim();
        if stmt.is_empty() {
            continue;
        }
        if output.is_some() {
            return Err(err(ParseErrorKind::StatementAfterOutput));
        }
        let (lhs, rhs) = stmt.split_once('=').ok_or_else(|| {
            err(ParseErrorKind::Syntax(format!(
                "expected `name = ...`, found `{stmt}`"
            )))
        })?;
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        if !is_ident(lhs) {
            return Err(err(ParseErrorKind::Syntax(format!(
                "`{lhs}` is not a valid name"
            ))));
        }

        if lhs == "output" {
            if is_ident(rhs) {
                let r = *names
                    .get(rhs)
                    .ok_or_else(|| err(ParseErrorKind::BadReference(rhs.to_string())))?;
                output = Some(r);
            } else {
                lines.push(parse_call(rhs, &names).map_err(err)?);
                output = Some(lines.len() - 1);
            }
            continue;
        }

        if names.contains_key(lhs) {
            return Err(err(ParseErrorKind::DuplicateName(lhs.to_string())));
        }
        let f = parse_call(rhs, &names).map_err(err)?;
        lines.push(f);
        names.insert(lhs.to_string(), lines.len() - 1);
    }

    let lineno = text.lines().count().max(1);
    let output = output.ok_or(ParseError {
        line: lineno,
        kind: ParseErrorKind::MissingOutput,
    })?;
    // References are resolved against earlier names only, so the DAG check cannot fail.
    Ok(Program::new(lines, output).expect("parser only builds backward references"))
}

fn write_call(out: &mut String, f: &Function, style: RenderStyle) {
    use Function as F;
    let name = match style {
        RenderStyle::Canonical => f.kind().name(),
        RenderStyle::Alias => f.kind().alias(),
    };
    let n = line_name;
    let args = match f {
        F::SetList(v) => v.to_string(),
        F::RangeUp { start, end } => format!("{start}, {end}"),
        F::RangeUpStep { start, end, step } => format!("{start}, {end}, {step}"),
        F::RepeatNum { count, value } => format!("{count}, {value}"),
        F::Substitute { src, old, new } => format!("{}, {old}, {new}", n(*src)),
        F::Subseq { src, start, end } => format!("{}, {start}, {end}", n(*src)),
        F::SubseqStep {
            src,
            start,
            end,
            step,
        } => format!("{}, {start}, {end}, {step}", n(*src)),
        F::RepeatList { src, times } => format!("{}, {times}", n(*src)),
        F::MaxN { src, n: k } | F::MinN { src, n: k } => format!("{}, {k}", n(*src)),
        F::AddConst { src, c } | F::SubConst { src, c } | F::ModConst { src, c } => {
            format!("{}, {c}", n(*src))
        }
        F::ReverseList(s)
        | F::ScanAdd(s)
        | F::FilterEven(s)
        | F::FilterOdd(s)
        | F::FilterNonzero(s) => n(*s),
        F::AddLists(a, b)
        | F::SubLists(a, b)
        | F::ModLists(a, b)
        | F::Concatenate(a, b)
        | F::Interleave(a, b) => format!("{}, {}", n(*a), n(*b)),
    };
    let _ = write!(out, "{name}({args})");
}

/// Render a program as one statement per line (no trailing newline).
///
/// Lines are named `sequence_1 ..= sequence_k`.
pub fn render_program(p: &Program, style: RenderStyle) -> String {
    render_lines(p, style).join("\n")
}

/// The statements of [`render_program`] individually, output statement last.
pub(crate) fn render_lines(p: &Program, style: RenderStyle) -> Vec<String> {
    let mut out = Vec::with_capacity(p.len() + 1);
    for (i, f) in p.lines().iter().enumerate() {
        let mut s = format!("{} = ", line_name(i));
        write_call(&mut s, f, style);
        out.push(s);
    }
    out.push(format!("output = {}", line_name(p.output())));
    out
}
