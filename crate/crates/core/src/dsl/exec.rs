use std::fmt;

use super::{ByteSeq, Function, LineRef, Program};

/// Default number of primitive element operations a program may perform.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExecErrorKind {
    /// A result element fell outside `[0, 255]`.
    OutOfRange,
    /// The operation needs a non-empty operand.
    EmptyOperand,
    /// Pointwise merger over sequences of different lengths.
    LengthMismatch,
    /// Index or count outside the operand's bounds.
    IndexOutOfBounds,
    /// Parameter outside the function's domain (zero stride, descending range, ...).
    InvalidArgument,
    StepBudgetExceeded,
    UnknownFunction,
    BadReference,
}

impl fmt::Display for ExecErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExecErrorKind::OutOfRange => "result out of range",
            ExecErrorKind::EmptyOperand => "empty operand",
            ExecErrorKind::LengthMismatch => "length mismatch",
            ExecErrorKind::IndexOutOfBounds => "index out of bounds",
            ExecErrorKind::InvalidArgument => "invalid argument",
            ExecErrorKind::StepBudgetExceeded => "step budget exceeded",
            ExecErrorKind::UnknownFunction => "unknown function",
            ExecErrorKind::BadReference => "bad reference",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub line: LineRef,
}

/// Per-line results of a run, stopping at the first error.
pub type Trace = Vec<(LineRef, Result<ByteSeq, ExecError>)>;

struct Budget {
    used: u64,
    limit: u64,
}

impl Budget {
    fn charge(&mut self, n: u64) -> Result<(), ExecErrorKind> {
        self.used = self.used.saturating_add(n);
        if self.used > self.limit {
            Err(ExecErrorKind::StepBudgetExceeded)
        } else {
            Ok(())
        }
    }
}

/// Evaluate every line in order and return the designated output.
pub fn execute(p: &Program, budget: u64) -> Result<ByteSeq, ExecError> {
    let mut values: Vec<ByteSeq> = Vec::with_capacity(p.len());
    let mut budget = Budget {
        used: 0,
        limit: budget,
    };
    for (i, f) in p.lines().iter().enumerate() {
        let v = eval_line(f, &values, &mut budget).map_err(|kind| ExecError { kind, line: i })?;
        values.push(v);
    }
    Ok(values.swap_remove(p.output()))
}

/// Like [`execute`] but yields every line's value; the trace ends with the
/// first failing line.
pub fn execute_with_feedback(p: &Program, budget: u64) -> Trace {
    let mut values: Vec<ByteSeq> = Vec::with_capacity(p.len());
    let mut trace = Trace::with_capacity(p.len());
    let mut budget = Budget {
        used: 0,
        limit: budget,
    };
    for (i, f) in p.lines().iter().enumerate() {
        match eval_line(f, &values, &mut budget) {
            Ok(v) => {
                trace.push((i, Ok(v.clone())));
                values.push(v);
            }
            Err(kind) => {
                trace.push((i, Err(ExecError { kind, line: i })));
                break;
            }
        }
    }
    trace
}

fn get(values: &[ByteSeq], r: LineRef) -> Result<&[u8], ExecErrorKind> {
    values
        .get(r)
        .map(|v| v.as_slice())
        .ok_or(ExecErrorKind::BadReference)
}

fn byte(v: u32) -> Result<u8, ExecErrorKind> {
    u8::try_from(v).map_err(|_| ExecErrorKind::OutOfRange)
}

fn pointwise(
    a: &[u8],
    b: &[u8],
    op: impl Fn(u8, u8) -> Result<u8, ExecErrorKind>,
) -> Result<ByteSeq, ExecErrorKind> {
    if a.len() != b.len() {
        return Err(ExecErrorKind::LengthMismatch);
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| op(x, y))
        .collect::<Result<Vec<_>, _>>()
        .map(ByteSeq::from)
}

fn map_each(
    s: &[u8],
    op: impl Fn(u8) -> Result<u8, ExecErrorKind>,
) -> Result<ByteSeq, ExecErrorKind> {
    s.iter()
        .map(|&x| op(x))
        .collect::<Result<Vec<_>, _>>()
        .map(ByteSeq::from)
}

fn stride_range(start: u8, end: u8, step: u32) -> Result<ByteSeq, ExecErrorKind> {
    if start > end || step == 0 {
        return Err(ExecErrorKind::InvalidArgument);
    }
    Ok((start as u32..=end as u32)
        .step_by(step as usize)
        .map(|v| v as u8)
        .collect())
}

fn slice(s: &[u8], start: u32, end: u32, step: u32) -> Result<ByteSeq, ExecErrorKind> {
    if step == 0 {
        return Err(ExecErrorKind::InvalidArgument);
    }
    let (start, end) = (start as usize, end as usize);
    if start > end || end > s.len() {
        return Err(ExecErrorKind::IndexOutOfBounds);
    }
    Ok(s[start..end]
        .iter()
        .step_by(step as usize)
        .copied()
        .collect())
}

fn extremes(s: &[u8], n: u32, largest: bool) -> Result<ByteSeq, ExecErrorKind> {
    if s.is_empty() {
        return Err(ExecErrorKind::EmptyOperand);
    }
    let n = n as usize;
    if n > s.len() {
        return Err(ExecErrorKind::IndexOutOfBounds);
    }
    let mut sorted = s.to_vec();
    if largest {
        sorted.sort_unstable_by(|a, b| b.cmp(a));
    } else {
        sorted.sort_unstable();
    }
    sorted.truncate(n);
    Ok(sorted.into())
}

/// Evaluate one line against already computed `values`.
pub(crate) fn apply(f: &Function, values: &[ByteSeq]) -> Result<ByteSeq, ExecErrorKind> {
    eval_line(
        f,
        values,
        &mut Budget {
            used: 0,
            limit: DEFAULT_STEP_BUDGET,
        },
    )
}

fn eval_line(
    f: &Function,
    values: &[ByteSeq],
    budget: &mut Budget,
) -> Result<ByteSeq, ExecErrorKind> {
    use Function as F;

    let input_len: u64 = f
        .refs()
        .iter()
        .map(|&r| get(values, r).map(|s| s.len() as u64))
        .sum::<Result<u64, _>>()?;
    budget.charge(input_len)?;

    // Repetition can blow up; charge the output before allocating it.
    match *f {
        F::RepeatNum { count, .. } => budget.charge(count as u64)?,
        F::RepeatList { src, times } => {
            budget.charge(get(values, src)?.len() as u64 * times as u64)?
        }
        _ => {}
    }

    let out: ByteSeq = match *f {
        F::SetList(ref v) => v.clone(),
        F::RangeUp { start, end } => stride_range(start, end, 1)?,
        F::RangeUpStep { start, end, step } => stride_range(start, end, step)?,
        F::RepeatNum { count, value } => vec![value; count as usize].into(),
        F::Substitute { src, old, new } => get(values, src)?
            .iter()
            .map(|&x| if x == old { new } else { x })
            .collect(),
        F::ReverseList(src) => get(values, src)?.iter().rev().copied().collect(),
        F::Subseq { src, start, end } => slice(get(values, src)?, start, end, 1)?,
        F::SubseqStep {
            src,
            start,
            end,
            step,
        } => slice(get(values, src)?, start, end, step)?,
        F::RepeatList { src, times } => {
            if times == 0 {
                return Err(ExecErrorKind::InvalidArgument);
            }
            get(values, src)?.repeat(times as usize).into()
        }
        F::MaxN { src, n } => extremes(get(values, src)?, n, true)?,
        F::MinN { src, n } => extremes(get(values, src)?, n, false)?,
        F::AddConst { src, c } => map_each(get(values, src)?, |x| {
            x.checked_add(c).ok_or(ExecErrorKind::OutOfRange)
        })?,
        F::SubConst { src, c } => map_each(get(values, src)?, |x| {
            x.checked_sub(c).ok_or(ExecErrorKind::OutOfRange)
        })?,
        F::ModConst { src, c } => {
            if c == 0 {
                return Err(ExecErrorKind::InvalidArgument);
            }
            map_each(get(values, src)?, |x| Ok(x % c))?
        }
        F::ScanAdd(src) => {
            let mut acc = 0u32;
            let mut out = Vec::new();
            for &x in get(values, src)? {
                acc += x as u32;
                out.push(byte(acc)?);
            }
            out.into()
        }
        F::FilterEven(src) => get(values, src)?
            .iter()
            .copied()
            .filter(|x| x % 2 == 0)
            .collect(),
        F::FilterOdd(src) => get(values, src)?
            .iter()
            .copied()
            .filter(|x| x % 2 == 1)
            .collect(),
        F::FilterNonzero(src) => get(values, src)?
            .iter()
            .copied()
            .filter(|&x| x != 0)
            .collect(),
        F::AddLists(a, b) => pointwise(get(values, a)?, get(values, b)?, |x, y| {
            x.checked_add(y).ok_or(ExecErrorKind::OutOfRange)
        })?,
        F::SubLists(a, b) => pointwise(get(values, a)?, get(values, b)?, |x, y| {
            x.checked_sub(y).ok_or(ExecErrorKind::OutOfRange)
        })?,
        F::ModLists(a, b) => pointwise(get(values, a)?, get(values, b)?, |x, y| {
            x.checked_rem(y).ok_or(ExecErrorKind::InvalidArgument)
        })?,
        F::Concatenate(a, b) => {
            let (a, b) = (get(values, a)?, get(values, b)?);
            a.iter().chain(b).copied().collect()
        }
        F::Interleave(a, b) => interleave(get(values, a)?, get(values, b)?),
    };

    budget.charge(out.len() as u64)?;
    Ok(out)
}

/// Alternate elements of `a` and `b`; the tail of the longer one is appended.
fn interleave(a: &[u8], b: &[u8]) -> ByteSeq {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let common = a.len().min(b.len());
    for i in 0..common {
        out.push(a[i]);
        out.push(b[i]);
    }
    out.extend_from_slice(&a[common..]);
    out.extend_from_slice(&b[common..]);
    out.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Function as F;

    fn run(lines: Vec<Function>) -> Result<Vec<u8>, ExecError> {
        let p = Program::from_lines(lines).unwrap();
        execute(&p, DEFAULT_STEP_BUDGET).map(ByteSeq::into_inner)
    }

    fn err_kind(lines: Vec<Function>) -> ExecErrorKind {
        run(lines).unwrap_err().kind
    }

    #[test]
    fn range_is_inclusive() {
        let v = run(vec![F::RangeUp {
            start: 149,
            end: 171,
        }])
        .unwrap();
        assert_eq!(v, (149..=171).collect::<Vec<u8>>());
        let v = run(vec![F::RangeUpStep {
            start: 10,
            end: 20,
            step: 4,
        }])
        .unwrap();
        assert_eq!(v, vec![10, 14, 18]);
        assert_eq!(
            run(vec![F::RangeUp {
                start: 255,
                end: 255
            }])
            .unwrap(),
            vec![255]
        );
        assert_eq!(
            err_kind(vec![F::RangeUp { start: 5, end: 4 }]),
            ExecErrorKind::InvalidArgument
        );
    }

    #[test]
    fn substitute_replaces_every_occurrence() {
        let v = run(vec![
            F::SetList(vec![1, 2, 1, 3].into()),
            F::Substitute {
                src: 0,
                old: 1,
                new: 9,
            },
        ]);
        assert_eq!(v.unwrap(), vec![9, 2, 9, 3]);
        let v = run(vec![
            F::RangeUp { start: 18, end: 28 },
            F::Substitute {
                src: 0,
                old: 28,
                new: 177,
            },
        ]);
        assert_eq!(
            v.unwrap(),
            vec![18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 177]
        );
    }

    #[test]
    fn reverse_and_repeat() {
        let v = run(vec![F::RangeUp { start: 18, end: 28 }, F::ReverseList(0)]).unwrap();
        assert_eq!(v, (18..=28).rev().collect::<Vec<u8>>());
        assert_eq!(
            run(vec![F::RepeatNum {
                count: 3,
                value: 237
            }])
            .unwrap(),
            vec![237; 3]
        );
        let v = run(vec![
            F::SetList(vec![1, 2].into()),
            F::RepeatList { src: 0, times: 3 },
        ])
        .unwrap();
        assert_eq!(v, vec![1, 2, 1, 2, 1, 2]);
        let e = err_kind(vec![
            F::SetList(vec![1].into()),
            F::RepeatList { src: 0, times: 0 },
        ]);
        assert_eq!(e, ExecErrorKind::InvalidArgument);
    }

    #[test]
    fn concatenate_range_and_repeat() {
        let v = run(vec![
            F::RangeUp {
                start: 196,
                end: 213,
            },
            F::RepeatNum {
                count: 7,
                value: 80,
            },
            F::Concatenate(0, 1),
        ])
        .unwrap();
        let mut expected: Vec<u8> = (196..214).collect();
        expected.extend([80; 7]);
        assert_eq!(v, expected);
    }

    #[test]
    fn subseq_is_zero_based_end_exclusive() {
        let base = F::SetList(vec![10, 11, 12, 13, 14].into());
        assert_eq!(
            run(vec![
                base.clone(),
                F::Subseq {
                    src: 0,
                    start: 1,
                    end: 3
                }
            ])
            .unwrap(),
            vec![11, 12]
        );
        let v = run(vec![
            base.clone(),
            F::SubseqStep {
                src: 0,
                start: 0,
                end: 5,
                step: 2,
            },
        ])
        .unwrap();
        assert_eq!(v, vec![10, 12, 14]);
        assert_eq!(
            run(vec![
                base.clone(),
                F::Subseq {
                    src: 0,
                    start: 5,
                    end: 5
                }
            ])
            .unwrap(),
            Vec::<u8>::new()
        );
        let e = err_kind(vec![
            base.clone(),
            F::Subseq {
                src: 0,
                start: 2,
                end: 6,
            },
        ]);
        assert_eq!(e, ExecErrorKind::IndexOutOfBounds);
        let e = err_kind(vec![
            base,
            F::Subseq {
                src: 0,
                start: 3,
                end: 2,
            },
        ]);
        assert_eq!(e, ExecErrorKind::IndexOutOfBounds);
    }

    #[test]
    fn max_and_min_are_sorted() {
        let base = F::SetList(vec![5, 1, 9, 3, 9].into());
        assert_eq!(
            run(vec![base.clone(), F::MaxN { src: 0, n: 3 }]).unwrap(),
            vec![9, 9, 5]
        );
        assert_eq!(
            run(vec![base.clone(), F::MinN { src: 0, n: 2 }]).unwrap(),
            vec![1, 3]
        );
        assert_eq!(
            err_kind(vec![base, F::MinN { src: 0, n: 6 }]),
            ExecErrorKind::IndexOutOfBounds
        );
        let empty = vec![F::SetList(ByteSeq::default()), F::MaxN { src: 0, n: 0 }];
        assert_eq!(err_kind(empty), ExecErrorKind::EmptyOperand);
    }

    #[test]
    fn const_arithmetic_checks_range() {
        let base = F::SetList(vec![250, 3].into());
        assert_eq!(
            run(vec![base.clone(), F::AddConst { src: 0, c: 5 }]).unwrap(),
            vec![255, 8]
        );
        assert_eq!(
            err_kind(vec![base.clone(), F::AddConst { src: 0, c: 6 }]),
            ExecErrorKind::OutOfRange
        );
        assert_eq!(
            err_kind(vec![base.clone(), F::SubConst { src: 0, c: 4 }]),
            ExecErrorKind::OutOfRange
        );
        assert_eq!(
            run(vec![base.clone(), F::ModConst { src: 0, c: 7 }]).unwrap(),
            vec![5, 3]
        );
        assert_eq!(
            err_kind(vec![base, F::ModConst { src: 0, c: 0 }]),
            ExecErrorKind::InvalidArgument
        );
    }

    #[test]
    fn scan_add_overflow_is_an_error() {
        let ok = run(vec![F::SetList(vec![1, 2, 3].into()), F::ScanAdd(0)]).unwrap();
        assert_eq!(ok, vec![1, 3, 6]);
        let e = run(vec![F::SetList(vec![100, 100, 100].into()), F::ScanAdd(0)]).unwrap_err();
        assert_eq!(
            e,
            ExecError {
                kind: ExecErrorKind::OutOfRange,
                line: 1
            }
        );
    }

    #[test]
    fn filters_preserve_order() {
        let base = F::SetList(vec![0, 3, 4, 0, 7, 8].into());
        assert_eq!(
            run(vec![base.clone(), F::FilterEven(0)]).unwrap(),
            vec![0, 4, 0, 8]
        );
        assert_eq!(
            run(vec![base.clone(), F::FilterOdd(0)]).unwrap(),
            vec![3, 7]
        );
        assert_eq!(
            run(vec![base, F::FilterNonzero(0)]).unwrap(),
            vec![3, 4, 7, 8]
        );
    }

    #[test]
    fn pointwise_mergers() {
        let a = F::SetList(vec![1, 2].into());
        let b = F::SetList(vec![1, 2, 3].into());
        assert_eq!(
            err_kind(vec![a.clone(), b, F::AddLists(0, 1)]),
            ExecErrorKind::LengthMismatch
        );
        let c = F::SetList(vec![5, 7].into());
        assert_eq!(
            run(vec![a.clone(), c.clone(), F::AddLists(0, 1)]).unwrap(),
            vec![6, 9]
        );
        assert_eq!(
            run(vec![a.clone(), c.clone(), F::SubLists(1, 0)]).unwrap(),
            vec![4, 5]
        );
        assert_eq!(
            err_kind(vec![a.clone(), c.clone(), F::SubLists(0, 1)]),
            ExecErrorKind::OutOfRange
        );
        assert_eq!(
            run(vec![a.clone(), c.clone(), F::ModLists(1, 0)]).unwrap(),
            vec![0, 1]
        );
        let z = F::SetList(vec![0, 1].into());
        assert_eq!(
            err_kind(vec![a, z, F::ModLists(0, 1)]),
            ExecErrorKind::InvalidArgument
        );
    }

    #[test]
    fn interleave_appends_longer_tail() {
        let a = F::SetList(vec![1, 2, 3, 4].into());
        let b = F::SetList(vec![9, 8].into());
        assert_eq!(
            run(vec![a.clone(), b.clone(), F::Interleave(0, 1)]).unwrap(),
            vec![1, 9, 2, 8, 3, 4]
        );
        assert_eq!(
            run(vec![a, b, F::Interleave(1, 0)]).unwrap(),
            vec![9, 1, 8, 2, 3, 4]
        );
    }

    #[test]
    fn budget_is_enforced_before_allocation() {
        let p = Program::from_lines(vec![
            F::RepeatNum {
                count: 25,
                value: 1,
            },
            F::RepeatList { src: 0, times: 25 },
            F::RepeatList { src: 1, times: 25 },
            F::RepeatList { src: 2, times: 25 },
        ])
        .unwrap();
        assert!(execute(&p, DEFAULT_STEP_BUDGET).is_ok());
        let e = execute(&p, 10_000).unwrap_err();
        assert_eq!(
            e,
            ExecError {
                kind: ExecErrorKind::StepBudgetExceeded,
                line: 2
            }
        );
    }

    #[test]
    fn output_ref_may_point_before_last_line() {
        let p = Program::new(vec![F::RangeUp { start: 1, end: 2 }, F::ReverseList(0)], 0).unwrap();
        assert_eq!(execute(&p, 100).unwrap().into_inner(), vec![1, 2]);
    }

    #[test]
    fn feedback_trace_stops_at_first_error() {
        let p = Program::from_lines(vec![
            F::SetList(vec![100, 100, 100].into()),
            F::ReverseList(0),
            F::ScanAdd(1),
            F::ReverseList(2),
        ])
        .unwrap();
        let trace = execute_with_feedback(&p, DEFAULT_STEP_BUDGET);
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[1].1.as_ref().unwrap().as_slice(), &[100, 100, 100]);
        assert_eq!(
            trace[2].1,
            Err(ExecError {
                kind: ExecErrorKind::OutOfRange,
                line: 2
            })
        );
    }

    #[test]
    fn single_line_trace_matches_execute() {
        let p = Program::from_lines(vec![F::RepeatNum {
            count: 22,
            value: 237,
        }])
        .unwrap();
        let trace = execute_with_feedback(&p, DEFAULT_STEP_BUDGET);
        assert_eq!(trace.len(), 1);
        assert_eq!(
            trace[0].1.as_ref().unwrap(),
            &execute(&p, DEFAULT_STEP_BUDGET).unwrap()
        );
    }
}
