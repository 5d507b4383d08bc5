//! Parser for the standard output of an SMT-LIB v2 solver answering
//! `(check-sat)` followed by `(get-model)`.

use super::{ModelAssignment, SmtError};

#[derive(Debug, Clone, PartialEq)]
pub enum SolverVerdict {
    Sat(ModelAssignment),
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String, usize),
    Str(usize),
    List(Vec<Sexp>, usize),
}

impl Sexp {
    fn offset(&self) -> usize {
        match self {
            Sexp::Atom(_, o) | Sexp::Str(o) | Sexp::List(_, o) => *o,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s, _) => Some(s),
            _ => None,
        }
    }

    fn head(&self) -> Option<&str> {
        match self {
            Sexp::List(items, _) => items.first().and_then(Sexp::atom),
            _ => None,
        }
    }
}

fn parse_error(offset: usize, message: impl Into<String>) -> SmtError {
    SmtError::Parse {
        offset,
        message: message.into(),
    }
}

fn read_all(text: &str) -> Result<Vec<Sexp>, SmtError> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    let mut stack: Vec<(Vec<Sexp>, usize)> = Vec::new();
    let mut top = Vec::new();

    fn push(item: Sexp, stack: &mut [(Vec<Sexp>, usize)], top: &mut Vec<Sexp>) {
        match stack.last_mut() {
            Some((items, _)) => items.push(item),
            None => top.push(item),
        }
    }

    while pos < bytes.len() {
        let c = bytes[pos];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
            b';' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b'(' => {
                stack.push((Vec::new(), pos));
                pos += 1;
            }
            b')' => {
                let (items, start) = stack.pop().ok_or_else(|| parse_error(pos, "unbalanced `)`"))?;
                push(Sexp::List(items, start), &mut stack, &mut top);
                pos += 1;
            }
            b'"' => {
                let start = pos;
                pos += 1;
                loop {
                    match bytes.get(pos) {
                        None => return Err(parse_error(start, "unterminated string literal")),
                        // `""` is an escaped quote inside SMT-LIB strings
                        Some(b'"') if bytes.get(pos + 1) == Some(&b'"') => pos += 2,
                        Some(b'"') => {
                            pos += 1;
                            break;
                        }
                        Some(_) => pos += 1,
                    }
                }
                push(Sexp::Str(start), &mut stack, &mut top);
            }
            b'|' => {
                let start = pos;
                let end = text[pos + 1..]
                    .find('|')
                    .ok_or_else(|| parse_error(start, "unterminated quoted symbol"))?;
                let name = &text[pos + 1..pos + 1 + end];
                pos += end + 2;
                push(Sexp::Atom(name.to_string(), start), &mut stack, &mut top);
            }
            _ => {
                let start = pos;
                while pos < bytes.len()
                    && !matches!(bytes[pos], b' ' | b'\t' | b'\r' | b'\n' | b'(' | b')' | b';' | b'"')
                {
                    pos += 1;
                }
                push(Sexp::Atom(text[start..pos].to_string(), start), &mut stack, &mut top);
            }
        }
    }
    if let Some((_, start)) = stack.first() {
        return Err(parse_error(*start, "unbalanced `(`"));
    }
    Ok(top)
}

fn parse_numeral(s: &str, offset: usize) -> Result<f64, SmtError> {
    let valid = !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_digit() || b == b'.')
        && s.bytes().filter(|&b| b == b'.').count() <= 1
        && s.as_bytes()[0].is_ascii_digit()
        && !s.ends_with('.');
    if !valid {
        return Err(parse_error(offset, format!("expected a numeral, found `{s}`")));
    }
    s.parse::<f64>()
        .map_err(|e| parse_error(offset, format!("bad numeral `{s}`: {e}")))
}

fn parse_value(e: &Sexp) -> Result<f64, SmtError> {
    match e {
        Sexp::Atom(s, o) => parse_numeral(s, *o),
        Sexp::List(items, o) => match (items.first().and_then(Sexp::atom), &items[..]) {
            (Some("-"), [_, inner]) => Ok(-parse_value(inner)?),
            (Some("/"), [_, p, q]) => {
                let den = parse_value(q)?;
                if den == 0.0 {
                    return Err(parse_error(q.offset(), "zero denominator"));
                }
                Ok(parse_value(p)? / den)
            }
            _ => Err(parse_error(*o, "unsupported value term")),
        },
        Sexp::Str(o) => Err(parse_error(*o, "string where a real value was expected")),
    }
}

fn parse_model(e: &Sexp) -> Result<ModelAssignment, SmtError> {
    let Sexp::List(items, _) = e else {
        return Err(parse_error(e.offset(), "expected a model block"));
    };
    let defs = match items.first().and_then(Sexp::atom) {
        Some("model") => &items[1..],
        _ => &items[..],
    };
    let mut model = ModelAssignment::default();
    for def in defs {
        let Sexp::List(parts, o) = def else {
            return Err(parse_error(def.offset(), "expected `(define-fun ...)`"));
        };
        match &parts[..] {
            [head, name, Sexp::List(args, _), sort, value] if head.atom() == Some("define-fun") => {
                let name = name
                    .atom()
                    .ok_or_else(|| parse_error(name.offset(), "expected a symbol name"))?;
                // Uninterpreted helpers and non-arithmetic symbols are not part of the assignment.
                if !args.is_empty() || !matches!(sort.atom(), Some("Real" | "Int")) {
                    continue;
                }
                model.insert(name, parse_value(value)?);
            }
            _ => return Err(parse_error(*o, "expected `(define-fun <name> () <sort> <value>)`")),
        }
    }
    Ok(model)
}

/// Reads the first verdict token and, for `sat`, the model that follows.
///
/// `(error ...)` responses are skipped, so a solver complaining that no
/// model is available after `unsat` is accepted.
pub fn parse_solver_output(text: &str) -> Result<SolverVerdict, SmtError> {
    let items = read_all(text)?;
    let mut rest = items.iter().filter(|e| e.head() != Some("error"));
    let status = rest
        .next()
        .ok_or_else(|| parse_error(text.len(), "no check-sat answer in solver output"))?;
    match status.atom() {
        Some("unsat") => Ok(SolverVerdict::Unsat),
        Some("unknown") => Ok(SolverVerdict::Unknown),
        Some("sat") => match rest.next() {
            Some(block @ Sexp::List(..)) => Ok(SolverVerdict::Sat(parse_model(block)?)),
            Some(other) => Err(parse_error(other.offset(), "expected a model after `sat`")),
            None => Err(SmtError::MissingModel),
        },
        _ => Err(parse_error(status.offset(), "expected `sat`, `unsat` or `unknown`")),
    }
}
