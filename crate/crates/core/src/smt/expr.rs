//! A minimal real-arithmetic term language with SMT-LIB v2 printing and
//! native evaluation. There is deliberately no division node.

use std::collections::BTreeMap;
use std::fmt::{self, Write};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String),
    Const(f64),
    Add(Vec<Expr>),
    /// Left-associative: `a - b - c`.
    Sub(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Lt(Box<Expr>, Box<Expr>),
    Le(Box<Expr>, Box<Expr>),
    Gt(Box<Expr>, Box<Expr>),
    Ge(Box<Expr>, Box<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

pub fn var(name: impl Into<String>) -> Expr {
    Expr::Var(name.into())
}

pub fn num(c: f64) -> Expr {
    Expr::Const(c)
}

pub fn sub(terms: Vec<Expr>) -> Expr {
    Expr::Sub(terms)
}

pub fn mul(terms: Vec<Expr>) -> Expr {
    Expr::Mul(terms)
}

pub fn lt(a: Expr, b: Expr) -> Expr {
    Expr::Lt(Box::new(a), Box::new(b))
}

pub fn le(a: Expr, b: Expr) -> Expr {
    Expr::Le(Box::new(a), Box::new(b))
}

pub fn gt(a: Expr, b: Expr) -> Expr {
    Expr::Gt(Box::new(a), Box::new(b))
}

pub fn ge(a: Expr, b: Expr) -> Expr {
    Expr::Ge(Box::new(a), Box::new(b))
}

/// Conjunction; a single conjunct is returned unwrapped.
pub fn and(mut terms: Vec<Expr>) -> Expr {
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        Expr::And(terms)
    }
}

/// Disjunction; a single disjunct is returned unwrapped.
pub fn or(mut terms: Vec<Expr>) -> Expr {
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        Expr::Or(terms)
    }
}

/// Formats a finite double as an SMT-LIB decimal: always with a fractional
/// part, never with an exponent, negatives as `(- c)`.
pub fn format_decimal(c: f64) -> String {
    assert!(c.is_finite(), "non-finite constant {c} in SMT term");
    let mag = c.abs();
    let mut text = format!("{mag}");
    if !text.contains('.') {
        text.push_str(".0");
    }
    if c < 0.0 {
        format!("(- {text})")
    } else {
        text
    }
}

impl Expr {
    fn write_app(f: &mut fmt::Formatter<'_>, op: &str, args: &[&Expr]) -> fmt::Result {
        f.write_char('(')?;
        f.write_str(op)?;
        for arg in args {
            f.write_char(' ')?;
            write!(f, "{arg}")?;
        }
        f.write_char(')')
    }

    /// Calls `visit` on every variable name, in print order.
    pub fn visit_vars<'a>(&'a self, visit: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Var(name) => visit(name),
            Expr::Const(_) => {}
            Expr::Add(ts) | Expr::Sub(ts) | Expr::Mul(ts) | Expr::And(ts) | Expr::Or(ts) => {
                ts.iter().for_each(|t| t.visit_vars(visit))
            }
            Expr::Neg(t) => t.visit_vars(visit),
            Expr::Lt(a, b) | Expr::Le(a, b) | Expr::Gt(a, b) | Expr::Ge(a, b) | Expr::Eq(a, b) => {
                a.visit_vars(visit);
                b.visit_vars(visit);
            }
        }
    }

    /// Evaluates an arithmetic term.
    pub fn eval_real(&self, env: &BTreeMap<String, f64>) -> Result<f64, String> {
        Ok(match self {
            Expr::Var(name) => *env.get(name).ok_or_else(|| name.clone())?,
            Expr::Const(c) => *c,
            Expr::Add(ts) => ts.iter().map(|t| t.eval_real(env)).sum::<Result<f64, _>>()?,
            Expr::Mul(ts) => ts.iter().map(|t| t.eval_real(env)).product::<Result<f64, _>>()?,
            Expr::Sub(ts) => {
                let (first, rest) = ts.split_first().expect("empty subtraction");
                let mut acc = first.eval_real(env)?;
                for t in rest {
                    acc -= t.eval_real(env)?;
                }
                acc
            }
            Expr::Neg(t) => -t.eval_real(env)?,
            other => panic!("boolean term used as real: {other}"),
        })
    }

    /// Evaluates a formula. Comparisons allow a slack of
    /// `eps * max(1, |lhs|, |rhs|)` to absorb rounding of model values.
    pub fn eval_bool(&self, env: &BTreeMap<String, f64>, eps: f64) -> Result<bool, String> {
        let cmp = |a: &Expr, b: &Expr| -> Result<(f64, f64, f64), String> {
            let (x, y) = (a.eval_real(env)?, b.eval_real(env)?);
            Ok((x, y, eps * 1f64.max(x.abs()).max(y.abs())))
        };
        Ok(match self {
            Expr::Lt(a, b) => {
                let (x, y, tol) = cmp(a, b)?;
                x < y + tol
            }
            Expr::Le(a, b) => {
                let (x, y, tol) = cmp(a, b)?;
                x <= y + tol
            }
            Expr::Gt(a, b) => {
                let (x, y, tol) = cmp(a, b)?;
                x + tol > y
            }
            Expr::Ge(a, b) => {
                let (x, y, tol) = cmp(a, b)?;
                x + tol >= y
            }
            Expr::Eq(a, b) => {
                let (x, y, tol) = cmp(a, b)?;
                (x - y).abs() <= tol
            }
            Expr::And(ts) => {
                for t in ts {
                    if !t.eval_bool(env, eps)? {
                        return Ok(false);
                    }
                }
                true
            }
            Expr::Or(ts) => {
                for t in ts {
                    if t.eval_bool(env, eps)? {
                        return Ok(true);
                    }
                }
                false
            }
            other => panic!("real term used as formula: {other}"),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn refs(ts: &[Expr]) -> Vec<&Expr> {
            ts.iter().collect()
        }
        match self {
            Expr::Var(name) => f.write_str(name),
            Expr::Const(c) => f.write_str(&format_decimal(*c)),
            Expr::Add(ts) => Self::write_app(f, "+", &refs(ts)),
            Expr::Sub(ts) => Self::write_app(f, "-", &refs(ts)),
            Expr::Mul(ts) => Self::write_app(f, "*", &refs(ts)),
            Expr::Neg(t) => Self::write_app(f, "-", &[t]),
            Expr::Lt(a, b) => Self::write_app(f, "<", &[a, b]),
            Expr::Le(a, b) => Self::write_app(f, "<=", &[a, b]),
            Expr::Gt(a, b) => Self::write_app(f, ">", &[a, b]),
            Expr::Ge(a, b) => Self::write_app(f, ">=", &[a, b]),
            Expr::Eq(a, b) => Self::write_app(f, "=", &[a, b]),
            Expr::And(ts) => Self::write_app(f, "and", &refs(ts)),
            Expr::Or(ts) => Self::write_app(f, "or", &refs(ts)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_are_exact_and_exponent_free() {
        assert_eq!(format_decimal(3.0), "3.0");
        assert_eq!(format_decimal(-6.0), "(- 6.0)");
        assert_eq!(format_decimal(0.25), "0.25");
        assert_eq!(format_decimal(10000.0), "10000.0");
        assert_eq!(format_decimal(1e-7), "0.0000001");
        assert_eq!(format_decimal(1e21), "1000000000000000000000.0");
    }

    #[test]
    fn printing() {
        let e = and(vec![
            lt(var("x_1"), var("x_0")),
            gt(
                mul(vec![var("g"), sub(vec![var("a_1"), var("a_0")])]),
                Expr::Neg(Box::new(num(2.5))),
            ),
        ]);
        assert_eq!(e.to_string(), "(and (< x_1 x_0) (> (* g (- a_1 a_0)) (- 2.5)))");
        assert_eq!(or(vec![var("p")]).to_string(), "p");
    }

    #[test]
    fn evaluation() {
        let env: BTreeMap<String, f64> = [("x".to_string(), 2.0), ("y".to_string(), 3.0)].into();
        let e = sub(vec![mul(vec![var("x"), var("y")]), num(1.0), var("x")]);
        assert_eq!(e.eval_real(&env).unwrap(), 3.0);
        assert!(lt(var("x"), var("y")).eval_bool(&env, 1e-9).unwrap());
        assert!(!gt(var("x"), var("y")).eval_bool(&env, 1e-9).unwrap());
        assert_eq!(var("z").eval_real(&env), Err("z".to_string()));
    }
}
