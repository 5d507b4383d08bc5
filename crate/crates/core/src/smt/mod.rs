//! SMT-LIB v2 encoding of the TTC barrier verification problem.
//!
//! Vehicles are indexed from the front of the platoon: vehicle 0 leads and
//! vehicle `i` follows vehicle `i - 1`. Symbols are named `x_<i>`, `v_<i>`
//! and `a_<i>`.
//!
//! For each pair let `g = x_{i-1} - x_i - L` and `d = v_i - v_{i-1}`. The
//! ordering constraints force `g > 0` and `d > 0`, so the barrier conditions
//! are multiplied through by `d` and `d^2` to stay in polynomial arithmetic:
//!
//! | condition   | encoded as                       |
//! |-------------|----------------------------------|
//! | `B >= 0`    | `g >= t_safe * d`                |
//! | `dB/dt < 0` | `g * (a_i - a_{i-1}) > -(d * d)` |
//! | filter      | `a_i * g <= a_{i-1} * g - d * d` |
//!
//! The open-loop query asks for any physically admissible state where the
//! barrier holds but is decreasing. Sat means a counterexample exists. The
//! closed-loop query adds the safety filter on every follower; unsat there
//! proves `B >= 0 => dB/dt >= 0` for the filtered system.

mod expr;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::BarrierParams;

pub use expr::{format_decimal, Expr};
pub use parse::{parse_solver_output, SolverVerdict};

use expr::{and, ge, gt, le, lt, mul, num, or, sub, var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmtError {
    #[error("invalid query spec: {0}")]
    InvalidSpec(String),
    #[error("model has no value for `{0}`")]
    IncompleteModel(String),
    #[error("unrecognized solver output at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("solver answered sat but printed no model")]
    MissingModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    /// Unconstrained follower accelerations.
    #[serde(alias = "openloop", alias = "open_loop")]
    Open,
    /// Follower accelerations restricted by the safety filter.
    #[serde(alias = "closedloop", alias = "closed_loop")]
    Closed,
}

impl QueryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::Open => "open",
            QueryMode::Closed => "closed",
        }
    }
}

/// Half-open interval `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo < value && value <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxBounds {
    pub x: Interval,
    pub v: Interval,
}

impl Default for BoxBounds {
    fn default() -> Self {
        Self {
            x: Interval::new(0.0, 10_000.0),
            v: Interval::new(0.0, 60.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    /// Number of vehicles, at least 2.
    pub n: usize,
    pub mode: QueryMode,
    pub params: BarrierParams,
    pub bounds: BoxBounds,
    /// Vehicle length `L` used in every gap.
    pub length: f64,
}

pub const DEFAULT_VEHICLE_LENGTH: f64 = 5.0;

impl QuerySpec {
    pub fn new(n: usize, mode: QueryMode) -> Self {
        Self {
            n,
            mode,
            params: BarrierParams::default(),
            bounds: BoxBounds::default(),
            length: DEFAULT_VEHICLE_LENGTH,
        }
    }

    pub fn validate(&self) -> Result<(), SmtError> {
        if self.n < 2 {
            return Err(SmtError::InvalidSpec(format!(
                "need at least 2 vehicles to form a pair, got {}",
                self.n
            )));
        }
        for (name, iv) in [("x", self.bounds.x), ("v", self.bounds.v)] {
            if !(iv.lo < iv.hi) {
                return Err(SmtError::InvalidSpec(format!(
                    "empty {name} bound ({}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        if !(self.length >= 0.0) {
            return Err(SmtError::InvalidSpec(format!(
                "negative vehicle length {}",
                self.length
            )));
        }
        self.params.validate().map_err(|e| SmtError::InvalidSpec(e.to_string()))
    }
}

pub fn x_name(i: usize) -> String {
    format!("x_{i}")
}

pub fn v_name(i: usize) -> String {
    format!("v_{i}")
}

pub fn a_name(i: usize) -> String {
    format!("a_{i}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub declarations: Vec<String>,
    pub assertions: Vec<Expr>,
    pub goal: Expr,
}

impl ConstraintSystem {
    /// Symbols used in assertions or goal that are not declared.
    pub fn undeclared_symbols(&self) -> BTreeSet<String> {
        let declared: BTreeSet<&str> = self.declarations.iter().map(String::as_str).collect();
        let mut missing = BTreeSet::new();
        let mut visit = |name: &str| {
            if !declared.contains(name) {
                missing.insert(name.to_string());
            }
        };
        for e in self.assertions.iter().chain(std::iter::once(&self.goal)) {
            e.visit_vars(&mut visit);
        }
        missing
    }
}

/// Gap and closing speed of pair `(i, i - 1)` as terms.
fn pair_terms(i: usize, length: f64) -> (Expr, Expr) {
    let g = sub(vec![var(x_name(i - 1)), var(x_name(i)), num(length)]);
    let d = sub(vec![var(v_name(i)), var(v_name(i - 1))]);
    (g, d)
}

fn neg(e: Expr) -> Expr {
    Expr::Neg(Box::new(e))
}

fn base_system(spec: &QuerySpec) -> Result<ConstraintSystem, SmtError> {
    spec.validate()?;
    let p = &spec.params;
    let b = &spec.bounds;
    let mut declarations = Vec::with_capacity(3 * spec.n);
    let mut assertions = Vec::new();

    for i in 0..spec.n {
        let (x, v, a) = (x_name(i), v_name(i), a_name(i));
        declarations.extend([x.clone(), v.clone(), a.clone()]);
        // physical constraints
        assertions.push(and(vec![
            gt(var(&x), num(0.0)),
            gt(var(&v), num(0.0)),
            le(num(p.a_min), var(&a)),
            le(var(&a), num(p.a_max)),
        ]));
        // plausibility box
        assertions.push(and(vec![
            gt(var(&x), num(b.x.lo)),
            le(var(&x), num(b.x.hi)),
            gt(var(&v), num(b.v.lo)),
            le(var(&v), num(b.v.hi)),
        ]));
    }
    for i in 1..spec.n {
        let (g, _) = pair_terms(i, spec.length);
        assertions.push(lt(var(x_name(i)), var(x_name(i - 1))));
        assertions.push(gt(var(v_name(i)), var(v_name(i - 1))));
        assertions.push(gt(g, num(0.0)));
    }

    let goal = or((1..spec.n)
        .map(|i| {
            let (g, d) = pair_terms(i, spec.length);
            let rel_accel = sub(vec![var(a_name(i)), var(a_name(i - 1))]);
            and(vec![
                ge(g.clone(), mul(vec![num(p.t_safe), d.clone()])),
                gt(mul(vec![g, rel_accel]), neg(mul(vec![d.clone(), d]))),
            ])
        })
        .collect());

    Ok(ConstraintSystem {
        declarations,
        assertions,
        goal,
    })
}

/// Safety-filter constraint `a_i * g <= a_{i-1} * g - d^2` for pair `(i, i-1)`.
fn filter_constraint(i: usize, length: f64) -> Expr {
    let (g, d) = pair_terms(i, length);
    le(
        mul(vec![var(a_name(i)), g.clone()]),
        sub(vec![mul(vec![var(a_name(i - 1)), g]), mul(vec![d.clone(), d])]),
    )
}

pub fn build_open_loop_query(spec: &QuerySpec) -> Result<ConstraintSystem, SmtError> {
    if spec.mode != QueryMode::Open {
        return Err(SmtError::InvalidSpec("expected an open-loop spec".into()));
    }
    base_system(spec)
}

pub fn build_closed_loop_query(spec: &QuerySpec) -> Result<ConstraintSystem, SmtError> {
    if spec.mode != QueryMode::Closed {
        return Err(SmtError::InvalidSpec("expected a closed-loop spec".into()));
    }
    let mut system = base_system(spec)?;
    system
        .assertions
        .extend((1..spec.n).map(|i| filter_constraint(i, spec.length)));
    Ok(system)
}

/// Dispatches on `spec.mode`.
pub fn build_query(spec: &QuerySpec) -> Result<ConstraintSystem, SmtError> {
    match spec.mode {
        QueryMode::Open => build_open_loop_query(spec),
        QueryMode::Closed => build_closed_loop_query(spec),
    }
}

pub fn emit_smtlib(system: &ConstraintSystem) -> String {
    let mut out = String::from("(set-logic QF_NRA)\n");
    for name in &system.declarations {
        writeln!(out, "(declare-const {name} Real)").unwrap();
    }
    for assertion in system.assertions.iter().chain(std::iter::once(&system.goal)) {
        // An empty disjunction is `false`; skip it rather than emit `(or)`.
        if matches!(assertion, Expr::Or(ts) if ts.is_empty()) {
            continue;
        }
        writeln!(out, "(assert {assertion})").unwrap();
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

/// Values of a solver model, keyed by symbol name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelAssignment {
    pub values: BTreeMap<String, f64>,
}

impl ModelAssignment {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    /// `(x, v, a)` of vehicle `i`.
    pub fn vehicle(&self, i: usize) -> Option<(f64, f64, f64)> {
        Some((self.get(&x_name(i))?, self.get(&v_name(i))?, self.get(&a_name(i))?))
    }
}

/// Re-checks a solver model against a freshly built constraint system using
/// floating-point arithmetic. True iff every assertion and the goal hold.
pub fn validate_counterexample(model: &ModelAssignment, spec: &QuerySpec) -> Result<bool, SmtError> {
    let system = build_query(spec)?;
    if let Some(missing) = system
        .declarations
        .iter()
        .find(|name| !model.values.contains_key(*name))
    {
        return Err(SmtError::IncompleteModel(missing.clone()));
    }
    let eps = spec.params.eps;
    for e in system.assertions.iter().chain(std::iter::once(&system.goal)) {
        if !e.eval_bool(&model.values, eps).map_err(SmtError::IncompleteModel)? {
            return Ok(false);
        }
    }
    Ok(true)
}
