//! Running queries through an external SMT-LIB solver, and a brute-force
//! grid oracle that decides the same question independently.
//!
//! # Oracle soundness
//!
//! `B` and `dB/dt` of a pair depend on the state only through the gap `g`,
//! the closing speed `d` and the two accelerations. The oracle therefore
//! samples `(g, d, a_follower, a_leader)` directly instead of raw positions
//! and velocities. Any sampled point with `g > 0` and `d > 0` is realized by
//! concrete positions and velocities inside the query's box (see
//! [`OracleWitness::to_model`]), and further vehicles behind the pair can
//! always be added without violating their own constraints, so the oracle's
//! search space is a projection of the solver's, up to grid resolution.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{barrier_derivative, barrier_value, safe_accel_bound, BarrierValue, PairState};
use crate::smt::{a_name, v_name, x_name, ModelAssignment, QueryMode, QuerySpec, SmtError, SolverVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Query written to a temporary `.smt2` file whose path is the last argument.
    #[default]
    TempFile,
    /// Query piped to standard input.
    Stdin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub executable_path: PathBuf,
    pub extra_args: Vec<String>,
    /// Seconds.
    pub timeout: f64,
    pub input: InputMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            executable_path: PathBuf::from("z3"),
            extra_args: Vec::new(),
            timeout: 30.0,
            input: InputMode::TempFile,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver did not answer within {0:?}")]
    Timeout(Duration),
    #[error("could not run solver: {0}")]
    LaunchFailure(String),
    #[error(transparent)]
    Output(#[from] SmtError),
}

/// Raw artifacts of one solver invocation.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub verdict: SolverVerdict,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

#[cfg(not(target_family = "wasm"))]
pub use process::run_solver;

#[cfg(not(target_family = "wasm"))]
mod process {
    use std::io::{Read, Write};
    use std::process::{Command, Stdio};
    use std::thread;
    use std::time::{Duration, Instant};

    use wait_timeout::ChildExt;

    use super::{InputMode, SolverConfig, SolverError, SolverRun};
    use crate::smt::parse_solver_output;

    fn launch_failure(e: impl std::fmt::Display) -> SolverError {
        SolverError::LaunchFailure(e.to_string())
    }

    /// Spawns one solver process, feeds it the query and parses its answer.
    /// The exit code is ignored; only standard output decides the verdict.
    pub fn run_solver(query_text: &str, config: &SolverConfig) -> Result<SolverRun, SolverError> {
        if !(config.timeout > 0.0) {
            return Err(launch_failure(format!(
                "timeout must be positive, got {}",
                config.timeout
            )));
        }
        let timeout = Duration::from_secs_f64(config.timeout);
        let mut cmd = Command::new(&config.executable_path);
        cmd.args(&config.extra_args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());

        let query_file = match config.input {
            InputMode::TempFile => {
                let mut file = tempfile::Builder::new()
                    .prefix("bcv-query-")
                    .suffix(".smt2")
                    .tempfile()
                    .map_err(launch_failure)?;
                file.write_all(query_text.as_bytes()).map_err(launch_failure)?;
                file.flush().map_err(launch_failure)?;
                cmd.arg(file.path()).stdin(Stdio::null());
                Some(file)
            }
            InputMode::Stdin => {
                cmd.stdin(Stdio::piped());
                None
            }
        };

        let start = Instant::now();
        let mut child = cmd
            .spawn()
            .map_err(|e| launch_failure(format!("{}: {e}", config.executable_path.display())))?;

        let mut stdout_pipe = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");
        let stdout_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            stdout_pipe.read_to_end(&mut buf).map(|_| buf)
        });
        let stderr_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            stderr_pipe.read_to_end(&mut buf).map(|_| buf)
        });

        if let Some(mut stdin) = child.stdin.take() {
            let text = query_text.to_owned();
            // A solver that exits early closes the pipe; the write error is moot then.
            thread::spawn(move || {
                let _ = stdin.write_all(text.as_bytes());
            });
        }

        let status = child.wait_timeout(timeout).map_err(launch_failure)?;
        if status.is_none() {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SolverError::Timeout(timeout));
        }
        drop(query_file);

        let stdout = stdout_reader
            .join()
            .expect("stdout reader panicked")
            .map_err(launch_failure)?;
        let stderr = stderr_reader
            .join()
            .expect("stderr reader panicked")
            .unwrap_or_default();
        let stdout = String::from_utf8_lossy(&stdout).into_owned();
        let stderr = String::from_utf8_lossy(&stderr).into_owned();
        let verdict = parse_solver_output(&stdout)?;
        Ok(SolverRun {
            verdict,
            stdout,
            stderr,
            elapsed: start.elapsed(),
        })
    }
}

/// Closed interval `[lo, hi]` sampled at `resolution` evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBounds {
    pub gap: GridAxis,
    pub closing_speed: GridAxis,
    pub a_follower: GridAxis,
    pub a_leader: GridAxis,
    pub resolution: usize,
}

impl Default for GridBounds {
    fn default() -> Self {
        let accel = GridAxis { lo: -6.0, hi: 3.0 };
        Self {
            gap: GridAxis { lo: 1.0, hi: 100.0 },
            closing_speed: GridAxis { lo: 0.5, hi: 20.0 },
            a_follower: accel,
            a_leader: accel,
            resolution: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid axis `{0}` has lo >= hi")]
    EmptyAxis(&'static str),
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
}

impl GridBounds {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.resolution < 2 {
            return Err(GridError::Resolution(self.resolution));
        }
        for (name, axis) in self.axes() {
            if !(axis.lo < axis.hi) {
                return Err(GridError::EmptyAxis(name));
            }
        }
        Ok(())
    }

    fn axes(&self) -> [(&'static str, GridAxis); 4] {
        [
            ("gap", self.gap),
            ("closing_speed", self.closing_speed),
            ("a_follower", self.a_follower),
            ("a_leader", self.a_leader),
        ]
    }
}

fn samples(axis: GridAxis, resolution: usize) -> Vec<f64> {
    let step = (axis.hi - axis.lo) / (resolution - 1) as f64;
    (0..resolution)
        .map(|k| {
            if k + 1 == resolution {
                axis.hi
            } else {
                axis.lo + step * k as f64
            }
        })
        .collect()
}

/// A violating grid point in reduced coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleWitness {
    pub gap: f64,
    pub closing_speed: f64,
    pub a_follower: f64,
    pub a_leader: f64,
}

const WITNESS_LEADER_SPEED: f64 = 1.0;
const WITNESS_REAR_POSITION: f64 = 1.0;
const TRAILING_GAP: f64 = 100.0;
const TRAILING_CLOSING_SPEED: f64 = 0.01;

impl OracleWitness {
    pub fn pair(&self) -> PairState {
        PairState::from_relative(
            self.gap,
            WITNESS_LEADER_SPEED,
            WITNESS_LEADER_SPEED + self.closing_speed,
            self.a_leader,
            self.a_follower,
        )
    }

    /// Concrete positions, velocities and accelerations for all `spec.n`
    /// vehicles with the witness on pair `(1, 0)`. Vehicles behind trail at a
    /// large gap with a tiny closing speed. `None` when the construction does
    /// not fit inside the spec's box bounds or acceleration envelope.
    pub fn to_model(&self, spec: &QuerySpec) -> Option<ModelAssignment> {
        let n = spec.n;
        let p = &spec.params;
        let mut v = vec![WITNESS_LEADER_SPEED, WITNESS_LEADER_SPEED + self.closing_speed];
        let mut a = vec![self.a_leader, self.a_follower];
        for i in 2..n {
            v.push(v[i - 1] + TRAILING_CLOSING_SPEED);
            let next = match spec.mode {
                QueryMode::Open => a[i - 1],
                QueryMode::Closed => a[i - 1] - TRAILING_CLOSING_SPEED * TRAILING_CLOSING_SPEED / TRAILING_GAP - 1e-6,
            };
            a.push(next);
        }
        let mut x = vec![0.0; n];
        x[n - 1] = spec.bounds.x.lo.max(0.0) + WITNESS_REAR_POSITION;
        for i in (0..n - 1).rev() {
            let gap = if i == 0 { self.gap } else { TRAILING_GAP };
            x[i] = x[i + 1] + spec.length + gap;
        }
        let in_box = x.iter().all(|&xi| spec.bounds.x.contains(xi))
            && v.iter().all(|&vi| spec.bounds.v.contains(vi))
            && a.iter().all(|&ai| p.a_min <= ai && ai <= p.a_max);
        if !in_box {
            return None;
        }
        let mut model = ModelAssignment::default();
        for i in 0..n {
            model.insert(x_name(i), x[i]);
            model.insert(v_name(i), v[i]);
            model.insert(a_name(i), a[i]);
        }
        Some(model)
    }
}

/// True when the pair satisfies `B >= 0` and `dB/dt < 0` (and, in closed-loop
/// mode, the safety filter). `dB/dt` must be below `-eps` to count, so
/// rounding at the filter boundary cannot fabricate a violation.
pub fn violates_barrier(pair: &PairState, mode: QueryMode, spec: &QuerySpec) -> bool {
    let p = &spec.params;
    let Some(b) = barrier_value(pair, p).defined() else {
        return false;
    };
    if b < 0.0 {
        return false;
    }
    let Ok(b_dot) = barrier_derivative(pair, p) else {
        return false;
    };
    if mode == QueryMode::Closed {
        match safe_accel_bound(pair) {
            Ok(bound) if pair.follower.a <= bound => {}
            _ => return false,
        }
    }
    b_dot < -p.eps
}

/// Exhaustive search of the `(g, d, a_f, a_l)` grid for a state violating
/// the barrier condition. Returns the first hit in lexicographic grid order.
pub fn grid_oracle_search(spec: &QuerySpec, bounds: &GridBounds) -> Result<Option<OracleWitness>, GridError> {
    bounds.validate()?;
    let r = bounds.resolution;
    let gaps = samples(bounds.gap, r);
    let speeds = samples(bounds.closing_speed, r);
    let afs = samples(bounds.a_follower, r);
    let als = samples(bounds.a_leader, r);
    let p = &spec.params;

    for &gap in &gaps {
        if !(gap > 0.0) {
            continue;
        }
        for &d in &speeds {
            if !(d > p.eps) {
                continue;
            }
            for &a_f in &afs {
                if a_f < p.a_min || a_f > p.a_max {
                    continue;
                }
                for &a_l in &als {
                    if a_l < p.a_min || a_l > p.a_max {
                        continue;
                    }
                    let witness = OracleWitness {
                        gap,
                        closing_speed: d,
                        a_follower: a_f,
                        a_leader: a_l,
                    };
                    if violates_barrier(&witness.pair(), spec.mode, spec) {
                        return Ok(Some(witness));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Outcome of the full verification workflow.
#[derive(Debug, Clone, PartialEq)]
pub enum VerificationOutcome {
    /// Solver reported unsat: no state with `B >= 0` has `dB/dt < 0`.
    Verified,
    Counterexample(ModelAssignment),
    Unknown,
}

impl VerificationOutcome {
    pub fn status(&self) -> &'static str {
        match self {
            VerificationOutcome::Verified => "unsat",
            VerificationOutcome::Counterexample(_) => "sat",
            VerificationOutcome::Unknown => "unknown",
        }
    }
}

impl From<SolverVerdict> for VerificationOutcome {
    fn from(v: SolverVerdict) -> Self {
        match v {
            SolverVerdict::Sat(m) => VerificationOutcome::Counterexample(m),
            SolverVerdict::Unsat => VerificationOutcome::Verified,
            SolverVerdict::Unknown => VerificationOutcome::Unknown,
        }
    }
}

/// The pair `(i, i-1)` of a model as kinematic state, for cross-checking a
/// counterexample against the barrier functions.
pub fn model_pair(model: &ModelAssignment, i: usize, length: f64) -> Option<PairState> {
    use crate::kinematics::VehicleState;
    let (xl, vl, al) = model.vehicle(i - 1)?;
    let (xf, vf, af) = model.vehicle(i)?;
    Some(PairState::with_gap_length(
        VehicleState::kinematic(xf, vf, af, length),
        VehicleState::kinematic(xl, vl, al, length),
        length,
    ))
}

/// Indices `i` of pairs `(i, i-1)` in the model that violate the barrier
/// condition according to the kinematic functions.
pub fn violating_pairs(model: &ModelAssignment, spec: &QuerySpec) -> Vec<usize> {
    (1..spec.n)
        .filter(|&i| {
            model_pair(model, i, spec.length)
                .map(|pair| {
                    let p = &spec.params;
                    matches!(barrier_value(&pair, p), BarrierValue::Defined(b) if b >= -p.eps)
                        && barrier_derivative(&pair, p).is_ok_and(|bd| bd < 0.0)
                })
                .unwrap_or(false)
        })
        .collect()
}
