//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The exported functions are thin wrappers over plain Rust functions so
//! the numerical parts can be tested natively.

use bcv_core::conflict::{rollout, AccelProfile, RolloutConfig};
use bcv_core::kinematics::{barrier_derivative, barrier_value};
use bcv_core::smt::{build_query, emit_smtlib, QueryMode, QuerySpec};
use bcv_core::{BarrierParams, BarrierValue, PairState};
use wasm_bindgen::prelude::*;

/// Columns of one row in [`simulate`]'s flat output.
pub const ROLLOUT_COLUMNS: usize = 6;

/// Samples `B` and `dB/dt` on an `nx` by `ny` grid of gap (x axis) and
/// closing speed (y axis), row-major from the lowest closing speed.
/// Each cell holds `[B, dB/dt]`; `NaN` marks cells where a value is
/// undefined (not closing).
pub fn field(
    gap: (f64, f64),
    closing: (f64, f64),
    nx: usize,
    ny: usize,
    t_safe: f64,
    relative_accel: f64,
) -> Result<Vec<f64>, String> {
    if nx < 2 || ny < 2 {
        return Err("grid needs at least 2 x 2 cells".into());
    }
    let params = BarrierParams::with_t_safe(t_safe);
    params.validate().map_err(|e| e.to_string())?;
    let lerp = |(lo, hi): (f64, f64), k: usize, n: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        let dv = lerp(closing, j, ny);
        for i in 0..nx {
            let g = lerp(gap, i, nx);
            let pair = PairState::from_relative(g, 20.0, 20.0 + dv, 0.0, relative_accel);
            let b = match barrier_value(&pair, &params) {
                BarrierValue::Defined(b) => b,
                BarrierValue::StructurallySafe => f64::NAN,
                BarrierValue::Violated => f64::NEG_INFINITY,
            };
            out.push(b);
            out.push(barrier_derivative(&pair, &params).unwrap_or(f64::NAN));
        }
    }
    Ok(out)
}

/// Scenario for [`rollout_rows`]: a leader cruising, then braking at
/// `brake_accel` from `brake_at` seconds for `brake_for` seconds, and a
/// follower requesting a constant `follower_accel`.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub gap: f64,
    pub v_leader: f64,
    pub v_follower: f64,
    pub brake_at: f64,
    pub brake_for: f64,
    pub brake_accel: f64,
    pub follower_accel: f64,
    pub horizon: f64,
}

/// Flat rows of `[t, gap, B, follower accel, engaged, infeasible]`; `B` is
/// `NaN` while not closing and `-inf` after an overlap.
pub fn rollout_rows(s: &Scenario, filter: bool) -> Result<Vec<f64>, String> {
    let params = BarrierParams::default();
    let leader = AccelProfile::piecewise(vec![
        (0.0, 0.0),
        (s.brake_at, s.brake_accel),
        (s.brake_at + s.brake_for, 0.0),
    ]);
    let follower = AccelProfile::constant(s.follower_accel);
    let config = RolloutConfig {
        horizon: s.horizon,
        filter,
        ..RolloutConfig::default()
    };
    let initial = PairState::from_relative(s.gap, s.v_leader, s.v_follower, 0.0, 0.0);
    let trace = rollout(initial, &leader, &follower, &params, &config).map_err(|e| e.to_string())?;
    let mut rows = Vec::with_capacity(ROLLOUT_COLUMNS * trace.steps.len());
    for step in &trace.steps {
        let b = match step.barrier {
            BarrierValue::Defined(b) => b,
            BarrierValue::StructurallySafe => f64::NAN,
            BarrierValue::Violated => f64::NEG_INFINITY,
        };
        rows.extend([
            step.t,
            step.gap,
            b,
            step.follower_a,
            f64::from(u8::from(step.engaged)),
            f64::from(u8::from(step.infeasible)),
        ]);
    }
    Ok(rows)
}

pub fn query_text(n: usize, closed: bool, t_safe: f64) -> Result<String, String> {
    let mut spec = QuerySpec::new(n, if closed { QueryMode::Closed } else { QueryMode::Open });
    spec.params = BarrierParams::with_t_safe(t_safe);
    spec.validate().map_err(|e| e.to_string())?;
    build_query(&spec).map(|s| emit_smtlib(&s)).map_err(|e| e.to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn barrier_field(
    gap_min: f64,
    gap_max: f64,
    dv_min: f64,
    dv_max: f64,
    nx: usize,
    ny: usize,
    t_safe: f64,
    relative_accel: f64,
) -> Result<Vec<f64>, JsError> {
    field((gap_min, gap_max), (dv_min, dv_max), nx, ny, t_safe, relative_accel).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    gap: f64,
    v_leader: f64,
    v_follower: f64,
    brake_at: f64,
    brake_for: f64,
    brake_accel: f64,
    follower_accel: f64,
    horizon: f64,
    filter: bool,
) -> Result<Vec<f64>, JsError> {
    let s = Scenario {
        gap,
        v_leader,
        v_follower,
        brake_at,
        brake_for,
        brake_accel,
        follower_accel,
        horizon,
    };
    rollout_rows(&s, filter).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn emit_query(n: usize, closed: bool, t_safe: f64) -> Result<String, JsError> {
    query_text(n, closed, t_safe).map_err(|e| JsError::new(&e))
}
