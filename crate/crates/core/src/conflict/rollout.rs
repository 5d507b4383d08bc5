//! Closed-loop simulation of one follower/leader pair under the barrier
//! safety filter, for forward-invariance testing.
//!
//! Both vehicles are integrated with explicit Euler steps and speeds are
//! floored at zero. When the filter is engaged the follower's command is
//! clamped to the safe-acceleration bound `a_l - dv^2 / gap`. Under Euler
//! integration with that exact acceleration, `gap - dv*dt` and
//! `dv - dv^2/gap * dt` shrink by the same factor, so TTC is carried over
//! unchanged from one step to the next.
//!
//! The filter engages when the current barrier is within `engage_margin`
//! of zero, or when the unfiltered next state would be. The look-ahead
//! catches steps that would jump across the margin in one go at small
//! closing speeds. From a non-closing state the bound degenerates to the
//! leader's own acceleration, which keeps the pair from starting to close.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{barrier_derivative, barrier_value, BarrierParams, BarrierValue, PairState};

/// Piecewise-constant acceleration: `segments[k] = (start time, accel)`,
/// sorted by start time. Before the first start the first value applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelProfile {
    pub segments: Vec<(f64, f64)>,
}

impl AccelProfile {
    pub fn constant(accel: f64) -> Self {
        Self {
            segments: vec![(0.0, accel)],
        }
    }

    pub fn piecewise(segments: Vec<(f64, f64)>) -> Self {
        Self { segments }
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.segments.partition_point(|&(start, _)| start <= t);
        self.segments[k.saturating_sub(1)].1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Simulated duration, seconds.
    pub horizon: f64,
    /// Barrier level (seconds of TTC above `t_safe`) at which the filter engages.
    pub engage_margin: f64,
    pub filter: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            dt: 0.04,
            horizon: 20.0,
            engage_margin: 0.5,
            filter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("leader acceleration {accel} at t = {t} s is outside [{a_min}, {a_max}]")]
    InvalidProfile { t: f64, accel: f64, a_min: f64, a_max: f64 },
    #[error("acceleration profile has no segments")]
    EmptyProfile,
    #[error("step and horizon must be positive, got dt = {dt}, horizon = {horizon}")]
    InvalidStep { dt: f64, horizon: f64 },
    #[error("initial state is already overlapping")]
    InitialOverlap,
}

/// One simulated instant. The accelerations are those applied over the
/// step that starts here; the final step carries no look-ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub t: f64,
    pub gap: f64,
    pub leader_v: f64,
    pub follower_v: f64,
    pub leader_a: f64,
    pub commanded_a: f64,
    pub follower_a: f64,
    pub barrier: BarrierValue,
    /// Barrier derivative under the applied accelerations, when defined.
    pub barrier_rate: Option<f64>,
    pub engaged: bool,
    /// The safe bound demanded more braking than `a_min` allows.
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub steps: Vec<RolloutStep>,
}

impl RolloutTrace {
    /// Minimum defined barrier value; `None` if it was never defined.
    pub fn min_barrier(&self) -> Option<f64> {
        self.steps
            .iter()
            .filter_map(|s| s.barrier.defined())
            .min_by(f64::total_cmp)
    }

    pub fn ever_violated(&self) -> bool {
        self.steps.iter().any(|s| s.barrier == BarrierValue::Violated)
    }

    pub fn engaged_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.engaged).count()
    }

    pub fn any_infeasible(&self) -> bool {
        self.steps.iter().any(|s| s.infeasible)
    }

    /// First step whose barrier is within `margin`, if any.
    pub fn first_within(&self, margin: f64) -> Option<usize> {
        self.steps.iter().position(|s| match s.barrier {
            BarrierValue::Defined(b) => b <= margin,
            BarrierValue::Violated => true,
            BarrierValue::StructurallySafe => false,
        })
    }
}

/// Speed after one step, floored at zero, and the acceleration that was
/// effectively applied.
fn integrate_speed(v: f64, a: f64, dt: f64) -> (f64, f64) {
    let next = (v + a * dt).max(0.0);
    (next, (next - v) / dt)
}

fn step(pair: &PairState, a_leader: f64, a_follower: f64, dt: f64) -> PairState {
    let mut next = *pair;
    next.leader.x += pair.leader.v * dt;
    next.follower.x += pair.follower.v * dt;
    next.leader.v = integrate_speed(pair.leader.v, a_leader, dt).0;
    next.follower.v = integrate_speed(pair.follower.v, a_follower, dt).0;
    next.leader.t += dt;
    next.follower.t += dt;
    next
}

fn within_margin(b: BarrierValue, margin: f64) -> bool {
    match b {
        BarrierValue::Defined(v) => v <= margin,
        BarrierValue::Violated => true,
        BarrierValue::StructurallySafe => false,
    }
}

/// Simulates the pair for `config.horizon` seconds. The leader follows
/// `leader_profile`; the follower requests `follower_command`, clamped to
/// `[a_min, a_max]` and, when engaged, to the safe bound.
pub fn rollout(
    initial: PairState,
    leader_profile: &AccelProfile,
    follower_command: &AccelProfile,
    params: &BarrierParams,
    config: &RolloutConfig,
) -> Result<RolloutTrace, RolloutError> {
    if leader_profile.segments.is_empty() || follower_command.segments.is_empty() {
        return Err(RolloutError::EmptyProfile);
    }
    for &(t, accel) in &leader_profile.segments {
        if !(params.a_min <= accel && accel <= params.a_max) {
            return Err(RolloutError::InvalidProfile {
                t,
                accel,
                a_min: params.a_min,
                a_max: params.a_max,
            });
        }
    }
    if !(config.dt > 0.0 && config.horizon > 0.0) {
        return Err(RolloutError::InvalidStep {
            dt: config.dt,
            horizon: config.horizon,
        });
    }
    if barrier_value(&initial, params) == BarrierValue::Violated {
        return Err(RolloutError::InitialOverlap);
    }

    let dt = config.dt;
    let n_steps = (config.horizon / dt).round() as usize;
    let mut pair = initial;
    let mut steps = Vec::with_capacity(n_steps + 1);

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let last = k == n_steps;
        let a_leader_cmd = leader_profile.at(t);
        let commanded = follower_command.at(t).clamp(params.a_min, params.a_max);
        let (_, a_leader) = integrate_speed(pair.leader.v, a_leader_cmd, dt);
        pair.leader.a = a_leader;

        let barrier = barrier_value(&pair, params);
        let mut engaged = config.filter && within_margin(barrier, config.engage_margin);
        if config.filter && !engaged && !last {
            let predicted = step(&pair, a_leader_cmd, commanded, dt);
            engaged = within_margin(barrier_value(&predicted, params), config.engage_margin);
        }

        let mut applied = commanded;
        let mut infeasible = false;
        if engaged {
            let gap = pair.gap();
            let dv = pair.closing_speed();
            let bound = if gap > 0.0 && dv > 0.0 {
                a_leader - dv * dv / gap
            } else {
                a_leader
            };
            if bound < params.a_min {
                infeasible = true;
            }
            applied = commanded.min(bound).max(params.a_min);
        }
        pair.follower.a = applied;

        steps.push(RolloutStep {
            t,
            gap: pair.gap(),
            leader_v: pair.leader.v,
            follower_v: pair.follower.v,
            leader_a: a_leader,
            commanded_a: commanded,
            follower_a: applied,
            barrier,
            barrier_rate: barrier_derivative(&pair, params).ok(),
            engaged,
            infeasible,
        });
        if !last {
            pair = step(&pair, a_leader_cmd, applied, dt);
        }
    }
    Ok(RolloutTrace { steps })
}
