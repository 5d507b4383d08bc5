//! Longitudinal kinematics of a follower/leader pair: time-to-collision,
//! the TTC barrier certificate and its time derivative.
//!
//! With `gap = x_leader - x_follower - L` and closing speed
//! `dv = v_follower - v_leader`, the barrier is
//!
//! ```text
//! B = gap / dv - t_safe
//! ```
//!
//! Differentiating (`d gap/dt = -dv`, `d dv/dt = a_follower - a_leader`):
//!
//! ```text
//! dB/dt = -1 - gap * (a_follower - a_leader) / dv^2
//! ```
//!
//! Requiring `dB/dt >= 0` gives the safe follower acceleration
//! `a_follower <= a_leader - dv^2 / gap`.
//!
//! Every function here is total over its inputs; degenerate geometry is
//! reported through tagged values instead of infinities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One vehicle's longitudinal sample at a frame.
///
/// `x` is the front bumper position, increasing in the driving direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u64,
    pub frame: i64,
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
    pub lane: i32,
}

impl VehicleState {
    /// A state with only the kinematic fields set; the rest are zero.
    pub fn kinematic(x: f64, v: f64, a: f64, length: f64) -> Self {
        Self {
            id: 0,
            frame: 0,
            t: 0.0,
            x,
            v,
            a,
            length,
            lane: 0,
        }
    }
}

/// A follower (vehicle `i`) and its leader (vehicle `i - 1`) at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub follower: VehicleState,
    pub leader: VehicleState,
    /// Length subtracted from the raw position difference. Defaults to the
    /// leader's length (leader rear bumper to follower front bumper).
    pub gap_length: f64,
}

impl PairState {
    pub fn new(follower: VehicleState, leader: VehicleState) -> Self {
        Self {
            follower,
            leader,
            gap_length: leader.length,
        }
    }

    pub fn with_gap_length(follower: VehicleState, leader: VehicleState, gap_length: f64) -> Self {
        Self {
            follower,
            leader,
            gap_length,
        }
    }

    /// Builds a pair directly from relative quantities. The leader sits at
    /// `x = gap + length` with a unit length, the follower at the origin.
    pub fn from_relative(gap: f64, v_leader: f64, v_follower: f64, a_leader: f64, a_follower: f64) -> Self {
        let length = 1.0;
        let leader = VehicleState::kinematic(gap + length, v_leader, a_leader, length);
        let follower = VehicleState::kinematic(0.0, v_follower, a_follower, length);
        Self::new(follower, leader)
    }

    pub fn gap(&self) -> f64 {
        self.leader.x - self.follower.x - self.gap_length
    }

    pub fn closing_speed(&self) -> f64 {
        self.follower.v - self.leader.v
    }

    /// `a_follower - a_leader`.
    pub fn relative_accel(&self) -> f64 {
        self.follower.a - self.leader.a
    }

    /// Same pair with the follower's velocity replaced.
    pub fn with_follower_velocity(mut self, v: f64) -> Self {
        self.follower.v = v;
        self
    }

    /// Same pair with the follower's acceleration replaced.
    pub fn with_follower_accel(mut self, a: f64) -> Self {
        self.follower.a = a;
        self
    }
}

/// Numeric constants of the barrier certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierParams {
    /// TTC threshold in seconds.
    pub t_safe: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub eps: f64,
    /// TTC restored by speed adjustment; never below `t_safe`.
    pub t_target: f64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            t_safe: 3.0,
            a_min: -6.0,
            a_max: 3.0,
            eps: 1e-9,
            t_target: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("t_safe must be positive, got {0}")]
    NonPositiveTSafe(f64),
    #[error("acceleration bounds must satisfy a_min < 0 < a_max, got [{0}, {1}]")]
    AccelBounds(f64, f64),
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("t_target ({0}) must be at least t_safe ({1})")]
    TargetBelowThreshold(f64, f64),
}

impl BarrierParams {
    pub fn with_t_safe(t_safe: f64) -> Self {
        Self {
            t_safe,
            t_target: t_safe,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.t_safe > 0.0) {
            return Err(ParamsError::NonPositiveTSafe(self.t_safe));
        }
        if !(self.a_min < 0.0 && 0.0 < self.a_max) {
            return Err(ParamsError::AccelBounds(self.a_min, self.a_max));
        }
        if !(self.eps > 0.0) {
            return Err(ParamsError::NonPositiveEps(self.eps));
        }
        if !(self.t_target >= self.t_safe) {
            return Err(ParamsError::TargetBelowThreshold(self.t_target, self.t_safe));
        }
        Ok(())
    }
}

/// Closing speeds at or below this are treated as not closing.
pub const CLOSING_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TtcValue {
    Finite(f64),
    /// `dv <= 0`: the gap is not shrinking.
    NotClosing,
    /// `gap <= 0`: the bounding boxes touch or overlap.
    Overlap,
}

impl TtcValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            TtcValue::Finite(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BarrierValue {
    Defined(f64),
    StructurallySafe,
    Violated,
}

impl BarrierValue {
    pub fn defined(self) -> Option<f64> {
        match self {
            BarrierValue::Defined(b) => Some(b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairClass {
    Safe,
    Conflict,
    Collision,
}

impl PairClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PairClass::Safe => "safe",
            PairClass::Conflict => "conflict",
            PairClass::Collision => "collision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum KinematicsError {
    #[error("derivative undefined: gap {gap} m, closing speed {closing_speed} m/s")]
    DegenerateClosing { gap: f64, closing_speed: f64 },
}

fn is_closing(dv: f64) -> bool {
    dv > CLOSING_EPS
}

pub fn ttc(pair: &PairState) -> TtcValue {
    let gap = pair.gap();
    let dv = pair.closing_speed();
    if !(gap > 0.0) {
        TtcValue::Overlap
    } else if !is_closing(dv) {
        TtcValue::NotClosing
    } else {
        TtcValue::Finite(gap / dv)
    }
}

pub fn barrier_value(pair: &PairState, params: &BarrierParams) -> BarrierValue {
    match ttc(pair) {
        TtcValue::Finite(t) => BarrierValue::Defined(t - params.t_safe),
        TtcValue::NotClosing => BarrierValue::StructurallySafe,
        TtcValue::Overlap => BarrierValue::Violated,
    }
}

fn closing_geometry(pair: &PairState, eps: f64) -> Result<(f64, f64), KinematicsError> {
    let gap = pair.gap();
    let dv = pair.closing_speed();
    if gap > 0.0 && dv > eps {
        Ok((gap, dv))
    } else {
        Err(KinematicsError::DegenerateClosing { gap, closing_speed: dv })
    }
}

/// Time derivative of the barrier. `params` supplies the closing-speed
/// tolerance; `t_safe` does not enter since it is constant.
pub fn barrier_derivative(pair: &PairState, params: &BarrierParams) -> Result<f64, KinematicsError> {
    let (gap, dv) = closing_geometry(pair, params.eps)?;
    Ok(-1.0 - gap * pair.relative_accel() / (dv * dv))
}

/// Largest follower acceleration keeping `dB/dt >= 0`.
pub fn safe_accel_bound(pair: &PairState) -> Result<f64, KinematicsError> {
    let (gap, dv) = closing_geometry(pair, 0.0)?;
    Ok(pair.leader.a - dv * dv / gap)
}

pub fn classify(pair: &PairState, params: &BarrierParams) -> PairClass {
    match ttc(pair) {
        TtcValue::Overlap => PairClass::Collision,
        TtcValue::Finite(t) if t < params.t_safe => PairClass::Conflict,
        _ => PairClass::Safe,
    }
}
