//! Verification and validation of time-to-collision barrier certificates
//! for longitudinal car following.
//!
//! - [`kinematics`]: TTC, the barrier `B = TTC - t_safe`, its derivative and
//!   the safe-acceleration bound.
//! - [`smt`]: SMT-LIB v2 encoding of the barrier condition and parsing of
//!   solver answers.
//! - [`solver`]: external solver driver and an independent grid oracle.
//! - [`ingest`]: HighD-style CSV loading and follower/leader pairing.
//! - [`conflict`]: conflict scanning, speed adjustment, reports and
//!   filtered rollouts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conflict;
pub mod ingest;
pub mod kinematics;
pub mod smt;
pub mod solver;

pub use kinematics::{BarrierParams, BarrierValue, PairClass, PairState, TtcValue, VehicleState};
