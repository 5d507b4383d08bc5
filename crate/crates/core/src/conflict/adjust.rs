use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{scan_pairs, summarize, ConflictError, ConflictReport, ConflictScan, FrameRange, FrameWindow};
use crate::ingest::{pair_frames, TrajectoryDataset};
use crate::kinematics::{classify, ttc, BarrierParams, PairClass, PairState, TtcValue};

/// How a conflicting follower's speed is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdjustmentStrategy {
    /// Jump straight to the speed that restores `t_target`.
    Instantaneous { t_target: f64 },
    /// Brake towards that speed, at most `a_min * dt` per step.
    DecelLimited { t_target: f64, a_min: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("t_target ({0}) must be at least t_safe ({1})")]
    TargetBelowThreshold(f64, f64),
    #[error("deceleration limit must be negative, got {0}")]
    NonNegativeDecel(f64),
    #[error("step must be positive, got {0}")]
    NonPositiveStep(f64),
}

impl AdjustmentStrategy {
    pub fn t_target(&self) -> f64 {
        match *self {
            AdjustmentStrategy::Instantaneous { t_target } | AdjustmentStrategy::DecelLimited { t_target, .. } => {
                t_target
            }
        }
    }

    pub fn validate(&self, params: &BarrierParams) -> Result<(), StrategyError> {
        if !(self.t_target() >= params.t_safe) {
            return Err(StrategyError::TargetBelowThreshold(self.t_target(), params.t_safe));
        }
        if let AdjustmentStrategy::DecelLimited { a_min, dt, .. } = *self {
            if !(a_min < 0.0) {
                return Err(StrategyError::NonNegativeDecel(a_min));
            }
            if !(dt > 0.0) {
                return Err(StrategyError::NonPositiveStep(dt));
            }
        }
        Ok(())
    }

    /// New follower speed for a conflicting pair; `None` when the pair is not
    /// in conflict.
    pub fn adjusted_velocity(&self, pair: &PairState, params: &BarrierParams) -> Option<f64> {
        match *self {
            AdjustmentStrategy::Instantaneous { t_target } => adjust_instantaneous(pair, t_target, params),
            AdjustmentStrategy::DecelLimited { t_target, a_min, dt } => {
                adjust_decel_limited(pair, t_target, a_min, dt, params)
            }
        }
    }
}

fn restores_target(pair: &PairState, v: f64, t_target: f64) -> bool {
    match ttc(&pair.with_follower_velocity(v)) {
        TtcValue::Finite(t) => t >= t_target,
        TtcValue::NotClosing => true,
        TtcValue::Overlap => false,
    }
}

/// Largest follower speed (at most the current one) whose TTC is at least
/// `t_target`: `min(v_f, v_l + gap / t_target)`, rounded down until the
/// recomputed TTC actually clears the target in floating point.
fn target_velocity(pair: &PairState, t_target: f64) -> f64 {
    let mut v = pair.follower.v.min(pair.leader.v + pair.gap() / t_target).max(0.0);
    while v > 0.0 && !restores_target(pair, v, t_target) {
        v = v.next_down();
    }
    v
}

pub fn adjust_instantaneous(pair: &PairState, t_target: f64, params: &BarrierParams) -> Option<f64> {
    (classify(pair, params) == PairClass::Conflict).then(|| target_velocity(pair, t_target))
}

pub fn adjust_decel_limited(
    pair: &PairState,
    t_target: f64,
    a_min: f64,
    dt: f64,
    params: &BarrierParams,
) -> Option<f64> {
    (classify(pair, params) == PairClass::Conflict).then(|| {
        let braked = (pair.follower.v + a_min * dt).max(0.0);
        target_velocity(pair, t_target).max(braked)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMode {
    /// Each conflicting frame-instance is adjusted on its own and re-classified.
    #[default]
    PerFrame,
    /// Adjustments persist: the follower keeps its speed deficit and its
    /// position is re-integrated over the following frames.
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityAdjustment {
    pub frame: i64,
    pub vehicle: u64,
    pub original: f64,
    pub adjusted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedRun {
    pub dataset: TrajectoryDataset,
    pub before: ConflictScan,
    pub after: ConflictScan,
    pub report: ConflictReport,
    pub adjustments: Vec<VelocityAdjustment>,
}

fn sample_index(dataset: &TrajectoryDataset) -> HashMap<(u64, i64), usize> {
    dataset
        .tracks
        .values()
        .flat_map(|t| {
            t.samples
                .iter()
                .enumerate()
                .map(move |(k, s)| ((t.id, s.state.frame), k))
        })
        .collect()
}

pub fn apply_adjustment(
    dataset: &TrajectoryDataset,
    strategy: &AdjustmentStrategy,
    mode: AdjustMode,
    params: &BarrierParams,
    window: FrameWindow,
) -> Result<AdjustedRun, ConflictError> {
    let range = window.resolve(dataset)?;
    let pairs = pair_frames(dataset);
    let before = scan_pairs(&pairs, params, range);
    let (adjusted, adjustments) = match mode {
        AdjustMode::PerFrame => per_frame(dataset, strategy, params, range),
        AdjustMode::Propagated => propagated(dataset, strategy, params, range),
    };
    let after = match mode {
        // per-frame adjustments are evaluated on the original pairing
        AdjustMode::PerFrame => {
            let mut adjusted_pairs = pairs;
            let lookup: HashMap<(u64, i64), f64> =
                adjustments.iter().map(|a| ((a.vehicle, a.frame), a.adjusted)).collect();
            for fp in adjusted_pairs.frames.values_mut().flatten() {
                if let Some(&v) = lookup.get(&(fp.follower_id(), fp.frame)) {
                    fp.pair.follower.v = v;
                }
            }
            scan_pairs(&adjusted_pairs, params, range)
        }
        AdjustMode::Propagated => scan_pairs(&pair_frames(&adjusted), params, range),
    };
    let report = summarize(&before, &after)?;
    Ok(AdjustedRun {
        dataset: adjusted,
        before,
        after,
        report,
        adjustments,
    })
}

fn per_frame(
    dataset: &TrajectoryDataset,
    strategy: &AdjustmentStrategy,
    params: &BarrierParams,
    range: FrameRange,
) -> (TrajectoryDataset, Vec<VelocityAdjustment>) {
    let pairs = pair_frames(dataset);
    let mut adjustments = Vec::new();
    for fp in pairs.frames.range(range.start..=range.end).flat_map(|(_, v)| v) {
        if let Some(v) = strategy.adjusted_velocity(&fp.pair, params) {
            adjustments.push(VelocityAdjustment {
                frame: fp.frame,
                vehicle: fp.follower_id(),
                original: fp.pair.follower.v,
                adjusted: v,
            });
        }
    }
    let mut out = dataset.clone();
    let index = sample_index(dataset);
    for adj in &adjustments {
        let k = index[&(adj.vehicle, adj.frame)];
        out.tracks.get_mut(&adj.vehicle).unwrap().samples[k].state.v = adj.adjusted;
    }
    (out, adjustments)
}

/// Persistent speed deficit of one vehicle relative to its recorded trajectory.
#[derive(Debug, Clone, Copy, Default)]
struct Deficit {
    /// Subtracted from every later recorded speed.
    speed: f64,
    /// Accumulated position lag at `frame`.
    position: f64,
    /// Actual speed difference at `frame` after flooring at zero.
    applied: f64,
    frame: i64,
}

fn propagated(
    dataset: &TrajectoryDataset,
    strategy: &AdjustmentStrategy,
    params: &BarrierParams,
    range: FrameRange,
) -> (TrajectoryDataset, Vec<VelocityAdjustment>) {
    let pairs = pair_frames(dataset);
    let index = sample_index(dataset);
    let dt_frame = 1.0 / dataset.frame_rate;

    let mut by_frame: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    for track in dataset.tracks.values() {
        for s in &track.samples {
            if range.contains(s.state.frame) {
                by_frame.entry(s.state.frame).or_default().push(track.id);
            }
        }
    }

    let mut out = dataset.clone();
    let mut deficits: HashMap<u64, Deficit> = HashMap::new();
    let mut adjustments = Vec::new();

    for (&frame, vehicles) in &by_frame {
        // advance every deficit to this frame and rewrite the samples
        for &id in vehicles {
            let Some(d) = deficits.get_mut(&id) else { continue };
            d.position += d.applied * (frame - d.frame) as f64 * dt_frame;
            d.frame = frame;
            let state = &mut out.tracks.get_mut(&id).unwrap().samples[index[&(id, frame)]].state;
            let v = (state.v - d.speed).max(0.0);
            d.applied = state.v - v;
            state.v = v;
            state.x -= d.position;
        }

        // front of each platoon first, so followers see adjusted leaders
        let Some(frame_pairs) = pairs.frames.get(&frame) else {
            continue;
        };
        for fp in frame_pairs {
            let follower_id = fp.follower_id();
            let leader_id = fp.leader_id();
            let follower = out.tracks[&follower_id].samples[index[&(follower_id, frame)]].state;
            let leader = out.tracks[&leader_id].samples[index[&(leader_id, frame)]].state;
            let pair = PairState::with_gap_length(follower, leader, fp.pair.gap_length);
            let Some(v) = strategy.adjusted_velocity(&pair, params) else {
                continue;
            };
            let original = dataset.tracks[&follower_id].samples[index[&(follower_id, frame)]]
                .state
                .v;
            let d = deficits.entry(follower_id).or_insert(Deficit {
                frame,
                ..Deficit::default()
            });
            d.speed = original - v;
            d.applied = original - v;
            out.tracks.get_mut(&follower_id).unwrap().samples[index[&(follower_id, frame)]]
                .state
                .v = v;
            adjustments.push(VelocityAdjustment {
                frame,
                vehicle: follower_id,
                original,
                adjusted: v,
            });
        }
    }
    (out, adjustments)
}
