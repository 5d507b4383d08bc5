//! TTC conflict scanning and speed adjustment over paired trajectories.
//!
//! The counting unit is the frame-instance: one follower/leader pair at one
//! frame. Consecutive conflicting frames of the same pair are also merged
//! into [`ConflictEvent`]s, and reports carry both counts.

mod adjust;
mod report;
mod rollout;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{pair_frames, FramePair, FramePairs, TrajectoryDataset};
use crate::kinematics::{classify, ttc, BarrierParams, PairClass, TtcValue};

pub use adjust::{
    adjust_decel_limited, adjust_instantaneous, apply_adjustment, AdjustMode, AdjustedRun, AdjustmentStrategy,
};
pub use report::{summarize, ConflictReport, LaneSummary, TtcHistogram, HIST_BIN_WIDTH, HIST_UPPER};
pub use rollout::{rollout, AccelProfile, RolloutConfig, RolloutError, RolloutStep, RolloutTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConflictError {
    #[error("evaluation window {0} contains no frames of the dataset")]
    EmptyWindow(String),
    #[error("before/after scans cover different windows: {0} vs {1}")]
    WindowMismatch(FrameRange, FrameRange),
}

/// Frames to evaluate, before being resolved against a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FrameWindow {
    #[default]
    All,
    /// The first `n` frames starting at the dataset's first frame.
    First(u64),
    /// Inclusive frame range.
    Range(i64, i64),
}

impl std::fmt::Display for FrameWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrameWindow::All => f.write_str("all"),
            FrameWindow::First(n) => write!(f, "{n}"),
            FrameWindow::Range(a, b) => write!(f, "{a}..{b}"),
        }
    }
}

impl std::str::FromStr for FrameWindow {
    type Err = String;

    /// Accepts `all`, a frame count such as `300`, or an inclusive range `100..400`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(FrameWindow::All);
        }
        if let Some((a, b)) = s.split_once("..") {
            let a = a.trim().parse().map_err(|_| format!("bad window start in `{s}`"))?;
            let b = b.trim().parse().map_err(|_| format!("bad window end in `{s}`"))?;
            return Ok(FrameWindow::Range(a, b));
        }
        s.parse()
            .map(FrameWindow::First)
            .map_err(|_| format!("window must be `all`, a frame count or `start..end`, got `{s}`"))
    }
}

/// Inclusive, resolved frame range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: i64,
    pub end: i64,
}

impl FrameRange {
    pub fn contains(&self, frame: i64) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn len(&self) -> u64 {
        (self.end - self.start + 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

impl std::fmt::Display for FrameRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

impl FrameWindow {
    /// Clips the window to the dataset's frames.
    pub fn resolve(&self, dataset: &TrajectoryDataset) -> Result<FrameRange, ConflictError> {
        let empty = || ConflictError::EmptyWindow(self.to_string());
        let (first, last) = dataset.frame_range().ok_or_else(empty)?;
        let (start, end) = match *self {
            FrameWindow::All => (first, last),
            FrameWindow::First(0) => return Err(empty()),
            FrameWindow::First(n) => (first, last.min(first.saturating_add(n as i64 - 1))),
            FrameWindow::Range(a, b) => (a.max(first), b.min(last)),
        };
        if start > end {
            return Err(empty());
        }
        Ok(FrameRange { start, end })
    }
}

/// Classification of one pair at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInstance {
    pub frame: i64,
    pub lane: i32,
    pub follower: u64,
    pub leader: u64,
    pub gap: f64,
    pub follower_velocity: f64,
    pub leader_velocity: f64,
    pub ttc: TtcValue,
    pub class: PairClass,
}

impl PairInstance {
    pub fn from_pair(fp: &FramePair, params: &BarrierParams) -> Self {
        Self {
            frame: fp.frame,
            lane: fp.lane,
            follower: fp.follower_id(),
            leader: fp.leader_id(),
            gap: fp.pair.gap(),
            follower_velocity: fp.pair.follower.v,
            leader_velocity: fp.pair.leader.v,
            ttc: ttc(&fp.pair),
            class: classify(&fp.pair, params),
        }
    }

    /// `<follower>-<leader>`.
    pub fn pair_id(&self) -> String {
        format!("{}-{}", self.follower, self.leader)
    }
}

/// A maximal run of consecutive flagged frames for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictEvent {
    pub follower: u64,
    pub leader: u64,
    pub lane: i32,
    pub first_frame: i64,
    pub last_frame: i64,
    /// Minimum finite TTC over the event; 0 for collision events.
    pub min_ttc: f64,
    pub frame_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictScan {
    pub window: FrameRange,
    pub instances: Vec<PairInstance>,
    pub events: Vec<ConflictEvent>,
    /// Overlapping pairs, merged the same way as conflicts.
    pub collisions: Vec<ConflictEvent>,
}

impl ConflictScan {
    pub fn conflict_count(&self) -> usize {
        self.count(PairClass::Conflict)
    }

    pub fn count(&self, class: PairClass) -> usize {
        self.instances.iter().filter(|i| i.class == class).count()
    }

    /// Conflict frame-instances per lane. Lanes with pairs but no conflicts
    /// map to zero.
    pub fn per_lane(&self, class: PairClass) -> BTreeMap<i32, usize> {
        let mut out = BTreeMap::new();
        for inst in &self.instances {
            *out.entry(inst.lane).or_insert(0) += usize::from(inst.class == class);
        }
        out
    }
}

fn merge_events(instances: &[PairInstance], class: PairClass) -> Vec<ConflictEvent> {
    let mut events: Vec<ConflictEvent> = Vec::new();
    let mut open: HashMap<(u64, u64, i32), usize> = HashMap::new();
    let mut flagged: Vec<&PairInstance> = instances.iter().filter(|i| i.class == class).collect();
    flagged.sort_by_key(|i| i.frame);
    for inst in flagged {
        let key = (inst.follower, inst.leader, inst.lane);
        let ttc = inst.ttc.finite().unwrap_or(0.0);
        match open.get(&key).map(|&k| &mut events[k]) {
            Some(ev) if ev.last_frame + 1 == inst.frame => {
                ev.last_frame = inst.frame;
                ev.frame_count += 1;
                ev.min_ttc = ev.min_ttc.min(ttc);
            }
            _ => {
                open.insert(key, events.len());
                events.push(ConflictEvent {
                    follower: inst.follower,
                    leader: inst.leader,
                    lane: inst.lane,
                    first_frame: inst.frame,
                    last_frame: inst.frame,
                    min_ttc: ttc,
                    frame_count: 1,
                });
            }
        }
    }
    events.sort_by_key(|e| (e.first_frame, e.lane, e.follower, e.leader));
    events
}

/// Classifies every pair inside `window` and merges flagged frames into events.
pub fn scan_pairs(pairs: &FramePairs, params: &BarrierParams, window: FrameRange) -> ConflictScan {
    let instances: Vec<PairInstance> = pairs
        .frames
        .range(window.start..=window.end)
        .flat_map(|(_, fps)| fps.iter().map(|fp| PairInstance::from_pair(fp, params)))
        .collect();
    ConflictScan {
        window,
        events: merge_events(&instances, PairClass::Conflict),
        collisions: merge_events(&instances, PairClass::Collision),
        instances,
    }
}

pub fn scan_conflicts(
    dataset: &TrajectoryDataset,
    params: &BarrierParams,
    window: FrameWindow,
) -> Result<ConflictScan, ConflictError> {
    let range = window.resolve(dataset)?;
    Ok(scan_pairs(&pair_frames(dataset), params, range))
}
