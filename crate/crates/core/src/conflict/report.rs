use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConflictError, ConflictScan, FrameRange};
use crate::kinematics::PairClass;

pub const HIST_BIN_WIDTH: f64 = 0.25;
pub const HIST_UPPER: f64 = 10.0;

/// Finite TTC values in `[0, 10)` s, 0.25 s bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtcHistogram {
    pub counts: Vec<u64>,
    /// Finite TTCs at or beyond the upper edge.
    pub above_range: u64,
}

impl TtcHistogram {
    pub fn bins() -> usize {
        (HIST_UPPER / HIST_BIN_WIDTH).round() as usize
    }

    pub fn from_scan(scan: &ConflictScan) -> Self {
        let mut counts = vec![0; Self::bins()];
        let mut above_range = 0;
        for t in scan.instances.iter().filter_map(|i| i.ttc.finite()) {
            let bin = (t / HIST_BIN_WIDTH).floor() as usize;
            match counts.get_mut(bin) {
                Some(c) => *c += 1,
                None => above_range += 1,
            }
        }
        Self { counts, above_range }
    }

    /// `(lower edge, upper edge, count)` per bin.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.counts.iter().enumerate().map(|(k, &c)| {
            let lo = k as f64 * HIST_BIN_WIDTH;
            (lo, lo + HIST_BIN_WIDTH, c)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSummary {
    /// Conflict frame-instances.
    pub before: u64,
    pub after: u64,
    pub reduction_pct: f64,
    pub events_before: u64,
    pub events_after: u64,
    pub collisions_before: u64,
    pub collisions_after: u64,
}

impl LaneSummary {
    fn new(before: u64, after: u64) -> Self {
        Self {
            before,
            after,
            reduction_pct: reduction_pct(before, after),
            events_before: 0,
            events_after: 0,
            collisions_before: 0,
            collisions_after: 0,
        }
    }
}

/// `100 * (before - after) / before`, or 0 without conflicts to reduce.
pub fn reduction_pct(before: u64, after: u64) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (before as f64 - after as f64) / before as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub window: FrameRange,
    pub lanes: BTreeMap<i32, LaneSummary>,
    pub total: LaneSummary,
    /// True when the before-scan had no conflicts at all.
    pub no_conflicts: bool,
    pub hist_before: TtcHistogram,
    pub hist_after: TtcHistogram,
}

pub fn summarize(before: &ConflictScan, after: &ConflictScan) -> Result<ConflictReport, ConflictError> {
    if before.window != after.window {
        return Err(ConflictError::WindowMismatch(before.window, after.window));
    }
    let b = before.per_lane(PairClass::Conflict);
    let a = after.per_lane(PairClass::Conflict);
    let cb = before.per_lane(PairClass::Collision);
    let ca = after.per_lane(PairClass::Collision);

    let mut lanes: BTreeMap<i32, LaneSummary> = b
        .keys()
        .chain(a.keys())
        .map(|&lane| {
            let get = |m: &BTreeMap<i32, usize>| m.get(&lane).copied().unwrap_or(0) as u64;
            let mut s = LaneSummary::new(get(&b), get(&a));
            s.collisions_before = get(&cb);
            s.collisions_after = get(&ca);
            (lane, s)
        })
        .collect();
    for ev in &before.events {
        if let Some(s) = lanes.get_mut(&ev.lane) {
            s.events_before += 1;
        }
    }
    for ev in &after.events {
        if let Some(s) = lanes.get_mut(&ev.lane) {
            s.events_after += 1;
        }
    }

    let sum = |f: fn(&LaneSummary) -> u64| lanes.values().map(f).sum::<u64>();
    let mut total = LaneSummary::new(sum(|s| s.before), sum(|s| s.after));
    total.events_before = sum(|s| s.events_before);
    total.events_after = sum(|s| s.events_after);
    total.collisions_before = sum(|s| s.collisions_before);
    total.collisions_after = sum(|s| s.collisions_after);

    Ok(ConflictReport {
        window: before.window,
        no_conflicts: total.before == 0,
        lanes,
        total,
        hist_before: TtcHistogram::from_scan(before),
        hist_after: TtcHistogram::from_scan(after),
    })
}
