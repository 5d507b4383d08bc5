#![allow(dead_code)]

use bcv_core::ingest::{PositionReference, Sample, Track, TrajectoryDataset};
use bcv_core::VehicleState;

pub const RATE: f64 = 25.0;

/// A track whose front bumper starts at `x0` and moves with the given
/// per-frame speeds; position at frame k is `x0 + (sum_{j<k} v_j) / RATE`,
/// which stays exact for integer speeds.
pub fn track(id: u64, lane: i32, length: f64, x0: f64, first_frame: i64, speeds: &[f64]) -> Track {
    let mut travelled = 0.0;
    let samples = speeds
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let s = Sample {
                state: VehicleState {
                    id,
                    frame: first_frame + k as i64,
                    t: 0.0,
                    x: x0 + travelled / RATE,
                    v,
                    a: 0.0,
                    length,
                    lane,
                },
                preceding_id: None,
            };
            travelled += v;
            s
        })
        .collect();
    Track { id, samples }
}

pub fn dataset(tracks: Vec<Track>) -> TrajectoryDataset {
    TrajectoryDataset::from_raw_tracks(tracks, RATE, PositionReference::FrontBumper).unwrap()
}

/// Follower at 30 m/s closing on a 5 m leader at 20 m/s from a 50 m gap,
/// frames 0..=100, in lane 2. Lane 3 carries a separating pair.
pub fn closing_fixture() -> TrajectoryDataset {
    dataset(vec![
        track(1, 2, 5.0, 55.0, 0, &[20.0; 101]),
        track(2, 2, 5.0, 0.0, 0, &[30.0; 101]),
        track(3, 3, 5.0, 40.0, 0, &[25.0; 101]),
        track(4, 3, 5.0, 0.0, 0, &[20.0; 101]),
    ])
}
