//! Loading HighD-style trajectory CSVs and forming follower/leader pairs.
//!
//! Raw recordings carry bounding-box positions and lanes driven in either
//! direction. Loading normalizes every lane to travel in `+x` and every
//! position to the front bumper, so downstream code sees one convention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{PairState, VehicleState};

/// Physical plausibility range for normalized speeds (m/s).
pub const MAX_PLAUSIBLE_SPEED: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionReference {
    FrontBumper,
    /// `x` is the rear-most (lowest `x`) corner of the bounding box.
    #[default]
    BoundingBoxCorner,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnNames {
    pub frame: String,
    pub id: String,
    pub x: String,
    pub velocity: String,
    pub acceleration: String,
    /// Extent along the direction of travel.
    pub length: String,
    pub lane: String,
    /// Optional column; positional pairing is used when absent.
    pub preceding_id: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        Self {
            frame: "frame".into(),
            id: "id".into(),
            x: "x".into(),
            velocity: "xVelocity".into(),
            acceleration: "xAcceleration".into(),
            length: "width".into(),
            lane: "laneId".into(),
            preceding_id: "precedingId".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSchema {
    pub columns: ColumnNames,
    /// Hz.
    pub frame_rate: f64,
    pub position_reference: PositionReference,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            columns: ColumnNames::default(),
            frame_rate: 25.0,
            position_reference: PositionReference::BoundingBoxCorner,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("vehicle {0} has repeated frame indices")]
    NonMonotoneFrames(u64),
    #[error("no trajectory rows found")]
    EmptyDataset,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}:{line}: cannot parse `{value}` in column `{column}`")]
    BadValue {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },
}

impl IngestSchema {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.frame_rate > 0.0) {
            return Err(IngestError::InvalidSchema(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            )));
        }
        let c = &self.columns;
        let names = [
            &c.frame,
            &c.id,
            &c.x,
            &c.velocity,
            &c.acceleration,
            &c.length,
            &c.lane,
            &c.preceding_id,
        ];
        let distinct: BTreeSet<_> = names.iter().collect();
        if distinct.len() != names.len() {
            return Err(IngestError::InvalidSchema("column names must be distinct".into()));
        }
        Ok(())
    }
}

/// One row of a track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: VehicleState,
    /// Leader id from the dataset; `None` when the column is absent or zero.
    pub preceding_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    /// Strictly increasing frames.
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataWarning {
    pub vehicle: u64,
    pub frame: i64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<PathBuf>,
    /// Lanes whose direction was mirrored to `+x`.
    pub mirrored_lanes: Vec<i32>,
    pub position_reference: PositionReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    /// Keyed by vehicle id.
    pub tracks: BTreeMap<u64, Track>,
    pub lanes: BTreeSet<i32>,
    pub frame_rate: f64,
    pub provenance: Provenance,
    pub warnings: Vec<DataWarning>,
}

impl TrajectoryDataset {
    /// Inclusive frame range covered by any track.
    pub fn frame_range(&self) -> Option<(i64, i64)> {
        let first = self
            .tracks
            .values()
            .filter_map(|t| t.samples.first())
            .map(|s| s.state.frame)
            .min()?;
        let last = self
            .tracks
            .values()
            .filter_map(|t| t.samples.last())
            .map(|s| s.state.frame)
            .max()?;
        Some((first, last))
    }

    pub fn sample_count(&self) -> usize {
        self.tracks.values().map(|t| t.samples.len()).sum()
    }

    /// Builds a dataset from raw tracks, applying direction and position
    /// normalization. Used by [`load_dataset`] and for in-memory fixtures.
    pub fn from_raw_tracks(
        raw: impl IntoIterator<Item = Track>,
        frame_rate: f64,
        reference: PositionReference,
    ) -> Result<Self, IngestError> {
        let mut tracks: BTreeMap<u64, Track> = BTreeMap::new();
        for track in raw {
            tracks
                .entry(track.id)
                .or_insert_with(|| Track {
                    id: track.id,
                    samples: Vec::new(),
                })
                .samples
                .extend(track.samples);
        }
        if tracks.values().all(|t| t.samples.is_empty()) {
            return Err(IngestError::EmptyDataset);
        }
        for track in tracks.values_mut() {
            track.samples.sort_by_key(|s| s.state.frame);
            if track.samples.windows(2).any(|w| w[0].state.frame == w[1].state.frame) {
                return Err(IngestError::NonMonotoneFrames(track.id));
            }
        }

        // mean raw velocity per lane decides its direction
        let mut lane_velocity: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
        for s in tracks.values().flat_map(|t| &t.samples) {
            let e = lane_velocity.entry(s.state.lane).or_default();
            e.0 += s.state.v;
            e.1 += 1;
        }
        let mirrored: BTreeSet<i32> = lane_velocity
            .iter()
            .filter(|(_, (sum, count))| *sum / (*count as f64) < 0.0)
            .map(|(&lane, _)| lane)
            .collect();

        let mut warnings = Vec::new();
        for track in tracks.values_mut() {
            for sample in &mut track.samples {
                let s = &mut sample.state;
                s.t = s.frame as f64 / frame_rate;
                if mirrored.contains(&s.lane) {
                    // the corner is the rear of the box for +x travel and the front for -x travel
                    s.x = -s.x;
                    s.v = -s.v;
                    s.a = -s.a;
                } else if reference == PositionReference::BoundingBoxCorner {
                    s.x += s.length;
                }
                if !(0.0..=MAX_PLAUSIBLE_SPEED).contains(&s.v) {
                    warnings.push(DataWarning {
                        vehicle: s.id,
                        frame: s.frame,
                        message: format!("speed {:.3} m/s outside [0, {MAX_PLAUSIBLE_SPEED}]", s.v),
                    });
                }
                if !(s.length > 0.0) {
                    warnings.push(DataWarning {
                        vehicle: s.id,
                        frame: s.frame,
                        message: format!("non-positive length {}", s.length),
                    });
                }
            }
        }

        let lanes = lane_velocity.keys().copied().collect();
        Ok(Self {
            tracks,
            lanes,
            frame_rate,
            provenance: Provenance {
                sources: Vec::new(),
                mirrored_lanes: mirrored.into_iter().collect(),
                position_reference: reference,
            },
            warnings,
        })
    }

    /// Re-runs normalization on an already normalized dataset; the result
    /// is identical to `self` up to provenance.
    pub fn renormalized(&self) -> Result<Self, IngestError> {
        let mut out = Self::from_raw_tracks(
            self.tracks.values().cloned(),
            self.frame_rate,
            PositionReference::FrontBumper,
        )?;
        out.provenance.sources = self.provenance.sources.clone();
        Ok(out)
    }
}

struct ColumnIndex {
    frame: usize,
    id: usize,
    x: usize,
    velocity: usize,
    acceleration: usize,
    length: usize,
    lane: usize,
    preceding_id: Option<usize>,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, names: &ColumnNames) -> Result<Self, IngestError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let require = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
        Ok(Self {
            frame: require(&names.frame)?,
            id: require(&names.id)?,
            x: require(&names.x)?,
            velocity: require(&names.velocity)?,
            acceleration: require(&names.acceleration)?,
            length: require(&names.length)?,
            lane: require(&names.lane)?,
            preceding_id: find(&names.preceding_id),
        })
    }
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    column: &str,
    path: &Path,
) -> Result<T, IngestError> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| IngestError::BadValue {
        path: path.to_path_buf(),
        line: record.position().map(|p| p.line()).unwrap_or(0),
        column: column.to_string(),
        value: raw.to_string(),
    })
}

fn read_tracks(path: &Path, schema: &IngestSchema, tracks: &mut HashMap<u64, Track>) -> Result<(), IngestError> {
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let cols = ColumnIndex::resolve(&headers, &schema.columns)?;
    let names = &schema.columns;

    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_err)? {
        let id: u64 = field(&record, cols.id, &names.id, path)?;
        let preceding_id = match cols.preceding_id {
            Some(idx) => Some(field::<u64>(&record, idx, &names.preceding_id, path)?).filter(|&p| p != 0),
            None => None,
        };
        let state = VehicleState {
            id,
            frame: field(&record, cols.frame, &names.frame, path)?,
            t: 0.0,
            x: field(&record, cols.x, &names.x, path)?,
            v: field(&record, cols.velocity, &names.velocity, path)?,
            a: field(&record, cols.acceleration, &names.acceleration, path)?,
            length: field(&record, cols.length, &names.length, path)?,
            lane: field(&record, cols.lane, &names.lane, path)?,
        };
        tracks
            .entry(id)
            .or_insert_with(|| Track {
                id,
                samples: Vec::new(),
            })
            .samples
            .push(Sample { state, preceding_id });
    }
    Ok(())
}

/// Streams every file row by row and builds a normalized dataset. Tracks
/// with the same id across files are merged, so multi-file loads expect
/// disjoint ids or disjoint frames.
pub fn load_dataset<P: AsRef<Path>>(paths: &[P], schema: &IngestSchema) -> Result<TrajectoryDataset, IngestError> {
    schema.validate()?;
    let mut tracks = HashMap::new();
    for path in paths {
        read_tracks(path.as_ref(), schema, &mut tracks)?;
    }
    if tracks.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let mut dataset =
        TrajectoryDataset::from_raw_tracks(tracks.into_values(), schema.frame_rate, schema.position_reference)?;
    dataset.provenance.sources = paths.iter().map(|p| p.as_ref().to_path_buf()).collect();
    Ok(dataset)
}

/// A follower/leader pair observed at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePair {
    pub frame: i64,
    pub lane: i32,
    pub pair: PairState,
}

impl FramePair {
    pub fn follower_id(&self) -> u64 {
        self.pair.follower.id
    }

    pub fn leader_id(&self) -> u64 {
        self.pair.leader.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingLeader {
    pub frame: i64,
    pub follower: u64,
    pub preceding_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairingDiagnostics {
    /// `precedingId` named a vehicle absent from the frame or lane; pair skipped.
    pub dangling: Vec<DanglingLeader>,
    /// Pairs where `precedingId` disagreed with the nearest vehicle ahead.
    pub order_contradictions: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FramePairs {
    /// Keyed by frame; within a frame, ordered by lane then by leader
    /// position descending (front of the platoon first).
    pub frames: BTreeMap<i64, Vec<FramePair>>,
    pub diagnostics: PairingDiagnostics,
}

impl FramePairs {
    pub fn iter(&self) -> impl Iterator<Item = &FramePair> {
        self.frames.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forms follower/leader pairs for every frame and lane.
///
/// A follower's `precedingId` decides its leader when present; otherwise
/// the nearest same-lane vehicle ahead is used. Ties in position are broken
/// by id. Overlapping pairs are kept and classify as collisions.
pub fn pair_frames(dataset: &TrajectoryDataset) -> FramePairs {
    let mut by_frame: BTreeMap<i64, Vec<&Sample>> = BTreeMap::new();
    for s in dataset.tracks.values().flat_map(|t| &t.samples) {
        by_frame.entry(s.state.frame).or_default().push(s);
    }

    let mut out = FramePairs::default();
    for (frame, samples) in by_frame {
        let mut lanes: BTreeMap<i32, Vec<&Sample>> = BTreeMap::new();
        for s in samples {
            lanes.entry(s.state.lane).or_default().push(s);
        }
        let mut pairs = Vec::new();
        for (lane, mut vehicles) in lanes {
            // front of the platoon first
            vehicles.sort_by(|a, b| b.state.x.total_cmp(&a.state.x).then(b.state.id.cmp(&a.state.id)));
            let mut lane_pairs = Vec::new();
            for (k, follower) in vehicles.iter().enumerate() {
                let nearest_ahead = k.checked_sub(1).map(|j| vehicles[j]);
                let leader = match follower.preceding_id {
                    Some(pid) => match vehicles.iter().find(|v| v.state.id == pid) {
                        Some(leader) => {
                            if nearest_ahead.map(|n| n.state.id) != Some(pid) {
                                out.diagnostics.order_contradictions += 1;
                            }
                            *leader
                        }
                        None => {
                            out.diagnostics.dangling.push(DanglingLeader {
                                frame,
                                follower: follower.state.id,
                                preceding_id: pid,
                            });
                            continue;
                        }
                    },
                    None => match nearest_ahead {
                        Some(leader) => leader,
                        None => continue,
                    },
                };
                lane_pairs.push(FramePair {
                    frame,
                    lane,
                    pair: PairState::new(follower.state, leader.state),
                });
            }
            lane_pairs.sort_by(|a, b| {
                b.pair
                    .leader
                    .x
                    .total_cmp(&a.pair.leader.x)
                    .then(a.follower_id().cmp(&b.follower_id()))
            });
            pairs.extend(lane_pairs);
        }
        if !pairs.is_empty() {
            out.frames.insert(frame, pairs);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: u64, frame: i64, x: f64, v: f64, lane: i32, preceding: Option<u64>) -> Sample {
        Sample {
            state: VehicleState {
                id,
                frame,
                t: 0.0,
                x,
                v,
                a: 0.0,
                length: 4.0,
                lane,
            },
            preceding_id: preceding,
        }
    }

    fn dataset(samples: Vec<Sample>) -> TrajectoryDataset {
        let tracks = samples.into_iter().map(|s| Track {
            id: s.state.id,
            samples: vec![s],
        });
        TrajectoryDataset::from_raw_tracks(tracks, 25.0, PositionReference::FrontBumper).unwrap()
    }

    #[test]
    fn chain_pairing_by_position() {
        let ds = dataset(vec![
            sample(1, 0, 100.0, 20.0, 2, None),
            sample(2, 0, 60.0, 20.0, 2, None),
            sample(3, 0, 20.0, 20.0, 2, None),
        ]);
        let pairs = pair_frames(&ds);
        let ids: Vec<_> = pairs.iter().map(|p| (p.follower_id(), p.leader_id())).collect();
        assert_eq!(ids, vec![(2, 1), (3, 2)]);
        assert_eq!(pairs.iter().next().unwrap().pair.gap(), 36.0);
    }

    #[test]
    fn lone_vehicles_form_no_pairs() {
        let ds = dataset(vec![
            sample(1, 0, 100.0, 20.0, 1, None),
            sample(2, 0, 60.0, 20.0, 2, None),
        ]);
        assert!(pair_frames(&ds).is_empty());
    }

    #[test]
    fn preceding_id_wins_over_position() {
        // vehicle 3 claims to follow vehicle 1 although 2 sits between them
        let ds = dataset(vec![
            sample(1, 0, 100.0, 20.0, 2, None),
            sample(2, 0, 60.0, 20.0, 2, Some(1)),
            sample(3, 0, 20.0, 20.0, 2, Some(1)),
        ]);
        let pairs = pair_frames(&ds);
        let ids: Vec<_> = pairs.iter().map(|p| (p.follower_id(), p.leader_id())).collect();
        assert_eq!(ids, vec![(2, 1), (3, 1)]);
        assert_eq!(pairs.diagnostics.order_contradictions, 1);
    }

    #[test]
    fn dangling_preceding_id_is_skipped() {
        let ds = dataset(vec![
            sample(1, 0, 100.0, 20.0, 2, None),
            sample(2, 0, 60.0, 20.0, 2, Some(9)),
        ]);
        let pairs = pair_frames(&ds);
        assert!(pairs.is_empty());
        assert_eq!(
            pairs.diagnostics.dangling,
            vec![DanglingLeader {
                frame: 0,
                follower: 2,
                preceding_id: 9
            }]
        );
    }

    #[test]
    fn overlapping_pairs_are_kept() {
        let ds = dataset(vec![
            sample(1, 0, 100.0, 20.0, 2, None),
            sample(2, 0, 98.0, 25.0, 2, None),
        ]);
        let pairs = pair_frames(&ds);
        assert_eq!(pairs.len(), 1);
        assert!(pairs.iter().next().unwrap().pair.gap() < 0.0);
    }

    #[test]
    fn mirrored_lane_is_normalized() {
        let ds = TrajectoryDataset::from_raw_tracks(
            [Track {
                id: 1,
                samples: vec![sample(1, 0, 50.0, -20.0, 1, None), sample(1, 1, 49.2, -20.0, 1, None)],
            }],
            25.0,
            PositionReference::BoundingBoxCorner,
        )
        .unwrap();
        let s = &ds.tracks[&1].samples;
        assert_eq!(s[0].state.x, -50.0);
        assert_eq!(s[0].state.v, 20.0);
        assert_eq!(s[1].state.t, 0.04);
        assert_eq!(ds.provenance.mirrored_lanes, vec![1]);
    }

    #[test]
    fn repeated_frames_are_rejected() {
        let result = TrajectoryDataset::from_raw_tracks(
            [Track {
                id: 7,
                samples: vec![sample(7, 3, 0.0, 1.0, 1, None), sample(7, 3, 1.0, 1.0, 1, None)],
            }],
            25.0,
            PositionReference::FrontBumper,
        );
        assert!(matches!(result, Err(IngestError::NonMonotoneFrames(7))));
    }

    #[test]
    fn implausible_speed_warns() {
        let ds = dataset(vec![sample(1, 0, 0.0, 80.0, 1, None)]);
        assert_eq!(ds.warnings.len(), 1);
    }

    #[test]
    fn schema_requires_distinct_columns() {
        let mut schema = IngestSchema::default();
        schema.columns.lane = "id".into();
        assert!(matches!(schema.validate(), Err(IngestError::InvalidSchema(_))));
        let schema = IngestSchema {
            frame_rate: 0.0,
            ..IngestSchema::default()
        };
        assert!(schema.validate().is_err());
    }
}
