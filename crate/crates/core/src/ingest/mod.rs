//! Recording ingest for the drone-dataset CSV triple
//! (`*_recordingMeta.csv`, `*_tracksMeta.csv`, `*_tracks.csv`).

mod csvio;
mod kinematics;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::map::LaneletMap;

pub use csvio::{
    parse_recording, parse_recording_meta, parse_tracks, parse_tracks_meta, write_recording_meta,
    write_tracks, write_tracks_meta, TRACK_COLUMNS,
};
pub use kinematics::derive_kinematics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: i64,
    pub location_id: i64,
    pub frame_rate: f64,
    /// Seconds between frames, `1 / frame_rate`.
    pub timestep: f64,
    /// UTM origin of the recording's local frame; subtracted from map coordinates.
    pub origin_offset: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Car,
    Truck,
    Van,
    Other,
}

impl VehicleClass {
    pub const REPORTED: [VehicleClass; 3] = [VehicleClass::Car, VehicleClass::Truck, VehicleClass::Van];

    pub fn parse(raw: &str) -> VehicleClass {
        match raw.trim().to_ascii_lowercase().as_str() {
            "car" => VehicleClass::Car,
            "truck" | "truck_bus" | "bus" => VehicleClass::Truck,
            "van" => VehicleClass::Van,
            _ => VehicleClass::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Truck => "truck",
            VehicleClass::Van => "van",
            VehicleClass::Other => "other",
        }
    }
}

impl std::fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMeta {
    pub track_id: i64,
    pub vehicle_class: VehicleClass,
    pub length: f64,
    pub width: f64,
    pub first_frame: i64,
    pub last_frame: i64,
}

/// Surrounding-vehicle ids as supplied by the dataset. `None` means absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborIds {
    pub lead: Option<i64>,
    pub rear: Option<i64>,
    pub left_lead: Option<i64>,
    pub right_lead: Option<i64>,
    pub left_alongside: Option<i64>,
    pub right_alongside: Option<i64>,
    pub left_rear: Option<i64>,
    pub right_rear: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub frame: i64,
    pub center: Vec2,
    /// Heading as stored in the file, degrees counter-clockwise from +x.
    pub heading_deg: f64,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    /// Raw lanelet cell; several ids when the vehicle straddles lanelets.
    pub lanelet_ids: Vec<i64>,
    /// Raw lateral-offset cell, parallel to `lanelet_ids`.
    pub lat_offsets: Vec<f64>,
    /// Assigned lanelet (the one containing the center point).
    pub lanelet_id: Option<i64>,
    /// Signed offset from the assigned lanelet's centerline, positive to the left.
    pub lat_lane_center_offset: Option<f64>,
    pub lane_change: bool,
    pub neighbors: NeighborIds,
}

impl TrackFrame {
    pub fn heading(&self) -> f64 {
        self.heading_deg.to_radians()
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Which optional column groups were present in the source file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackFields {
    pub heading: bool,
    pub velocity: bool,
    pub acceleration: bool,
    pub lanelet: bool,
    pub offset: bool,
    pub lane_change: bool,
    pub neighbors: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub meta: TrackMeta,
    pub frames: Vec<TrackFrame>,
    pub fields: TrackFields,
    /// Set when kinematics could not be derived (single-frame track).
    pub kinematics_incomplete: bool,
}

impl Track {
    pub fn id(&self) -> i64 {
        self.meta.track_id
    }

    pub fn first_frame(&self) -> i64 {
        self.frames[0].frame
    }

    pub fn last_frame(&self) -> i64 {
        self.frames.last().unwrap().frame
    }

    /// Frame record at absolute frame index, if the track covers it.
    pub fn at(&self, frame: i64) -> Option<&TrackFrame> {
        let i = frame - self.first_frame();
        if i < 0 {
            return None;
        }
        self.frames.get(i as usize)
    }

    pub fn covers(&self, frame: i64) -> bool {
        frame >= self.first_frame() && frame <= self.last_frame()
    }
}

/// Resolves the assigned lanelet and lateral offset of every frame against the map.
///
/// Dataset values stay authoritative: a single-valued lanelet cell is kept as is,
/// a multi-valued one resolves to the lanelet containing the center point, and an
/// empty one is filled by map-matching.
pub fn assign_lanes(track: &mut Track, map: &LaneletMap) {
    for f in &mut track.frames {
        if f.lanelet_ids.len() > 1 {
            let idx = f
                .lanelet_ids
                .iter()
                .position(|id| map.lanelet(*id).is_some_and(|ll| ll.contains(f.center)))
                .unwrap_or(0);
            f.lanelet_id = Some(f.lanelet_ids[idx]);
            f.lat_lane_center_offset = f.lat_offsets.get(idx).copied();
        } else if f.lanelet_ids.is_empty() {
            let heading = if track.fields.heading || track.fields.velocity {
                Some(f.heading())
            } else {
                None
            };
            if let Some(pos) = map.locate(f.center.x, f.center.y, heading) {
                f.lanelet_id = Some(pos.lanelet_id);
                f.lat_lane_center_offset = Some(pos.lateral_offset);
            }
        }
        if f.lat_lane_center_offset.is_none() {
            if let Some(ll) = f.lanelet_id.and_then(|id| map.lanelet(id)) {
                f.lat_lane_center_offset = Some(ll.position_of(f.center).lateral_offset);
            }
        }
    }
}

/// Paths of one recording's three CSV files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RecordingFiles {
    pub prefix: String,
    pub recording_meta: PathBuf,
    pub tracks_meta: PathBuf,
    pub tracks: PathBuf,
}

impl RecordingFiles {
    pub fn in_dir(dir: &Path, prefix: &str) -> RecordingFiles {
        RecordingFiles {
            prefix: prefix.to_string(),
            recording_meta: dir.join(format!("{prefix}_recordingMeta.csv")),
            tracks_meta: dir.join(format!("{prefix}_tracksMeta.csv")),
            tracks: dir.join(format!("{prefix}_tracks.csv")),
        }
    }

    pub fn all(&self) -> [&Path; 3] {
        [&self.recording_meta, &self.tracks_meta, &self.tracks]
    }

    pub fn load(&self) -> Result<(RecordingMeta, Vec<Track>)> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
        parse_recording(
            &read(&self.recording_meta)?,
            &read(&self.tracks_meta)?,
            &read(&self.tracks)?,
        )
    }
}

/// Finds recordings in `dir` by their `*_recordingMeta.csv` file, sorted by prefix.
pub fn discover_recordings(dir: &Path) -> Result<Vec<RecordingFiles>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(prefix) = name.strip_suffix("_recordingMeta.csv") {
            let files = RecordingFiles::in_dir(dir, prefix);
            for p in [&files.tracks_meta, &files.tracks] {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "recording {prefix}: missing companion file {}",
                        p.display()
                    )));
                }
            }
            out.push(files);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Lanelet;

    #[test]
    fn class_parsing() {
        assert_eq!(VehicleClass::parse("Car"), VehicleClass::Car);
        assert_eq!(VehicleClass::parse("van"), VehicleClass::Van);
        assert_eq!(VehicleClass::parse("truck"), VehicleClass::Truck);
        assert_eq!(VehicleClass::parse("motorcycle"), VehicleClass::Other);
    }

    #[test]
    fn straddling_vehicle_gets_containing_lanelet() {
        let mut map = LaneletMap::default();
        for (id, y) in [(1, 0.0), (2, 3.5)] {
            let ll = Lanelet::from_boundaries(
                id,
                10 * id,
                10 * id + 1,
                None,
                &[Vec2::new(0.0, y + 3.5), Vec2::new(100.0, y + 3.5)],
                &[Vec2::new(0.0, y), Vec2::new(100.0, y)],
            )
            .unwrap();
            map.lanelets.insert(id, ll);
        }
        let frame = |lanelets: Vec<i64>, offsets: Vec<f64>, y: f64| TrackFrame {
            frame: 0,
            center: Vec2::new(10.0, y),
            heading_deg: 0.0,
            velocity: Vec2::new(10.0, 0.0),
            acceleration: Vec2::ZERO,
            lanelet_ids: lanelets.clone(),
            lat_offsets: offsets.clone(),
            lanelet_id: lanelets.first().copied(),
            lat_lane_center_offset: offsets.first().copied(),
            lane_change: false,
            neighbors: NeighborIds::default(),
        };
        let mut track = Track {
            meta: TrackMeta {
                track_id: 1,
                vehicle_class: VehicleClass::Car,
                length: 4.0,
                width: 2.0,
                first_frame: 0,
                last_frame: 1,
            },
            frames: vec![frame(vec![1, 2], vec![1.7, -1.8], 3.6), frame(vec![], vec![], 5.0)],
            fields: TrackFields { heading: true, ..Default::default() },
            kinematics_incomplete: false,
        };
        track.frames[1].frame = 1;
        assign_lanes(&mut track, &map);
        assert_eq!(track.frames[0].lanelet_id, Some(2));
        assert_eq!(track.frames[0].lat_lane_center_offset, Some(-1.8));
        assert_eq!(track.frames[1].lanelet_id, Some(2));
        assert!((track.frames[1].lat_lane_center_offset.unwrap() + 0.25).abs() < 1e-9);
    }
}
