//! Route classification and key-position detection for on-ramp merges.
//!
//! Key positions (all frame indices):
//! * B: entry into the junction of on-ramp and acceleration lane (area 1).
//! * D: entry into the dashed acceleration lane (area 2).
//! * E: start of the final monotone lateral approach to the merge boundary.
//! * F: the merge itself, where the assigned lanelet switches from the ramp to the
//!   outer mainline lane.
//! * G: first frame with the whole vehicle body past the merge boundary.
//! * H: a subsequent lane change from the outer to the inner mainline lane.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{RecordingMeta, Track, TrackFrame, VehicleClass};
use crate::map::{AreaSet, MergingAreaLayout};

/// Frames of history that must confirm a merge switch.
pub const DEFAULT_LOOKBACK: usize = 5;

/// Minimum jump of the lateral lane-center offset, in meters, for a lanelet switch to
/// count as a lane change rather than a longitudinal hand-over.
pub const LANE_CHANGE_MIN_JUMP: f64 = 1.0;

/// Allowed disagreement, in frames, between the lanelet switch and the offset sign jump.
pub const CROSS_CHECK_FRAMES: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteClass {
    Mainline,
    OnRampMerging,
    OffRamp,
    Other,
}

impl RouteClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteClass::Mainline => "mainline",
            RouteClass::OnRampMerging => "on_ramp_merging",
            RouteClass::OffRamp => "off_ramp",
            RouteClass::Other => "other",
        }
    }
}

/// Per-frame area membership of a track, `EMPTY` for unassigned frames.
fn area_sequence(track: &Track, layout: &MergingAreaLayout) -> Vec<AreaSet> {
    track
        .frames
        .iter()
        .map(|f| f.lanelet_id.map_or(AreaSet::EMPTY, |id| layout.areas_of(id)))
        .collect()
}

fn is_mainline_or_inner(layout: &MergingAreaLayout, f: &TrackFrame, areas: AreaSet) -> bool {
    areas.is_mainline() || f.lanelet_id.is_some_and(|id| layout.is_inner(id))
}

pub fn classify_route(track: &Track, layout: &MergingAreaLayout) -> RouteClass {
    let areas = area_sequence(track, layout);
    if track.frames.iter().all(|f| f.lanelet_id.is_none()) {
        return RouteClass::Other;
    }
    let first_ramp = areas.iter().position(|a| a.is_exclusive_ramp());
    let first_main = track
        .frames
        .iter()
        .zip(&areas)
        .position(|(f, a)| is_mainline_or_inner(layout, f, *a));
    match (first_ramp, first_main) {
        (Some(r), Some(_)) => {
            let main_after_ramp = track.frames[r + 1..]
                .iter()
                .zip(&areas[r + 1..])
                .any(|(f, a)| is_mainline_or_inner(layout, f, *a));
            if main_after_ramp {
                RouteClass::OnRampMerging
            } else {
                RouteClass::OffRamp
            }
        }
        (None, Some(_)) => RouteClass::Mainline,
        _ => RouteClass::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    /// The route is not an on-ramp merge; the route class is recorded separately.
    NotMerging,
    /// No switch from the ramp areas to the outer mainline lane.
    MergeNotFound,
    /// A switch exists but its preceding frames are not all on the ramp.
    MergeNotConfirmed,
}

impl RejectionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::NotMerging => "not_merging",
            RejectionReason::MergeNotFound => "merge_not_found",
            RejectionReason::MergeNotConfirmed => "merge_not_confirmed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub route: RouteClass,
    pub reason: RejectionReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergingEvent {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub vehicle_class: VehicleClass,
    pub t_b: i64,
    pub t_d: Option<i64>,
    pub t_e: Option<i64>,
    pub t_f: i64,
    pub t_g: Option<i64>,
    pub t_h: Option<i64>,
    pub crossed_solid: bool,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl MergingEvent {
    /// Stable identifier used to join output tables.
    pub fn key(&self) -> (i64, i64) {
        (self.recording_id, self.track_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    pub lookback: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { lookback: DEFAULT_LOOKBACK }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneChangeSide {
    Left,
    Right,
    Unknown,
}

/// Lane-change frames of a track: dataset flags plus lanelet switches whose lateral
/// offset jumps sign by more than [`LANE_CHANGE_MIN_JUMP`]. Positive-to-negative is a
/// change to the left. Frames are absolute indices, sorted, not yet collapsed.
pub fn lane_change_frames(track: &Track) -> Vec<(i64, LaneChangeSide)> {
    let mut out = Vec::new();
    for (i, f) in track.frames.iter().enumerate() {
        let side = if i == 0 {
            None
        } else {
            let p = &track.frames[i - 1];
            match (p.lanelet_id, f.lanelet_id, p.lat_lane_center_offset, f.lat_lane_center_offset) {
                (Some(a), Some(b), Some(oa), Some(ob))
                    if a != b && (oa - ob).abs() > LANE_CHANGE_MIN_JUMP =>
                {
                    if oa > 0.0 && ob < 0.0 {
                        Some(LaneChangeSide::Left)
                    } else if oa < 0.0 && ob > 0.0 {
                        Some(LaneChangeSide::Right)
                    } else {
                        None
                    }
                }
                _ => None,
            }
        };
        match (side, f.lane_change) {
            (Some(s), _) => out.push((f.frame, s)),
            (None, true) => out.push((f.frame, LaneChangeSide::Unknown)),
            (None, false) => {}
        }
    }
    out
}

/// Collapses lane-change frames closer than `lookback` frames to the earliest one of
/// each cluster. `anchors` are frames that are always kept and suppress their
/// neighbors (the merge frame itself).
pub fn collapse_lane_changes(
    frames: &[(i64, LaneChangeSide)],
    anchors: &[i64],
    lookback: usize,
) -> Vec<(i64, LaneChangeSide)> {
    let mut all: Vec<(i64, LaneChangeSide, bool)> = frames.iter().map(|&(f, s)| (f, s, false)).collect();
    all.extend(anchors.iter().map(|&f| (f, LaneChangeSide::Unknown, true)));
    all.sort_by_key(|&(f, _, anchor)| (f, !anchor));
    let mut kept: Vec<(i64, LaneChangeSide, bool)> = Vec::new();
    for item in all {
        match kept.last() {
            Some(&(last, _, _)) if item.0 - last <= lookback as i64 => {}
            _ => kept.push(item),
        }
    }
    kept.into_iter().filter(|k| !k.2).map(|(f, s, _)| (f, s)).collect()
}

fn reject(meta: &RecordingMeta, track: &Track, route: RouteClass, reason: RejectionReason, detail: String) -> Rejection {
    Rejection {
        recording_id: meta.recording_id,
        track_id: track.id(),
        location_id: meta.location_id,
        route,
        reason,
        detail,
    }
}

/// Detects the key positions of one on-ramp merging track.
pub fn detect_key_positions(
    meta: &RecordingMeta,
    track: &Track,
    layout: &MergingAreaLayout,
    config: &ExtractConfig,
) -> Result<MergingEvent, Rejection> {
    let route = classify_route(track, layout);
    if route != RouteClass::OnRampMerging {
        return Err(reject(meta, track, route, RejectionReason::NotMerging, route.as_str().into()));
    }
    let areas = area_sequence(track, layout);
    let frames = &track.frames;
    let lookback = config.lookback;

    let mut first_switch = None;
    let mut merge_idx = None;
    for k in 1..frames.len() {
        if !(areas[k].is_mainline() && areas[k - 1].is_exclusive_ramp()) {
            continue;
        }
        first_switch.get_or_insert(k);
        if k < lookback {
            continue;
        }
        let window = &areas[k - lookback..k];
        let all_ramp = window.iter().all(|a| a.is_exclusive_ramp());
        let monotone = window
            .windows(2)
            .all(|w| w[0].ramp_rank() <= w[1].ramp_rank());
        if all_ramp && monotone {
            merge_idx = Some(k);
            break;
        }
    }
    let Some(kf) = merge_idx else {
        return Err(match first_switch {
            None => reject(meta, track, route, RejectionReason::MergeNotFound, "no ramp-to-mainline switch".into()),
            Some(k) => reject(
                meta,
                track,
                route,
                RejectionReason::MergeNotConfirmed,
                format!("switch at frame {} lacks {lookback} confirming ramp frames", frames[k].frame),
            ),
        });
    };
    let t_f = frames[kf].frame;
    let mut warnings = Vec::new();

    let t_d = (0..kf).find(|&i| areas[i].contains(2)).map(|i| frames[i].frame);
    let first_area1 = (0..kf).find(|&i| areas[i].contains(1));
    let first_ramp = (0..kf).find(|&i| areas[i].is_exclusive_ramp());
    let mut t_b = first_area1.or(first_ramp).map(|i| frames[i].frame).unwrap_or(frames[kf - 1].frame);
    if let Some(d) = t_d {
        t_b = t_b.min(d);
    }

    // Cross-check against the sign jump of the lane-center offset.
    let sign_jump = (1..frames.len())
        .filter(|&i| {
            matches!(
                (frames[i - 1].lat_lane_center_offset, frames[i].lat_lane_center_offset),
                (Some(a), Some(b)) if a > 0.0 && b < 0.0
            )
        })
        .map(|i| frames[i].frame)
        .min_by_key(|f| (f - t_f).abs());
    match sign_jump {
        Some(f) if (f - t_f).abs() <= CROSS_CHECK_FRAMES => {}
        Some(f) => warnings.push(format!(
            "track {}: lanelet switch at frame {t_f} but offset sign jump at frame {f}",
            track.id()
        )),
        None => warnings.push(format!(
            "track {}: no offset sign jump near merge frame {t_f}",
            track.id()
        )),
    }

    let boundary = layout.merge_boundary();
    let boundary_offset = |f: &TrackFrame| boundary.project(f.center, true).offset;

    let start = t_d.unwrap_or(t_b);
    let ks = (start - frames[0].frame) as usize;
    let t_e = (ks..kf).find_map(|i| {
        if i + lookback > kf {
            return None;
        }
        let rising = (i..i + lookback).all(|j| boundary_offset(&frames[j + 1]) > boundary_offset(&frames[j]));
        rising.then_some(frames[i].frame)
    });

    let half_width = track.meta.width / 2.0;
    let t_g = frames[kf..]
        .iter()
        .find(|f| boundary_offset(f) >= half_width)
        .map(|f| f.frame);

    let changes = collapse_lane_changes(&lane_change_frames(track), &[t_f], lookback);
    let inner_target = |f: &TrackFrame| match f.lanelet_id {
        Some(id) if !layout.inner_lanelets.is_empty() => layout.is_inner(id),
        Some(id) => layout.areas_of(id).is_empty(),
        None => false,
    };
    let t_h = changes
        .iter()
        .filter(|&&(f, side)| f > t_f && side != LaneChangeSide::Right)
        .find(|&&(f, _)| {
            let cur = track.at(f).unwrap();
            let prev = track.at(f - 1);
            inner_target(cur) && prev.is_some_and(|p| !inner_target(p))
        })
        .map(|&(f, _)| f);

    Ok(MergingEvent {
        recording_id: meta.recording_id,
        track_id: track.id(),
        location_id: meta.location_id,
        vehicle_class: track.meta.vehicle_class,
        t_b,
        t_d,
        t_e,
        t_f,
        t_g,
        t_h,
        crossed_solid: t_d.is_none(),
        warnings,
    })
}

/// Accepted events and rejections of one recording, in track-id order.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub events: Vec<MergingEvent>,
    pub rejections: Vec<Rejection>,
    pub routes: BTreeMap<RouteClass, usize>,
}

pub fn extract_events(
    meta: &RecordingMeta,
    tracks: &[Track],
    layout: &MergingAreaLayout,
    config: &ExtractConfig,
) -> Extraction {
    let mut out = Extraction::default();
    for track in tracks {
        match detect_key_positions(meta, track, layout, config) {
            Ok(ev) => {
                *out.routes.entry(RouteClass::OnRampMerging).or_default() += 1;
                out.events.push(ev);
            }
            Err(rej) => {
                *out.routes.entry(rej.route).or_default() += 1;
                out.rejections.push(rej);
            }
        }
    }
    out
}

/// Solid-line merger counts for one location.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolidLineRow {
    pub location_id: i64,
    pub car: usize,
    pub truck: usize,
    pub van: usize,
    pub other: usize,
}

/// Counts merges across the solid line per location and class. Every location in
/// `locations` gets a row, even when it has no events.
pub fn count_solid_line_merges(events: &[MergingEvent], locations: &[i64]) -> Vec<SolidLineRow> {
    let mut rows: BTreeMap<i64, SolidLineRow> = locations
        .iter()
        .map(|&l| (l, SolidLineRow { location_id: l, ..Default::default() }))
        .collect();
    for ev in events.iter().filter(|e| e.crossed_solid) {
        let row = rows
            .entry(ev.location_id)
            .or_insert_with(|| SolidLineRow { location_id: ev.location_id, ..Default::default() });
        match ev.vehicle_class {
            VehicleClass::Car => row.car += 1,
            VehicleClass::Truck => row.truck += 1,
            VehicleClass::Van => row.van += 1,
            VehicleClass::Other => row.other += 1,
        }
    }
    rows.into_values().collect()
}
