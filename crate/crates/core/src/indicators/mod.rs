//! Per-event microscopic indicators: merging distance, ratio and duration, lateral
//! kinematics, time-to-collision, headways and consecutive lane changes.

mod lateral;
mod ttc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::MergingEvent;
use crate::ingest::Track;
use crate::map::MergingAreaLayout;
use crate::scenario::{NeighborTimeline, RecordingIndex};

pub use lateral::{max_abs_on_unit, LateralFit, FIT_GRID_CELLS, MIN_FIT_SAMPLES};
pub use ttc::{range_rate, ttc_1d, ttc_2d};

/// Tolerance on the distance ratio leaving [0, 1].
pub const RATIO_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    /// Ego planar speed at the merge frame, m/s.
    pub merging_speed: f64,
    pub merging_distance: Option<f64>,
    pub distance_ratio: Option<f64>,
    pub duration: Option<f64>,
    pub max_lat_speed: Option<f64>,
    pub max_lat_accel: Option<f64>,
    pub fit_rms: Option<f64>,
    /// Minimum over the window; `inf` when never approaching.
    pub min_ttc_lead: f64,
    pub min_ttc_rear: f64,
    pub lead_dhw: Option<f64>,
    pub lead_thw: Option<f64>,
    pub rear_dhw: Option<f64>,
    pub rear_thw: Option<f64>,
    pub consecutive_lc_duration: Option<f64>,
}

/// Chain coordinates of the ego at D and F along the acceleration lane.
pub fn merge_positions(event: &MergingEvent, track: &Track, layout: &MergingAreaLayout) -> Option<(f64, f64)> {
    let t_d = event.t_d?;
    let chain = layout.acceleration_chain();
    let at = |frame: i64| track.at(frame).map(|f| chain.coordinate_of(f.lanelet_id, f.center));
    Some((at(t_d)?, at(event.t_f)?))
}

pub fn merging_distance(event: &MergingEvent, track: &Track, layout: &MergingAreaLayout) -> Option<f64> {
    merge_positions(event, track, layout).map(|(x_d, x_f)| x_f - x_d)
}

/// Merging distance scaled by the merge window length.
pub fn distance_ratio(distance: f64, merge_window_length: f64) -> Result<f64> {
    let r = distance / merge_window_length;
    if !(-RATIO_TOLERANCE..=1.0 + RATIO_TOLERANCE).contains(&r) {
        return Err(Error::Integrity(format!(
            "distance ratio {r} outside [0, 1] (distance {distance}, window {merge_window_length})"
        )));
    }
    Ok(r)
}

pub fn merging_duration(event: &MergingEvent, timestep: f64) -> Option<f64> {
    event.t_d.map(|d| (event.t_f - d) as f64 * timestep)
}

pub fn consecutive_lc_duration(event: &MergingEvent, timestep: f64) -> Option<f64> {
    event.t_h.map(|h| (h - event.t_f) as f64 * timestep)
}

/// Fits the signed distance of the ego center to the merge boundary over `[t_D, t_F]`.
pub fn fit_lateral_kinematics(
    event: &MergingEvent,
    track: &Track,
    layout: &MergingAreaLayout,
    timestep: f64,
) -> Option<LateralFit> {
    let t_d = event.t_d?;
    let span = (event.t_f - t_d) as f64;
    let boundary = layout.merge_boundary();
    let samples: Vec<(f64, f64)> = (t_d..=event.t_f)
        .filter_map(|fr| track.at(fr))
        .map(|f| ((f.frame - t_d) as f64 / span, boundary.project(f.center, true).offset))
        .collect();
    LateralFit::fit(&samples, span * timestep)
}

/// Minimum 2D TTC against the current lead and rear over `[t_D, t_F]` (from `t_B`
/// when D is absent).
pub fn min_ttc(event: &MergingEvent, timeline: &NeighborTimeline, index: &RecordingIndex) -> (f64, f64) {
    let ego = index.track(event.track_id).expect("ego track");
    let (mut lead_min, mut rear_min) = (f64::INFINITY, f64::INFINITY);
    for frame in event.t_d.unwrap_or(event.t_b)..=event.t_f {
        let (Some(snap), Some(ef)) = (timeline.at(frame), ego.at(frame)) else { continue };
        let ttc_with = |id: Option<i64>| {
            let other = index.track(id?)?.at(frame)?;
            ttc_2d(ef.center, ef.velocity, other.center, other.velocity).ok()
        };
        if let Some(t) = ttc_with(snap.lead_id) {
            lead_min = lead_min.min(t);
        }
        if let Some(t) = ttc_with(snap.rear_id) {
            rear_min = rear_min.min(t);
        }
    }
    (lead_min, rear_min)
}

fn time_headway(dhw: f64, speed: f64) -> f64 {
    if speed > 0.0 {
        dhw / speed
    } else {
        f64::INFINITY
    }
}

/// Distance and time headways at the merge frame: `(lead_dhw, lead_thw, rear_dhw, rear_thw)`.
pub fn headways(
    event: &MergingEvent,
    timeline: &NeighborTimeline,
    index: &RecordingIndex,
) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    let Some(snap) = timeline.at(event.t_f) else { return (None, None, None, None) };
    let ego_speed = index
        .track(event.track_id)
        .and_then(|t| t.at(event.t_f))
        .map_or(0.0, |f| f.speed());
    let lead_thw = snap.lead_gap.map(|g| time_headway(g, ego_speed));
    let rear_speed = snap
        .rear_id
        .and_then(|id| index.track(id))
        .and_then(|t| t.at(event.t_f))
        .map_or(0.0, |f| f.speed());
    let rear_thw = snap.rear_gap.map(|g| time_headway(g, rear_speed));
    (snap.lead_gap, lead_thw, snap.rear_gap, rear_thw)
}

/// All indicators of one event under one neighbor timeline.
pub fn compute_indicators(
    event: &MergingEvent,
    timeline: &NeighborTimeline,
    index: &RecordingIndex,
    timestep: f64,
) -> Result<IndicatorSet> {
    let layout = index.layout;
    let track = index
        .track(event.track_id)
        .ok_or_else(|| Error::Internal(format!("event track {} missing", event.track_id)))?;
    let merging_speed = track.at(event.t_f).map_or(0.0, |f| f.speed());
    let merging_distance = merging_distance(event, track, layout);
    let distance_ratio = merging_distance
        .map(|d| distance_ratio(d, layout.merge_window_length))
        .transpose()
        .map_err(|e| match e {
            Error::Integrity(m) => Error::Integrity(format!(
                "recording {} track {}: {m}",
                event.recording_id, event.track_id
            )),
            other => other,
        })?;
    let fit = fit_lateral_kinematics(event, track, layout, timestep);
    let (min_ttc_lead, min_ttc_rear) = min_ttc(event, timeline, index);
    let (lead_dhw, lead_thw, rear_dhw, rear_thw) = headways(event, timeline, index);
    Ok(IndicatorSet {
        merging_speed,
        merging_distance,
        distance_ratio,
        duration: merging_duration(event, timestep),
        max_lat_speed: fit.as_ref().map(LateralFit::max_abs_speed),
        max_lat_accel: fit.as_ref().map(LateralFit::max_abs_accel),
        fit_rms: fit.as_ref().map(|f| f.rms_residual),
        min_ttc_lead,
        min_ttc_rear,
        lead_dhw,
        lead_thw,
        rear_dhw,
        rear_thw,
        consecutive_lc_duration: consecutive_lc_duration(event, timestep),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::VehicleClass;

    fn event(t_d: Option<i64>, t_f: i64, t_h: Option<i64>) -> MergingEvent {
        MergingEvent {
            recording_id: 1,
            track_id: 1,
            location_id: 2,
            vehicle_class: VehicleClass::Car,
            t_b: 0,
            t_d,
            t_e: None,
            t_f,
            t_g: None,
            t_h,
            crossed_solid: t_d.is_none(),
            warnings: vec![],
        }
    }

    #[test]
    fn durations() {
        assert!((merging_duration(&event(Some(100), 200, None), 0.04).unwrap() - 4.0).abs() < 1e-12);
        assert!((merging_duration(&event(Some(100), 101, None), 0.04).unwrap() - 0.04).abs() < 1e-15);
        assert!((consecutive_lc_duration(&event(Some(1), 200, Some(300)), 0.04).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(consecutive_lc_duration(&event(Some(1), 200, None), 0.04), None);
    }

    #[test]
    fn ratio_bounds() {
        // Location 2 merge window: 119.67 + 40.65.
        let window = 119.67 + 40.65;
        assert!((distance_ratio(80.16, window).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(distance_ratio(0.0, window).unwrap(), 0.0);
        assert_eq!(distance_ratio(window, window).unwrap(), 1.0);
        assert!(matches!(distance_ratio(window + 0.01, window), Err(Error::Integrity(_))));
    }
}
