//! Generalized (space-time region) flow, density and speed over the upstream and
//! downstream outer-lane areas.

use serde::{Deserialize, Serialize};

use crate::events::MergingEvent;
use crate::ingest::Track;
use crate::map::{Chain, MergingAreaLayout};

/// A stretch of lane observed over frames `[t0, t1)`.
#[derive(Debug, Clone, Copy)]
pub struct SpaceTimeRegion<'a> {
    pub chain: &'a Chain,
    pub t0: i64,
    pub t1: i64,
}

impl SpaceTimeRegion<'_> {
    pub fn length(&self) -> f64 {
        self.chain.length()
    }

    /// Area of the region in m·s.
    pub fn area(&self, timestep: f64) -> f64 {
        self.length() * (self.t1 - self.t0) as f64 * timestep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdieEstimate {
    /// Total distance traveled inside the region, m.
    pub total_distance: f64,
    /// Total time spent inside the region, s.
    pub total_time: f64,
    /// Region area, m·s.
    pub area: f64,
    /// Flow, veh/s.
    pub q: f64,
    /// Density, veh/m.
    pub k: f64,
    /// Space-mean speed, m/s; undefined when nobody was inside.
    pub v: Option<f64>,
    pub n_vehicles: usize,
}

impl EdieEstimate {
    pub fn from_totals(total_distance: f64, total_time: f64, area: f64, n_vehicles: usize) -> EdieEstimate {
        let (q, k) = if area > 0.0 {
            (total_distance / area, total_time / area)
        } else {
            (0.0, 0.0)
        };
        EdieEstimate {
            total_distance,
            total_time,
            area,
            q,
            k,
            v: (total_time > 0.0).then(|| total_distance / total_time),
            n_vehicles,
        }
    }

    pub fn q_veh_per_h(&self) -> f64 {
        self.q * 3600.0
    }

    pub fn k_veh_per_km(&self) -> f64 {
        self.k * 1000.0
    }

    pub fn v_km_per_h(&self) -> Option<f64> {
        self.v.map(|v| v * 3.6)
    }
}

/// Accumulates distance and time of every vehicle whose assigned lanelet belongs to
/// the region's chain. Each frame inside contributes one timestep and the chain
/// displacement to the next frame.
pub fn edie_estimate<'t>(
    tracks: impl IntoIterator<Item = &'t Track>,
    region: &SpaceTimeRegion,
    timestep: f64,
) -> EdieEstimate {
    let chain = region.chain;
    let (mut dist, mut frames, mut n) = (0.0, 0u64, 0usize);
    for track in tracks {
        if track.last_frame() < region.t0 || track.first_frame() >= region.t1 {
            continue;
        }
        let mut inside_any = false;
        for frame in region.t0.max(track.first_frame())..region.t1.min(track.last_frame() + 1) {
            let f = track.at(frame).unwrap();
            if !f.lanelet_id.is_some_and(|id| chain.contains(id)) {
                continue;
            }
            inside_any = true;
            frames += 1;
            let s = chain.coordinate_of(f.lanelet_id, f.center);
            let s_next = match track.at(frame + 1) {
                Some(g) => chain.coordinate_of(g.lanelet_id, g.center),
                None => s + f.speed() * timestep,
            };
            dist += s_next - s;
        }
        n += usize::from(inside_any);
    }
    EdieEstimate::from_totals(dist, frames as f64 * timestep, region.area(timestep), n)
}

/// Upstream (area 4) and downstream (area 5) estimates over `[t_B, t_F)` of an event.
/// Upstream is `None` when the layout has no area 4.
pub fn event_macro(
    event: &MergingEvent,
    tracks: &[Track],
    layout: &MergingAreaLayout,
    timestep: f64,
) -> (Option<EdieEstimate>, EdieEstimate) {
    let region = |chain| SpaceTimeRegion { chain, t0: event.t_b, t1: event.t_f };
    let up = layout
        .upstream_chain()
        .map(|c| edie_estimate(tracks, &region(c), timestep));
    let down = edie_estimate(tracks, &region(layout.downstream_chain()), timestep);
    (up, down)
}
