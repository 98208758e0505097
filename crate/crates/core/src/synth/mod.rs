//! Deterministic synthetic recordings on a straight toy merge with closed-form
//! ground truth.
//!
//! Geometry (meters, lane width 3.5, traffic toward +x):
//! * ramp lane `y ∈ [-3.5, 0]`: 1001 on-ramp `x ∈ [0,120)`, 1002 area 1 `[120,200)`
//!   behind a solid line, 1003 area 2 `[200,320)` and 1004 area 3 `[320,400)` behind a
//!   dashed line; the lane ends at x = 400;
//! * outer mainline `y ∈ [0, 3.5]`: 2001, 2002 (area 4, `[0,200)`), 2003, 2004
//!   (area 5, `[200,400)`), 2005 `[400,520)`;
//! * inner mainline `y ∈ [3.5, 7]`: 3001 `[0,200)`, 3002 `[200,400)`, 3003 `[400,520)`.
//!
//! Chain coordinates therefore equal x minus the chain start.

mod corpus;
mod scene;

use std::collections::BTreeMap;

use crate::geometry::Vec2;
use crate::ingest::{NeighborIds, Track, TrackFields, TrackFrame, TrackMeta, VehicleClass};
use crate::map::{
    AreaConfig, Lanelet, LaneletMap, LayoutFile, LineString, LineType, LocationLayout, MapPoint,
};

pub use corpus::{
    generate_corpus, read_truth, write_corpus, SynthConfig, SynthCorpus, SynthRecording, DATA_DIR, LAYOUT_FILE,
    MAP_FILE, SCENE_FRAMES, TRUTH_FILE,
};
pub use scene::{generate_scene, EdieTruth, GroundTruth, Scene, SceneSpec, ThresholdTruth, MAX_ATTEMPTS};

pub const SYNTH_LOCATION_ID: i64 = 99;
pub const LANE_WIDTH: f64 = 3.5;
pub const SYNTH_FRAME_RATE: f64 = 25.0;
pub const SYNTH_TIMESTEP: f64 = 1.0 / SYNTH_FRAME_RATE;
/// End of the mapped road.
pub const ROAD_END: f64 = 520.0;
/// End of the ramp lane (lane drop).
pub const RAMP_END: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lane {
    Ramp,
    Outer,
    Inner,
}

impl Lane {
    /// Lane containing lateral position `y`; shared boundaries belong to the right lane.
    pub fn of(y: f64) -> Option<Lane> {
        if (-LANE_WIDTH..=0.0).contains(&y) {
            Some(Lane::Ramp)
        } else if y > 0.0 && y <= LANE_WIDTH {
            Some(Lane::Outer)
        } else if y > LANE_WIDTH && y <= 2.0 * LANE_WIDTH {
            Some(Lane::Inner)
        } else {
            None
        }
    }

    pub fn center(self) -> f64 {
        match self {
            Lane::Ramp => -LANE_WIDTH / 2.0,
            Lane::Outer => LANE_WIDTH / 2.0,
            Lane::Inner => 1.5 * LANE_WIDTH,
        }
    }

    pub fn left(self) -> Option<Lane> {
        match self {
            Lane::Ramp => Some(Lane::Outer),
            Lane::Outer => Some(Lane::Inner),
            Lane::Inner => None,
        }
    }

    pub fn right(self) -> Option<Lane> {
        match self {
            Lane::Ramp => None,
            Lane::Outer => Some(Lane::Ramp),
            Lane::Inner => Some(Lane::Outer),
        }
    }

    /// Lanelets of the lane as `(id, x_start, x_end)`.
    fn lanelets(self) -> &'static [(i64, f64, f64)] {
        match self {
            Lane::Ramp => &[(1001, 0.0, 120.0), (1002, 120.0, 200.0), (1003, 200.0, 320.0), (1004, 320.0, 400.0)],
            Lane::Outer => &[
                (2001, 0.0, 120.0),
                (2002, 120.0, 200.0),
                (2003, 200.0, 320.0),
                (2004, 320.0, 400.0),
                (2005, 400.0, 520.0),
            ],
            Lane::Inner => &[(3001, 0.0, 200.0), (3002, 200.0, 400.0), (3003, 400.0, 520.0)],
        }
    }
}

/// Lanelet at `(x, y)` by the half-open rule `x_start <= x < x_end`.
pub fn lanelet_at(x: f64, y: f64) -> Option<i64> {
    let lane = Lane::of(y)?;
    lane.lanelets()
        .iter()
        .find(|&&(_, a, b)| x >= a && x < b)
        .map(|&(id, _, _)| id)
}

/// True when `(x, y)` lies on an area 4 or 5 lanelet.
pub fn on_outer_area(x: f64, y: f64) -> bool {
    Lane::of(y) == Some(Lane::Outer) && (0.0..RAMP_END).contains(&x)
}

/// The toy map.
pub fn synthetic_map() -> LaneletMap {
    let mut map = LaneletMap::default();
    let mut next_point = 1i64;
    let mut next_line = 10_001i64;
    let mut line = |map: &mut LaneletMap, y: f64, x0: f64, x1: f64, subtype: &str| -> (i64, Vec<Vec2>) {
        let mut ids = Vec::new();
        let mut pts = Vec::new();
        let n = ((x1 - x0) / 20.0).ceil().max(1.0) as usize;
        for i in 0..=n {
            let x = x0 + (x1 - x0) * i as f64 / n as f64;
            map.points.insert(next_point, MapPoint { id: next_point, x, y, z: 0.0 });
            ids.push(next_point);
            pts.push(Vec2::new(x, y));
            next_point += 1;
        }
        let id = next_line;
        next_line += 1;
        map.linestrings.insert(
            id,
            LineString {
                id,
                point_ids: ids,
                line_type: LineType::from_tags(Some("line_thin"), Some(subtype)),
                kind: Some("line_thin".into()),
                subtype: Some(subtype.into()),
            },
        );
        (id, pts)
    };
    for lane in [Lane::Ramp, Lane::Outer, Lane::Inner] {
        let (y_r, y_l) = (lane.center() - LANE_WIDTH / 2.0, lane.center() + LANE_WIDTH / 2.0);
        for &(id, x0, x1) in lane.lanelets() {
            let left_type = match lane {
                Lane::Ramp if x0 >= 200.0 => "dashed",
                Lane::Ramp => "solid",
                Lane::Outer => "dashed",
                Lane::Inner => "solid",
            };
            let right_type = match lane {
                Lane::Outer if (200.0..400.0).contains(&x0) => "dashed",
                Lane::Inner => "dashed",
                _ => "solid",
            };
            let (left_id, left) = line(&mut map, y_l, x0, x1, left_type);
            let (right_id, right) = line(&mut map, y_r, x0, x1, right_type);
            let ll = Lanelet::from_boundaries(id, left_id, right_id, Some("highway".into()), &left, &right)
                .expect("toy lanelet is well formed");
            map.lanelets.insert(id, ll);
        }
    }
    map
}

/// Layout of the toy map.
pub fn synthetic_layout() -> LocationLayout {
    let area = |ids: &[i64], lengths: &[f64]| AreaConfig {
        lanelets: ids.to_vec(),
        lengths: Some(lengths.to_vec()),
    };
    let mut areas = BTreeMap::new();
    areas.insert("1".to_string(), area(&[1002], &[80.0]));
    areas.insert("2".to_string(), area(&[1003], &[120.0]));
    areas.insert("3".to_string(), area(&[1004], &[80.0]));
    areas.insert("4".to_string(), area(&[2001, 2002], &[120.0, 80.0]));
    areas.insert("5".to_string(), area(&[2003, 2004], &[120.0, 80.0]));
    LocationLayout {
        map: None,
        areas,
        inner: vec![3001, 3002, 3003],
    }
}

pub fn synthetic_layout_file() -> LayoutFile {
    let mut locations = BTreeMap::new();
    locations.insert(SYNTH_LOCATION_ID.to_string(), synthetic_layout());
    LayoutFile { tolerance: 0.15, locations }
}

/// Longitudinal motion with piecewise-constant acceleration. `phases` holds
/// `(start time, acceleration)` pairs in ascending time, the first starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub x0: f64,
    pub v0: f64,
    pub phases: Vec<(f64, f64)>,
}

impl Motion {
    pub fn constant(x0: f64, v0: f64) -> Motion {
        Motion { x0, v0, phases: vec![(0.0, 0.0)] }
    }

    pub fn accelerating(x0: f64, v0: f64, a: f64) -> Motion {
        Motion { x0, v0, phases: vec![(0.0, a)] }
    }

    /// Position, velocity and acceleration at time `t >= 0`.
    pub fn state(&self, t: f64) -> (f64, f64, f64) {
        let (mut x, mut v) = (self.x0, self.v0);
        for (i, &(start, a)) in self.phases.iter().enumerate() {
            let end = self.phases.get(i + 1).map_or(f64::INFINITY, |p| p.0);
            if t <= end {
                let dt = t - start;
                return (x + v * dt + 0.5 * a * dt * dt, v + a * dt, a);
            }
            let dt = end - start;
            x += v * dt + 0.5 * a * dt * dt;
            v += a * dt;
        }
        unreachable!("last phase is open-ended")
    }
}

/// Minimum-jerk lateral move from `from_y` to `to_y` over frames
/// `[start_frame, start_frame + frames]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralMove {
    pub start_frame: i64,
    pub frames: i64,
    pub from_y: f64,
    pub to_y: f64,
}

impl LateralMove {
    /// Lateral position, speed and acceleration at frame `k`, or `None` outside the move.
    fn state(&self, k: i64, dt: f64) -> Option<(f64, f64, f64)> {
        if k < self.start_frame || k > self.start_frame + self.frames {
            return None;
        }
        let dur = self.frames as f64 * dt;
        let tau = (k - self.start_frame) as f64 / self.frames as f64;
        let w = self.to_y - self.from_y;
        let s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
        let ds = 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau);
        let dds = 60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau;
        Some((self.from_y + w * s, w * ds / dur, w * dds / (dur * dur)))
    }

    /// First frame whose position lies in the target lane.
    pub fn switch_frame(&self) -> i64 {
        let target = Lane::of(self.to_y);
        (self.start_frame..=self.start_frame + self.frames)
            .find(|&k| Lane::of(self.state(k, 1.0).unwrap().0) == target)
            .expect("move ends in its target lane")
    }

    /// Peak lateral speed, `15/8 · |w| / D`.
    pub fn peak_speed(&self, dt: f64) -> f64 {
        15.0 / 8.0 * (self.to_y - self.from_y).abs() / (self.frames as f64 * dt)
    }

    /// Peak lateral acceleration, `10·sqrt(3)/3 · |w| / D²`.
    pub fn peak_accel(&self, dt: f64) -> f64 {
        let d = self.frames as f64 * dt;
        10.0 * 3f64.sqrt() / 3.0 * (self.to_y - self.from_y).abs() / (d * d)
    }
}

/// A vehicle of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub id: i64,
    pub class: VehicleClass,
    pub length: f64,
    pub width: f64,
    pub initial_y: f64,
    pub motion: Motion,
    /// Frame at which `motion` time is zero.
    pub motion_frame: i64,
    pub lateral: Vec<LateralMove>,
    pub first_frame: i64,
    pub last_frame: i64,
}

/// Kinematic state of a vehicle at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub pos: Vec2,
    pub vel: Vec2,
    pub acc: Vec2,
}

impl VehicleSpec {
    pub fn covers(&self, frame: i64) -> bool {
        frame >= self.first_frame && frame <= self.last_frame
    }

    pub fn state(&self, frame: i64, dt: f64) -> State {
        let t = (frame - self.motion_frame) as f64 * dt;
        let (x, vx, ax) = self.motion.state(t);
        let mut lat = (self.initial_y, 0.0, 0.0);
        for mv in &self.lateral {
            if frame > mv.start_frame + mv.frames {
                lat = (mv.to_y, 0.0, 0.0);
            } else if let Some(s) = mv.state(frame, dt) {
                lat = s;
                break;
            } else {
                break;
            }
        }
        State {
            pos: Vec2::new(x, lat.0),
            vel: Vec2::new(vx, lat.1),
            acc: Vec2::new(ax, lat.2),
        }
    }

    pub fn lane(&self, frame: i64, dt: f64) -> Option<Lane> {
        Lane::of(self.state(frame, dt).pos.y)
    }

    /// Samples the vehicle into a track with dataset-style lane fields.
    pub fn render(&self, dt: f64) -> Track {
        let mut frames = Vec::with_capacity((self.last_frame - self.first_frame + 1) as usize);
        let mut prev_lane = None;
        for k in self.first_frame..=self.last_frame {
            let s = self.state(k, dt);
            let lane = Lane::of(s.pos.y);
            let lanelet = lanelet_at(s.pos.x, s.pos.y);
            let offset = lane.filter(|_| lanelet.is_some()).map(|l| s.pos.y - l.center());
            frames.push(TrackFrame {
                frame: k,
                center: s.pos,
                heading_deg: s.vel.y.atan2(s.vel.x).to_degrees(),
                velocity: s.vel,
                acceleration: s.acc,
                lanelet_ids: lanelet.into_iter().collect(),
                lat_offsets: offset.into_iter().collect(),
                lanelet_id: lanelet,
                lat_lane_center_offset: offset,
                lane_change: prev_lane.is_some() && lane.is_some() && prev_lane != lane,
                neighbors: NeighborIds::default(),
            });
            prev_lane = lane;
        }
        Track {
            meta: TrackMeta {
                track_id: self.id,
                vehicle_class: self.class,
                length: self.length,
                width: self.width,
                first_frame: self.first_frame,
                last_frame: self.last_frame,
            },
            frames,
            fields: TrackFields {
                heading: true,
                velocity: true,
                acceleration: true,
                lanelet: true,
                offset: true,
                lane_change: true,
                neighbors: true,
            },
            kinematics_incomplete: false,
        }
    }
}

/// Writes dataset-style neighbor ids into `track` (the track of `ego`): nearest
/// vehicle ahead and behind in the own lane and in each adjacent lane, plus the
/// nearest body-overlapping vehicle in each adjacent lane. No range limit.
pub fn fill_neighbor_ids(track: &mut Track, ego: &VehicleSpec, others: &[&VehicleSpec], dt: f64) {
    for f in &mut track.frames {
        let k = f.frame;
        let es = ego.state(k, dt);
        let Some(ego_lane) = Lane::of(es.pos.y) else { continue };
        let (e_lo, e_hi) = (es.pos.x - ego.length / 2.0, es.pos.x + ego.length / 2.0);
        let mut best: [Option<(f64, i64)>; 8] = [None; 8];
        for o in others.iter().filter(|o| o.covers(k)) {
            let s = o.state(k, dt);
            let Some(lane) = Lane::of(s.pos.y) else { continue };
            let (lo, hi) = (s.pos.x - o.length / 2.0, s.pos.x + o.length / 2.0);
            let overlap = lo < e_hi && e_lo < hi;
            let ahead = s.pos.x > es.pos.x;
            let gap = if overlap {
                (s.pos.x - es.pos.x).abs()
            } else if ahead {
                lo - e_hi
            } else {
                e_lo - hi
            };
            // Slots: lead, rear, left lead, right lead, left alongside, right alongside,
            // left rear, right rear.
            let slot = if lane == ego_lane {
                if overlap {
                    None
                } else if ahead {
                    Some(0)
                } else {
                    Some(1)
                }
            } else if Some(lane) == ego_lane.left() {
                Some(if overlap { 4 } else if ahead { 2 } else { 6 })
            } else if Some(lane) == ego_lane.right() {
                Some(if overlap { 5 } else if ahead { 3 } else { 7 })
            } else {
                None
            };
            if let Some(i) = slot {
                let better = match best[i] {
                    None => true,
                    Some((g, id)) => gap < g || (gap == g && o.id < id),
                };
                if better {
                    best[i] = Some((gap, o.id));
                }
            }
        }
        let id = |i: usize| best[i].map(|b| b.1);
        f.neighbors = NeighborIds {
            lead: id(0),
            rear: id(1),
            left_lead: id(2),
            right_lead: id(3),
            left_alongside: id(4),
            right_alongside: id(5),
            left_rear: id(6),
            right_rear: id(7),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::load_layout;

    #[test]
    fn toy_map_matches_layout() {
        let map = synthetic_map();
        let (layout, warnings) = load_layout(&map, &synthetic_layout(), SYNTH_LOCATION_ID, 0.15).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert!((layout.merge_window_length - 200.0).abs() < 1e-9);
        assert!((layout.mainline_chain().length() - 400.0).abs() < 1e-9);
        for (x, y) in [(10.0, -1.0), (130.0, -2.0), (250.0, 1.0), (410.0, 5.0)] {
            let id = lanelet_at(x, y).unwrap();
            assert!(map.lanelet(id).unwrap().contains(Vec2::new(x, y)));
        }
    }

    #[test]
    fn lateral_move_switches_after_midpoint() {
        let mv = LateralMove { start_frame: 10, frames: 80, from_y: -1.75, to_y: 1.75 };
        assert_eq!(mv.state(50, 0.04).unwrap().0, 0.0);
        assert_eq!(mv.switch_frame(), 51);
    }

    #[test]
    fn piecewise_motion_is_continuous() {
        let m = Motion { x0: 0.0, v0: 10.0, phases: vec![(0.0, 1.0), (2.0, -0.5)] };
        let (x, v, _) = m.state(2.0);
        assert!((x - 22.0).abs() < 1e-12 && (v - 12.0).abs() < 1e-12);
        let (x3, v3, a3) = m.state(4.0);
        assert!((x3 - (22.0 + 24.0 - 1.0)).abs() < 1e-12);
        assert!((v3 - 11.0).abs() < 1e-12 && a3 == -0.5);
    }
}
