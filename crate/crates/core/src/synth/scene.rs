//! One merging scene: an ego vehicle merging from the ramp, up to two role vehicles
//! on the outer mainline lane authored to produce a target scenario label, and
//! distractors. Ground truth comes from the analytic motion, not from the pipeline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Lane, LateralMove, Motion, VehicleSpec, RAMP_END, SYNTH_LOCATION_ID, SYNTH_TIMESTEP,
};
use crate::error::{Error, Result};
use crate::ingest::VehicleClass;
use crate::scenario::{ScenarioLabel, DEFAULT_THRESHOLDS};

/// Attempts before a scene request is abandoned.
pub const MAX_ATTEMPTS: usize = 200;
/// Ego starting position on the entry ramp lanelet.
const EGO_X0: f64 = 105.0;
/// Ego leaves the scene before this position.
const EGO_X_MAX: f64 = 515.0;
/// Frames of outer-lane driving kept after the last lane change.
const TAIL_FRAMES: i64 = 25;
/// Minimum same-lane bumper gap between any two vehicles.
const MIN_SAME_LANE_GAP: f64 = 1.0;
/// Minimum distance of any candidate separation from 0 and from each threshold.
const EDGE_MARGIN: f64 = 0.05;
const THRESHOLD_MARGIN: f64 = 0.5;

/// What a scene should contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub recording_id: i64,
    /// Frame at which the ego appears.
    pub start_frame: i64,
    /// Last frame any vehicle of the scene may occupy.
    pub end_frame: i64,
    /// Track id of the ego; other vehicles follow consecutively.
    pub first_track_id: i64,
    pub target: ScenarioLabel,
    pub crossed_solid: bool,
    pub consecutive: bool,
    pub ego_class: VehicleClass,
    pub distractors: usize,
}

/// Expected results of one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTruth {
    pub threshold: f64,
    pub label: ScenarioLabel,
    pub lead_id: Option<i64>,
    pub rear_id: Option<i64>,
    /// `None` when the pair never approaches (infinite TTC).
    pub min_ttc_lead: Option<f64>,
    pub min_ttc_rear: Option<f64>,
    pub lead_dhw: Option<f64>,
    pub lead_thw: Option<f64>,
    pub rear_dhw: Option<f64>,
    pub rear_thw: Option<f64>,
}

/// Expected space-time totals of one region over `[t_B, t_F)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdieTruth {
    pub total_distance: f64,
    pub total_time: f64,
    pub area: f64,
    pub n_vehicles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub vehicle_class: VehicleClass,
    pub target: ScenarioLabel,
    pub crossed_solid: bool,
    pub t_b: i64,
    pub t_d: Option<i64>,
    pub t_e: Option<i64>,
    pub t_f: i64,
    pub t_g: Option<i64>,
    pub t_h: Option<i64>,
    pub merging_speed: f64,
    pub merging_distance: Option<f64>,
    pub distance_ratio: Option<f64>,
    pub duration: Option<f64>,
    pub max_lat_speed: Option<f64>,
    pub max_lat_accel: Option<f64>,
    pub consecutive_lc_duration: Option<f64>,
    pub thresholds: Vec<ThresholdTruth>,
    pub edie_upstream: EdieTruth,
    pub edie_downstream: EdieTruth,
}

impl GroundTruth {
    pub fn at_threshold(&self, threshold: f64) -> Option<&ThresholdTruth> {
        self.thresholds.iter().find(|t| t.threshold == threshold)
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    /// Ego first.
    pub vehicles: Vec<VehicleSpec>,
    pub truth: GroundTruth,
}

fn class_dimensions(class: VehicleClass, rng: &mut impl Rng) -> (f64, f64) {
    match class {
        VehicleClass::Car => (rng.random_range(4.2..4.9), rng.random_range(1.75..1.95)),
        VehicleClass::Van => (rng.random_range(5.2..6.2), rng.random_range(1.95..2.1)),
        VehicleClass::Truck => (rng.random_range(10.0..14.0), rng.random_range(2.45..2.55)),
        VehicleClass::Other => (rng.random_range(2.0..2.5), rng.random_range(0.7..0.9)),
    }
}

fn random_class(rng: &mut impl Rng) -> VehicleClass {
    match rng.random_range(0..10) {
        0 | 1 => VehicleClass::Truck,
        2 => VehicleClass::Van,
        _ => VehicleClass::Car,
    }
}

/// Ego vehicle plus its key frames.
struct EgoPlan {
    ego: VehicleSpec,
    t_b: i64,
    t_d: Option<i64>,
    t_f: i64,
    t_h: Option<i64>,
    merge_move: LateralMove,
}

fn first_frame_at(ego: &VehicleSpec, from: i64, x: f64) -> i64 {
    let mut k = from;
    while ego.state(k, SYNTH_TIMESTEP).pos.x < x {
        k += 1;
    }
    k
}

fn plan_ego(spec: &SceneSpec, rng: &mut impl Rng) -> Option<EgoPlan> {
    let (length, width) = class_dimensions(spec.ego_class, rng);
    let mut ego = VehicleSpec {
        id: spec.first_track_id,
        class: spec.ego_class,
        length,
        width,
        initial_y: Lane::Ramp.center(),
        motion: Motion::accelerating(EGO_X0, rng.random_range(18.0..24.0), rng.random_range(0.0..0.6)),
        motion_frame: spec.start_frame,
        lateral: Vec::new(),
        first_frame: spec.start_frame,
        last_frame: spec.start_frame,
    };
    let t_b = first_frame_at(&ego, spec.start_frame, 120.0);
    let (t_d, merge_move) = if spec.crossed_solid {
        let m = rng.random_range(25..=40);
        let start = t_b + rng.random_range(6..=15);
        (None, LateralMove { start_frame: start, frames: 2 * m, from_y: Lane::Ramp.center(), to_y: Lane::Outer.center() })
    } else {
        let t_d = first_frame_at(&ego, t_b, 200.0);
        let m = rng.random_range(38..=75);
        (Some(t_d), LateralMove { start_frame: t_d, frames: 2 * m, from_y: Lane::Ramp.center(), to_y: Lane::Outer.center() })
    };
    let t_f = merge_move.switch_frame();
    ego.lateral.push(merge_move);
    let x_f = ego.state(t_f, SYNTH_TIMESTEP).pos.x;
    if (spec.crossed_solid && x_f >= 199.0) || x_f >= RAMP_END {
        return None;
    }
    let mut end = merge_move.start_frame + merge_move.frames;
    let mut t_h = None;
    if spec.consecutive {
        let m2 = rng.random_range(30..=60);
        let mv = LateralMove {
            start_frame: end + rng.random_range(10..=40),
            frames: 2 * m2,
            from_y: Lane::Outer.center(),
            to_y: Lane::Inner.center(),
        };
        t_h = Some(mv.switch_frame());
        end = mv.start_frame + mv.frames;
        ego.lateral.push(mv);
    }
    ego.last_frame = end + TAIL_FRAMES;
    if ego.last_frame > spec.end_frame || ego.state(ego.last_frame, SYNTH_TIMESTEP).pos.x >= EGO_X_MAX {
        return None;
    }
    Some(EgoPlan { ego, t_b, t_d, t_f, t_h, merge_move })
}

/// Role of an authored outer-lane vehicle relative to the ego over `[t_B, t_F]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    StayLead,
    RearToLead,
    StayRear,
    LeadToRear,
}

fn roles_for(label: ScenarioLabel) -> &'static [Role] {
    use Role::*;
    match label {
        ScenarioLabel::A => &[],
        ScenarioLabel::B => &[StayLead],
        ScenarioLabel::C => &[RearToLead],
        ScenarioLabel::D => &[StayRear],
        ScenarioLabel::E => &[StayLead, StayRear],
        ScenarioLabel::F => &[StayRear, RearToLead],
        ScenarioLabel::G => &[LeadToRear],
        ScenarioLabel::H => &[LeadToRear, StayLead],
    }
}

/// Constant-speed vehicle through `x_at_ref` at frame `ref_frame`, restricted to the
/// frames where it is on the road inside the scene window.
fn constant_speed_vehicle(
    id: i64,
    class: VehicleClass,
    (length, width): (f64, f64),
    y: f64,
    x_at_ref: f64,
    v: f64,
    ref_frame: i64,
    window: (i64, i64),
) -> Option<VehicleSpec> {
    if !(v > 3.0) {
        return None;
    }
    let dt = SYNTH_TIMESTEP;
    let frame_at = |x: f64| ref_frame as f64 + (x - x_at_ref) / (v * dt);
    let first = (frame_at(0.0).ceil() as i64).max(window.0);
    let last = (frame_at(EGO_X_MAX).floor() as i64).min(window.1);
    (first <= last).then(|| VehicleSpec {
        id,
        class,
        length,
        width,
        initial_y: y,
        motion: Motion::constant(x_at_ref, v),
        motion_frame: ref_frame,
        lateral: Vec::new(),
        first_frame: first,
        last_frame: last,
    })
}

fn author_vehicles(spec: &SceneSpec, plan: &EgoPlan, rng: &mut impl Rng) -> Option<Vec<VehicleSpec>> {
    let dt = SYNTH_TIMESTEP;
    let ego = &plan.ego;
    let window = (spec.start_frame, ego.last_frame);
    let x_b = ego.state(plan.t_b, dt).pos.x;
    let x_f = ego.state(plan.t_f, dt).pos.x;
    let span = (plan.t_f - plan.t_b) as f64 * dt;
    let v_mean = (x_f - x_b) / span;
    let mut out = vec![ego.clone()];
    let mut next_id = spec.first_track_id + 1;
    for &role in roles_for(spec.target) {
        let dims = class_dimensions(VehicleClass::Car, rng);
        let h = (ego.length + dims.0) / 2.0;
        let (rel_f, dv) = match role {
            Role::StayLead => (h + rng.random_range(2.0..60.0), rng.random_range(-4.0..6.0)),
            Role::StayRear => (-h - rng.random_range(2.0..60.0), rng.random_range(-6.0..4.0)),
            Role::RearToLead => (h + rng.random_range(2.0..45.0), rng.random_range(2.0..14.0)),
            Role::LeadToRear => (-h - rng.random_range(2.0..45.0), -rng.random_range(2.0..14.0)),
        };
        out.push(constant_speed_vehicle(
            next_id,
            VehicleClass::Car,
            dims,
            Lane::Outer.center(),
            x_f + rel_f,
            v_mean + dv,
            plan.t_f,
            window,
        )?);
        next_id += 1;
    }
    for _ in 0..spec.distractors {
        let class = random_class(rng);
        let dims = class_dimensions(class, rng);
        let (y, x, v) = if rng.random_bool(0.5) {
            (Lane::Inner.center(), x_f + rng.random_range(-80.0..80.0), v_mean + rng.random_range(-3.0..5.0))
        } else {
            let rel = rng.random_range(130.0..260.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (Lane::Outer.center(), x_f + rel, v_mean + rng.random_range(-2.0..2.0))
        };
        if let Some(v) = constant_speed_vehicle(next_id, class, dims, y, x, v, plan.t_f, window) {
            out.push(v);
            next_id += 1;
        }
    }
    Some(out)
}

fn same_lane_conflict(vehicles: &[VehicleSpec]) -> bool {
    let dt = SYNTH_TIMESTEP;
    for (i, a) in vehicles.iter().enumerate() {
        for b in &vehicles[i + 1..] {
            for k in a.first_frame.max(b.first_frame)..=a.last_frame.min(b.last_frame) {
                let (sa, sb) = (a.state(k, dt).pos, b.state(k, dt).pos);
                if Lane::of(sa.y) == Lane::of(sb.y)
                    && (sa.x - sb.x).abs() - (a.length + b.length) / 2.0 < MIN_SAME_LANE_GAP
                {
                    return true;
                }
            }
        }
    }
    false
}

/// Roles at one frame as seen by the label oracle.
#[derive(Debug, Clone, Default)]
struct OracleFrame {
    lead: Option<(i64, f64)>,
    rear: Option<(i64, f64)>,
    alongside: Vec<i64>,
}

/// Candidate separations: positive bumper gap ahead/behind, negative when bodies
/// overlap. Candidates are outer-lane vehicles on the area 4/5 stretch.
fn separations(vehicles: &[VehicleSpec], k: i64) -> Vec<(i64, f64, f64)> {
    let dt = SYNTH_TIMESTEP;
    let ego = &vehicles[0];
    let e = ego.state(k, dt).pos.x;
    vehicles[1..]
        .iter()
        .filter(|v| v.covers(k))
        .filter_map(|v| {
            let p = v.state(k, dt).pos;
            let on_area = Lane::of(p.y) == Some(Lane::Outer) && (0.0..RAMP_END).contains(&p.x);
            on_area.then(|| {
                let sep = (p.x - e).abs() - (ego.length + v.length) / 2.0;
                (v.id, p.x - e, sep)
            })
        })
        .collect()
}

fn oracle_frame(vehicles: &[VehicleSpec], k: i64, threshold: f64) -> OracleFrame {
    let mut f = OracleFrame::default();
    for (id, dx, sep) in separations(vehicles, k) {
        if sep < 0.0 {
            f.alongside.push(id);
            continue;
        }
        if sep > threshold {
            continue;
        }
        let slot = if dx > 0.0 { &mut f.lead } else { &mut f.rear };
        if slot.map_or(true, |(_, g)| sep < g) {
            *slot = Some((id, sep));
        }
    }
    f
}

/// Label from roles at the last frame and their history over the earlier frames.
fn oracle_label(frames: &[OracleFrame]) -> ScenarioLabel {
    let (last, prior) = frames.split_last().expect("non-empty window");
    let lead = last.lead.map(|l| l.0);
    let rear = last.rear.map(|r| r.0);
    let was_rear = |id: i64| prior.iter().any(|f| f.rear.map(|r| r.0) == Some(id) || f.alongside.contains(&id));
    let was_lead = |id: i64| prior.iter().any(|f| f.lead.map(|l| l.0) == Some(id) || f.alongside.contains(&id));
    if rear.is_some_and(was_lead) {
        return if lead.is_some() { ScenarioLabel::H } else { ScenarioLabel::G };
    }
    match (lead, rear) {
        (None, None) => ScenarioLabel::A,
        (Some(l), None) if was_rear(l) => ScenarioLabel::C,
        (Some(_), None) => ScenarioLabel::B,
        (None, Some(_)) => ScenarioLabel::D,
        (Some(l), Some(_)) if was_rear(l) => ScenarioLabel::F,
        (Some(_), Some(_)) => ScenarioLabel::E,
    }
}

/// Rejects windows where a classification would hinge on a boundary case.
fn ambiguous(vehicles: &[VehicleSpec], t_b: i64, t_f: i64) -> bool {
    for k in t_b..=t_f {
        let seps = separations(vehicles, k);
        if seps.iter().filter(|s| s.2 < 0.0).count() > 1 {
            return true;
        }
        for (i, &(_, dx, sep)) in seps.iter().enumerate() {
            if sep.abs() < EDGE_MARGIN || DEFAULT_THRESHOLDS.iter().any(|t| (sep - t).abs() < THRESHOLD_MARGIN) {
                return true;
            }
            if seps[i + 1..].iter().any(|o| (o.1 > 0.0) == (dx > 0.0) && (o.2 - sep).abs() < 1e-6) {
                return true;
            }
        }
    }
    false
}

fn ttc(vehicles: &[VehicleSpec], k: i64, other: i64) -> f64 {
    let dt = SYNTH_TIMESTEP;
    let e = vehicles[0].state(k, dt);
    let o = vehicles.iter().find(|v| v.id == other).unwrap().state(k, dt);
    let (dx, dy) = (e.pos.x - o.pos.x, e.pos.y - o.pos.y);
    let (dvx, dvy) = (e.vel.x - o.vel.x, e.vel.y - o.vel.y);
    let d = dx.hypot(dy);
    let ddot = (dx * dvx + dy * dvy) / d;
    if ddot < 0.0 {
        -d / ddot
    } else {
        f64::INFINITY
    }
}

fn threshold_truth(vehicles: &[VehicleSpec], plan: &EgoPlan, threshold: f64) -> ThresholdTruth {
    let dt = SYNTH_TIMESTEP;
    let frames: Vec<OracleFrame> = (plan.t_b..=plan.t_f).map(|k| oracle_frame(vehicles, k, threshold)).collect();
    let label = oracle_label(&frames);
    let (mut ttc_lead, mut ttc_rear) = (f64::INFINITY, f64::INFINITY);
    let from = plan.t_d.unwrap_or(plan.t_b);
    for (k, f) in (plan.t_b..=plan.t_f).zip(&frames) {
        if k < from {
            continue;
        }
        if let Some((id, _)) = f.lead {
            ttc_lead = ttc_lead.min(ttc(vehicles, k, id));
        }
        if let Some((id, _)) = f.rear {
            ttc_rear = ttc_rear.min(ttc(vehicles, k, id));
        }
    }
    let last = frames.last().unwrap();
    let speed_of = |id: i64| {
        let v = vehicles.iter().find(|v| v.id == id).unwrap().state(plan.t_f, dt).vel;
        v.x.hypot(v.y)
    };
    let ego_speed = speed_of(vehicles[0].id);
    ThresholdTruth {
        threshold,
        label,
        lead_id: last.lead.map(|l| l.0),
        rear_id: last.rear.map(|r| r.0),
        min_ttc_lead: ttc_lead.is_finite().then_some(ttc_lead),
        min_ttc_rear: ttc_rear.is_finite().then_some(ttc_rear),
        lead_dhw: last.lead.map(|l| l.1),
        lead_thw: last.lead.map(|l| l.1 / ego_speed),
        rear_dhw: last.rear.map(|r| r.1),
        rear_thw: last.rear.map(|(id, g)| g / speed_of(id)),
    }
}

/// Space-time totals over `[t_B, t_F)` on the outer lane between `x0` and `x1`:
/// each frame inside adds one timestep and the displacement to the next frame.
fn edie_truth(vehicles: &[VehicleSpec], t_b: i64, t_f: i64, x0: f64, x1: f64) -> EdieTruth {
    let dt = SYNTH_TIMESTEP;
    let (mut dist, mut frames, mut n) = (0.0, 0u64, 0usize);
    for v in vehicles {
        let mut inside_any = false;
        for k in t_b..t_f {
            if !v.covers(k) {
                continue;
            }
            let s = v.state(k, dt);
            if Lane::of(s.pos.y) != Some(Lane::Outer) || s.pos.x < x0 || s.pos.x >= x1 {
                continue;
            }
            inside_any = true;
            frames += 1;
            dist += if v.covers(k + 1) {
                v.state(k + 1, dt).pos.x - s.pos.x
            } else {
                s.vel.x.hypot(s.vel.y) * dt
            };
        }
        n += usize::from(inside_any);
    }
    EdieTruth {
        total_distance: dist,
        total_time: frames as f64 * dt,
        area: (x1 - x0) * (t_f - t_b) as f64 * dt,
        n_vehicles: n,
    }
}

fn ground_truth(spec: &SceneSpec, vehicles: &[VehicleSpec], plan: &EgoPlan) -> GroundTruth {
    let dt = SYNTH_TIMESTEP;
    let ego = &vehicles[0];
    let at = |k: i64| ego.state(k, dt);
    let mv = plan.merge_move;
    let half_width = ego.width / 2.0;
    let t_e = Some(mv.start_frame);
    let t_g = (plan.t_f..=ego.last_frame).find(|&k| at(k).pos.y >= half_width);
    let merging_distance = plan.t_d.map(|d| at(plan.t_f).pos.x - at(d).pos.x);
    let v_f = at(plan.t_f).vel;
    GroundTruth {
        recording_id: spec.recording_id,
        track_id: ego.id,
        location_id: SYNTH_LOCATION_ID,
        vehicle_class: ego.class,
        target: spec.target,
        crossed_solid: plan.t_d.is_none(),
        t_b: plan.t_b,
        t_d: plan.t_d,
        t_e,
        t_f: plan.t_f,
        t_g,
        t_h: plan.t_h,
        merging_speed: v_f.x.hypot(v_f.y),
        merging_distance,
        distance_ratio: merging_distance.map(|d| d / 200.0),
        duration: plan.t_d.map(|d| (plan.t_f - d) as f64 * dt),
        max_lat_speed: plan.t_d.map(|_| mv.peak_speed(dt)),
        max_lat_accel: plan.t_d.map(|_| mv.peak_accel(dt)),
        consecutive_lc_duration: plan.t_h.map(|h| (h - plan.t_f) as f64 * dt),
        thresholds: DEFAULT_THRESHOLDS
            .iter()
            .map(|&t| threshold_truth(vehicles, plan, t))
            .collect(),
        edie_upstream: edie_truth(vehicles, plan.t_b, plan.t_f, 0.0, 200.0),
        edie_downstream: edie_truth(vehicles, plan.t_b, plan.t_f, 200.0, RAMP_END),
    }
}

/// Samples scenes until one satisfies `spec` unambiguously.
pub fn generate_scene(spec: &SceneSpec, rng: &mut impl Rng) -> Result<Scene> {
    for _ in 0..MAX_ATTEMPTS {
        let Some(plan) = plan_ego(spec, rng) else { continue };
        let Some(vehicles) = author_vehicles(spec, &plan, rng) else { continue };
        if same_lane_conflict(&vehicles) || ambiguous(&vehicles, plan.t_b, plan.t_f) {
            continue;
        }
        let frames: Vec<OracleFrame> = (plan.t_b..=plan.t_f)
            .map(|k| oracle_frame(&vehicles, k, DEFAULT_THRESHOLDS[0]))
            .collect();
        if oracle_label(&frames) != spec.target {
            continue;
        }
        let truth = ground_truth(spec, &vehicles, &plan);
        return Ok(Scene { spec: spec.clone(), vehicles, truth });
    }
    Err(Error::Spec(format!(
        "no scene for target {} (solid {}, consecutive {}) after {MAX_ATTEMPTS} attempts",
        spec.target, spec.crossed_solid, spec.consecutive
    )))
}
