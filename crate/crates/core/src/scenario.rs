//! Lead/rear/alongside matching on the outer mainline lane and the eight-way
//! merging scenario classification.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::events::MergingEvent;
use crate::ingest::{Track, TrackFrame, VehicleClass};
use crate::map::MergingAreaLayout;

/// Default search ranges, meters.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [100.0, 150.0, 200.0];

/// Read-only per-recording lookup of tracks and their outer-mainline coordinates.
pub struct RecordingIndex<'a> {
    pub tracks: &'a [Track],
    pub layout: &'a MergingAreaLayout,
    by_id: HashMap<i64, usize>,
    by_frame: BTreeMap<i64, Vec<usize>>,
    /// Per track and frame: chain coordinate on the area 4+5 chain when the frame's
    /// lanelet belongs to area 4 or 5.
    mainline_s: Vec<Vec<Option<f64>>>,
}

impl<'a> RecordingIndex<'a> {
    pub fn new(tracks: &'a [Track], layout: &'a MergingAreaLayout) -> RecordingIndex<'a> {
        let chain = layout.mainline_chain();
        let mut by_frame: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        let mut mainline_s = Vec::with_capacity(tracks.len());
        for (i, t) in tracks.iter().enumerate() {
            for f in &t.frames {
                by_frame.entry(f.frame).or_default().push(i);
            }
            mainline_s.push(
                t.frames
                    .iter()
                    .map(|f| {
                        let on_main = f.lanelet_id.is_some_and(|id| layout.areas_of(id).is_mainline());
                        on_main.then(|| chain.coordinate_of(f.lanelet_id, f.center))
                    })
                    .collect(),
            );
        }
        RecordingIndex {
            tracks,
            layout,
            by_id: tracks.iter().enumerate().map(|(i, t)| (t.id(), i)).collect(),
            by_frame,
            mainline_s,
        }
    }

    pub fn track(&self, id: i64) -> Option<&'a Track> {
        self.by_id.get(&id).map(|&i| &self.tracks[i])
    }

    /// Indices of tracks present at `frame`.
    pub fn active(&self, frame: i64) -> &[usize] {
        self.by_frame.get(&frame).map_or(&[], Vec::as_slice)
    }

    /// Outer-mainline chain coordinate of track `idx` at `frame`, if it is on area 4/5.
    pub fn mainline_coordinate(&self, idx: usize, frame: i64) -> Option<f64> {
        let t = &self.tracks[idx];
        let i = frame - t.first_frame();
        if i < 0 {
            return None;
        }
        self.mainline_s[idx].get(i as usize).copied().flatten()
    }

    fn mainline_coordinate_by_id(&self, id: i64, frame: i64) -> Option<(usize, f64)> {
        let &idx = self.by_id.get(&id)?;
        self.mainline_coordinate(idx, frame).map(|s| (idx, s))
    }

    /// Longitudinal position of any frame projected onto the outer mainline chain.
    pub fn projected_coordinate(&self, frame: &TrackFrame) -> f64 {
        let chain = self.layout.mainline_chain();
        match frame.lanelet_id {
            Some(id) if chain.contains(id) => chain.coordinate_of(Some(id), frame.center),
            _ => chain.project(frame.center).s,
        }
    }
}

/// Where neighbor identities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSource {
    /// Dataset fields when the recording has them, geometry otherwise.
    Auto,
    Dataset,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSnapshot {
    pub frame: i64,
    pub lead_id: Option<i64>,
    pub rear_id: Option<i64>,
    pub alongside_ids: Vec<i64>,
    /// Bumper-to-bumper gaps, meters.
    pub lead_gap: Option<f64>,
    pub rear_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborTimeline {
    pub recording_id: i64,
    pub track_id: i64,
    pub distance_threshold: f64,
    /// One snapshot per frame of `[t_B, t_F]`.
    pub snapshots: Vec<NeighborSnapshot>,
}

impl NeighborTimeline {
    pub fn at(&self, frame: i64) -> Option<&NeighborSnapshot> {
        let first = self.snapshots.first()?.frame;
        let i = frame - first;
        if i < 0 {
            return None;
        }
        self.snapshots.get(i as usize)
    }
}

/// Relation of one candidate body to the ego body along the chain.
enum Relation {
    Ahead(f64),
    Behind(f64),
    Alongside,
}

fn relate(ego_s: f64, ego_len: f64, s: f64, len: f64) -> Relation {
    let (ego_lo, ego_hi) = (ego_s - ego_len / 2.0, ego_s + ego_len / 2.0);
    let (lo, hi) = (s - len / 2.0, s + len / 2.0);
    if lo < ego_hi && ego_lo < hi {
        Relation::Alongside
    } else if s > ego_s {
        Relation::Ahead(lo - ego_hi)
    } else {
        Relation::Behind(ego_lo - hi)
    }
}

fn better(cur: Option<(f64, i64)>, gap: f64, id: i64) -> bool {
    match cur {
        None => true,
        Some((g, i)) => gap < g || (gap == g && id < i),
    }
}

/// Builds the neighbor timeline of an event over `[t_B, t_F]`.
pub fn match_neighbors(
    event: &MergingEvent,
    index: &RecordingIndex,
    threshold: f64,
    source: NeighborSource,
) -> NeighborTimeline {
    let ego = index
        .track(event.track_id)
        .expect("event refers to a track of this recording");
    let use_dataset = match source {
        NeighborSource::Auto => ego.fields.neighbors,
        NeighborSource::Dataset => true,
        NeighborSource::Geometric => false,
    };
    let ego_idx = index.by_id[&ego.id()];
    let mut snapshots = Vec::with_capacity((event.t_f - event.t_b + 1) as usize);
    for frame in event.t_b..=event.t_f {
        let Some(ef) = ego.at(frame) else { continue };
        let ego_s = index.projected_coordinate(ef);
        let ego_len = ego.meta.length;
        let mut lead: Option<(f64, i64)> = None;
        let mut rear: Option<(f64, i64)> = None;
        let mut alongside = Vec::new();
        let mut consider = |idx: usize, s: f64| {
            let t = &index.tracks[idx];
            match relate(ego_s, ego_len, s, t.meta.length) {
                Relation::Alongside => alongside.push(t.id()),
                Relation::Ahead(gap) if gap <= threshold && better(lead, gap, t.id()) => {
                    lead = Some((gap, t.id()))
                }
                Relation::Behind(gap) if gap <= threshold && better(rear, gap, t.id()) => {
                    rear = Some((gap, t.id()))
                }
                _ => {}
            }
        };
        if use_dataset {
            let n = &ef.neighbors;
            let on_main = ef
                .lanelet_id
                .is_some_and(|id| index.layout.areas_of(id).is_mainline());
            let ids = if on_main {
                [n.lead, n.rear, None]
            } else {
                [n.left_lead, n.left_rear, n.left_alongside]
            };
            let mut seen = Vec::with_capacity(3);
            for id in ids.into_iter().flatten() {
                if id == ego.id() || seen.contains(&id) {
                    continue;
                }
                seen.push(id);
                if let Some((idx, s)) = index.mainline_coordinate_by_id(id, frame) {
                    consider(idx, s);
                }
            }
        } else {
            for &idx in index.active(frame) {
                if idx == ego_idx {
                    continue;
                }
                if let Some(s) = index.mainline_coordinate(idx, frame) {
                    consider(idx, s);
                }
            }
        }
        alongside.sort_unstable();
        snapshots.push(NeighborSnapshot {
            frame,
            lead_id: lead.map(|l| l.1),
            rear_id: rear.map(|r| r.1),
            alongside_ids: alongside,
            lead_gap: lead.map(|l| l.0),
            rear_gap: rear.map(|r| r.0),
        });
    }
    NeighborTimeline {
        recording_id: event.recording_id,
        track_id: event.track_id,
        distance_threshold: threshold,
        snapshots,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl ScenarioLabel {
    pub const ALL: [ScenarioLabel; 8] = [
        ScenarioLabel::A,
        ScenarioLabel::B,
        ScenarioLabel::C,
        ScenarioLabel::D,
        ScenarioLabel::E,
        ScenarioLabel::F,
        ScenarioLabel::G,
        ScenarioLabel::H,
    ];

    pub fn as_str(self) -> &'static str {
        ["A", "B", "C", "D", "E", "F", "G", "H"][self as usize]
    }

    pub fn parse(s: &str) -> Option<ScenarioLabel> {
        ScenarioLabel::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl std::fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub label: ScenarioLabel,
    pub lead_id: Option<i64>,
    pub rear_id: Option<i64>,
    pub rear_to_lead: bool,
    pub lead_to_rear: bool,
}

/// Classifies a timeline by the roles at its last frame and their earlier history.
pub fn classify_scenario(timeline: &NeighborTimeline) -> ScenarioOutcome {
    let (last, prior) = timeline
        .snapshots
        .split_last()
        .expect("timeline has at least the merge frame");
    let lead = last.lead_id;
    let rear = last.rear_id;
    let rear_to_lead = lead.is_some_and(|l| {
        prior
            .iter()
            .any(|s| s.rear_id == Some(l) || s.alongside_ids.contains(&l))
    });
    let lead_to_rear = rear.is_some_and(|r| {
        prior
            .iter()
            .any(|s| s.lead_id == Some(r) || s.alongside_ids.contains(&r))
    });
    use ScenarioLabel::*;
    let label = match (rear.is_some(), lead_to_rear, lead.is_some(), rear_to_lead) {
        (true, true, false, _) => G,
        (true, true, true, _) => H,
        (false, _, false, _) => A,
        (false, _, true, false) => B,
        (false, _, true, true) => C,
        (true, false, false, _) => D,
        (true, false, true, false) => E,
        (true, false, true, true) => F,
    };
    ScenarioOutcome {
        label,
        lead_id: lead,
        rear_id: rear,
        rear_to_lead,
        lead_to_rear,
    }
}

/// One classified (event, threshold) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub vehicle_class: VehicleClass,
    pub threshold: f64,
    pub label: ScenarioLabel,
    pub lead_id: Option<i64>,
    pub rear_id: Option<i64>,
    pub rear_to_lead: bool,
    pub lead_to_rear: bool,
}

/// Matches and classifies every event at every threshold, returning timelines and
/// records in (event order, threshold order).
pub fn classify_events(
    events: &[&MergingEvent],
    index: &RecordingIndex,
    thresholds: &[f64],
    source: NeighborSource,
) -> Vec<(NeighborTimeline, ScenarioRecord)> {
    events
        .par_iter()
        .flat_map_iter(|ev| {
            thresholds.iter().map(move |&thr| {
                let tl = match_neighbors(ev, index, thr, source);
                let out = classify_scenario(&tl);
                let rec = ScenarioRecord {
                    recording_id: ev.recording_id,
                    track_id: ev.track_id,
                    location_id: ev.location_id,
                    vehicle_class: ev.vehicle_class,
                    threshold: thr,
                    label: out.label,
                    lead_id: out.lead_id,
                    rear_id: out.rear_id,
                    rear_to_lead: out.rear_to_lead,
                    lead_to_rear: out.lead_to_rear,
                };
                (tl, rec)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCountRow {
    /// Location id, or `all`.
    pub location: String,
    /// Vehicle class, or `all`.
    pub vehicle_class: String,
    pub threshold: f64,
    pub scenario: ScenarioLabel,
    pub count: usize,
    /// Percentage of the group's events (same location, class and threshold).
    pub share: f64,
}

/// Long-format scenario counts per (location, class, threshold), including `all`
/// aggregates over locations and classes. Every group lists all eight labels.
pub fn scenario_count_table(records: &[ScenarioRecord], thresholds: &[f64]) -> Vec<ScenarioCountRow> {
    type Key = (String, String, u64);
    let mut groups: BTreeMap<Key, (f64, [usize; 8])> = BTreeMap::new();
    for &thr in thresholds {
        groups.insert(("all".into(), "all".into(), thr.to_bits()), (thr, [0; 8]));
    }
    for r in records {
        let locs = [r.location_id.to_string(), "all".to_string()];
        let classes = [r.vehicle_class.to_string(), "all".to_string()];
        for loc in &locs {
            for class in &classes {
                let entry = groups
                    .entry((loc.clone(), class.clone(), r.threshold.to_bits()))
                    .or_insert((r.threshold, [0; 8]));
                entry.1[r.label as usize] += 1;
            }
        }
    }
    let mut rows = Vec::with_capacity(groups.len() * 8);
    let mut keys: Vec<&Key> = groups.keys().collect();
    keys.sort_by(|a, b| {
        let (ta, tb) = (groups[*a].0, groups[*b].0);
        ta.total_cmp(&tb)
            .then_with(|| loc_order(&a.0).cmp(&loc_order(&b.0)))
            .then_with(|| a.1.cmp(&b.1))
    });
    for key in keys {
        let (thr, counts) = groups[key];
        let total: usize = counts.iter().sum();
        for label in ScenarioLabel::ALL {
            let count = counts[label as usize];
            rows.push(ScenarioCountRow {
                location: key.0.clone(),
                vehicle_class: key.1.clone(),
                threshold: thr,
                scenario: label,
                count,
                share: if total > 0 { 100.0 * count as f64 / total as f64 } else { 0.0 },
            });
        }
    }
    rows
}

/// Numeric locations first in numeric order, then `all`.
fn loc_order(s: &str) -> (bool, i64) {
    match s.parse::<i64>() {
        Ok(v) => (false, v),
        Err(_) => (true, 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(frame: i64, lead: Option<i64>, rear: Option<i64>, alongside: &[i64]) -> NeighborSnapshot {
        NeighborSnapshot {
            frame,
            lead_id: lead,
            rear_id: rear,
            alongside_ids: alongside.to_vec(),
            lead_gap: lead.map(|_| 10.0),
            rear_gap: rear.map(|_| 10.0),
        }
    }

    fn timeline(snaps: Vec<NeighborSnapshot>) -> NeighborTimeline {
        NeighborTimeline { recording_id: 1, track_id: 1, distance_threshold: 100.0, snapshots: snaps }
    }

    #[test]
    fn label_table() {
        use ScenarioLabel::*;
        let cases = [
            (vec![snap(0, None, None, &[]), snap(1, None, None, &[])], A),
            (vec![snap(0, Some(5), None, &[]), snap(1, Some(5), None, &[])], B),
            (vec![snap(0, None, Some(5), &[]), snap(1, Some(5), None, &[])], C),
            (vec![snap(0, None, None, &[5]), snap(1, Some(5), None, &[])], C),
            (vec![snap(0, None, Some(6), &[]), snap(1, None, Some(6), &[])], D),
            (vec![snap(0, Some(5), Some(6), &[]), snap(1, Some(5), Some(6), &[])], E),
            (vec![snap(0, None, Some(5), &[]), snap(1, Some(5), Some(6), &[])], F),
            (vec![snap(0, Some(6), None, &[]), snap(1, None, Some(6), &[])], G),
            (vec![snap(0, Some(6), None, &[]), snap(1, Some(5), Some(6), &[])], H),
        ];
        for (snaps, want) in cases {
            assert_eq!(classify_scenario(&timeline(snaps)).label, want);
        }
    }

    #[test]
    fn relation_arithmetic() {
        // Ego at 100, others at 130 and 40, all 4 m long.
        assert!(matches!(relate(100.0, 4.0, 130.0, 4.0), Relation::Ahead(g) if (g - 26.0).abs() < 1e-12));
        assert!(matches!(relate(100.0, 4.0, 40.0, 4.0), Relation::Behind(g) if (g - 56.0).abs() < 1e-12));
        // Body 98-103 against ego 98-102.
        assert!(matches!(relate(100.0, 4.0, 100.5, 5.0), Relation::Alongside));
    }

    #[test]
    fn count_table_shares() {
        let rec = |label| ScenarioRecord {
            recording_id: 1,
            track_id: 1,
            location_id: 2,
            vehicle_class: VehicleClass::Car,
            threshold: 100.0,
            label,
            lead_id: None,
            rear_id: None,
            rear_to_lead: false,
            lead_to_rear: false,
        };
        let records: Vec<_> = (0..10).map(|_| rec(ScenarioLabel::B)).collect();
        let rows = scenario_count_table(&records, &[100.0]);
        let b = rows
            .iter()
            .find(|r| r.location == "all" && r.vehicle_class == "all" && r.scenario == ScenarioLabel::B)
            .unwrap();
        assert_eq!((b.count, b.share), (10, 100.0));
        let empty = scenario_count_table(&[], &DEFAULT_THRESHOLDS);
        assert_eq!(empty.len(), 24);
        assert!(empty.iter().all(|r| r.count == 0));
    }
}
