//! Plot-ready CSV bundles under `figures/`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::MergingEvent;
use crate::indicators::merge_positions;
use crate::ingest::VehicleClass;
use crate::map::{LaneletMap, MergingAreaLayout};
use crate::scenario::{RecordingIndex, ScenarioLabel};

use super::records::{to_csv, CsvRow, IndicatorRow, SummaryRow};
use super::stats_tables::{format_threshold, ALL};
use super::{Analysis, RunConfig, StatsOutputs};

pub const FIGURE_FILES: [&str; 8] = [
    "merge_points.csv",
    "lanelets.csv",
    "boxplots.csv",
    "headways.csv",
    "ttc.csv",
    "js_heatmap.csv",
    "macro_scatter.csv",
    "consecutive_lc.csv",
];

const BOXPLOT_INDICATORS: [&str; 6] =
    ["merging_speed", "merging_distance", "distance_ratio", "duration", "max_lat_speed", "max_lat_accel"];
const HEADWAY_INDICATORS: [&str; 4] = ["lead_dhw", "lead_thw", "rear_dhw", "rear_thw"];
const TTC_INDICATORS: [&str; 2] = ["min_ttc_lead", "min_ttc_rear"];

/// Ego position at D and F of one event; every event appears once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePointRow {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub vehicle_class: VehicleClass,
    pub crossed_solid: bool,
    pub x_d: Option<f64>,
    pub y_d: Option<f64>,
    pub x_f: f64,
    pub y_f: f64,
    /// Acceleration-lane coordinates at D and F.
    pub s_d: Option<f64>,
    pub s_f: Option<f64>,
    pub distance_ratio: Option<f64>,
}

impl MergePointRow {
    pub fn new(e: &MergingEvent, index: &RecordingIndex) -> MergePointRow {
        let track = index.track(e.track_id);
        let at = |frame: Option<i64>| frame.and_then(|f| track?.at(f)).map(|f| f.center);
        let d = at(e.t_d);
        let f = at(Some(e.t_f));
        let s = track.and_then(|t| merge_positions(e, t, index.layout));
        MergePointRow {
            recording_id: e.recording_id,
            track_id: e.track_id,
            location_id: e.location_id,
            vehicle_class: e.vehicle_class,
            crossed_solid: e.crossed_solid,
            x_d: d.map(|p| p.x),
            y_d: d.map(|p| p.y),
            x_f: f.map_or(f64::NAN, |p| p.x),
            y_f: f.map_or(f64::NAN, |p| p.y),
            s_d: s.map(|s| s.0),
            s_f: s.map(|s| s.1),
            distance_ratio: s.map(|(d, f)| (f - d) / index.layout.merge_window_length),
        }
    }
}

/// One boundary vertex of a layout lanelet; area 0 marks inner mainline lanes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneletRow {
    pub location_id: i64,
    pub lanelet_id: i64,
    pub area: u8,
    pub boundary: String,
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
}

pub fn lanelet_rows(map: &LaneletMap, layout: &MergingAreaLayout) -> Vec<LaneletRow> {
    let mut ids: Vec<(u8, i64)> = layout
        .area_lanelets
        .iter()
        .flat_map(|(&a, ids)| ids.iter().map(move |&id| (a, id)))
        .collect();
    ids.extend(layout.inner_lanelets.iter().map(|&id| (0, id)));
    let mut rows = Vec::new();
    for (area, id) in ids {
        let Some(ll) = map.lanelet(id) else { continue };
        for (boundary, pts) in [("left", &ll.left), ("right", &ll.right)] {
            for (vertex, p) in pts.iter().enumerate() {
                rows.push(LaneletRow {
                    location_id: layout.location_id,
                    lanelet_id: id,
                    area,
                    boundary: boundary.to_string(),
                    vertex,
                    x: p.x,
                    y: p.y,
                });
            }
        }
    }
    rows
}

/// Macro estimate of one event region next to its scenario label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScatterRow {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub vehicle_class: VehicleClass,
    pub threshold: f64,
    pub label: ScenarioLabel,
    pub region: String,
    pub q_veh_per_h: f64,
    pub k_veh_per_km: f64,
    pub v_km_per_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsecutiveRow {
    pub location: String,
    pub vehicle_class: String,
    pub threshold: String,
    pub scenario: String,
    pub n_events: usize,
    pub n_consecutive: usize,
    pub share: f64,
    pub mean_duration: Option<f64>,
}

impl CsvRow for MergePointRow {
    const HEADER: &'static [&'static str] = &[
        "recording_id",
        "track_id",
        "location_id",
        "vehicle_class",
        "crossed_solid",
        "x_d",
        "y_d",
        "x_f",
        "y_f",
        "s_d",
        "s_f",
        "distance_ratio",
    ];
}

impl CsvRow for LaneletRow {
    const HEADER: &'static [&'static str] = &["location_id", "lanelet_id", "area", "boundary", "vertex", "x", "y"];
}

impl CsvRow for MacroScatterRow {
    const HEADER: &'static [&'static str] = &[
        "recording_id",
        "track_id",
        "location_id",
        "vehicle_class",
        "threshold",
        "label",
        "region",
        "q_veh_per_h",
        "k_veh_per_km",
        "v_km_per_h",
    ];
}

impl CsvRow for ConsecutiveRow {
    const HEADER: &'static [&'static str] = &[
        "location",
        "vehicle_class",
        "threshold",
        "scenario",
        "n_events",
        "n_consecutive",
        "share",
        "mean_duration",
    ];
}

/// Location, class and scenario keys a row counts toward, own and pooled.
fn pooled_keys(r: &IndicatorRow) -> Vec<(String, String, String)> {
    let mut out = Vec::with_capacity(8);
    for l in [r.location_id.to_string(), ALL.to_string()] {
        for c in [r.vehicle_class.as_str(), ALL] {
            for s in [r.label.as_str(), ALL] {
                out.push((l.clone(), c.to_string(), s.to_string()));
            }
        }
    }
    out
}

type GroupId = (String, String, String, String, String);

fn summary_id(r: &SummaryRow) -> GroupId {
    (r.indicator.clone(), r.location.clone(), r.vehicle_class.clone(), r.threshold.clone(), r.scenario.clone())
}

/// Summary columns per TTC group plus the number of infinite samples. Groups whose
/// samples are all infinite get blank statistics.
fn ttc_bundle(summary: &[SummaryRow], indicators: &[IndicatorRow]) -> Result<Vec<u8>> {
    let mut infinite: BTreeMap<GroupId, usize> = BTreeMap::new();
    for r in indicators {
        for name in TTC_INDICATORS {
            let raw = if name == "min_ttc_lead" { r.min_ttc_lead } else { r.min_ttc_rear };
            for (l, c, s) in pooled_keys(r) {
                let n = infinite
                    .entry((name.to_string(), l, c, format_threshold(r.threshold), s))
                    .or_default();
                *n += usize::from(raw.is_infinite());
            }
        }
    }
    let by_id: HashMap<GroupId, &SummaryRow> = summary
        .iter()
        .filter(|r| TTC_INDICATORS.contains(&r.indicator.as_str()))
        .map(|r| (summary_id(r), r))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = SummaryRow::HEADER.to_vec();
    header.push("n_infinite");
    w.write_record(&header)?;
    for (id, n_inf) in &infinite {
        let mut rec: Vec<String> = match by_id.get(id) {
            Some(s) => {
                let mut one = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                one.serialize(s)?;
                let bytes = one.into_inner().map_err(|e| Error::Internal(format!("csv buffer: {e}")))?;
                let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes.as_slice());
                let fields = rd.records().next().transpose()?.unwrap_or_default();
                fields.iter().map(String::from).collect()
            }
            None => {
                let mut v = vec![id.0.clone(), id.1.clone(), id.2.clone(), id.3.clone(), id.4.clone(), "0".into()];
                v.resize(SummaryRow::HEADER.len(), String::new());
                v
            }
        };
        rec.push(n_inf.to_string());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Internal(format!("csv buffer: {e}")))
}

/// Events, events with a second lane change, and their durations.
type ConsecutiveTally = (usize, usize, Vec<f64>);

fn consecutive_rows(indicators: &[IndicatorRow]) -> Vec<ConsecutiveRow> {
    let mut groups: BTreeMap<(String, String, String, String), ConsecutiveTally> = BTreeMap::new();
    for r in indicators {
        for (l, c, s) in pooled_keys(r) {
            let g = groups.entry((l, c, format_threshold(r.threshold), s)).or_default();
            g.0 += 1;
            g.1 += usize::from(r.consecutive_lc);
            g.2.extend(r.consecutive_lc_duration);
        }
    }
    groups
        .into_iter()
        .map(|((location, vehicle_class, threshold, scenario), (n, k, d))| ConsecutiveRow {
            location,
            vehicle_class,
            threshold,
            scenario,
            n_events: n,
            n_consecutive: k,
            share: k as f64 / n as f64,
            mean_duration: (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64),
        })
        .collect()
}

fn subset(summary: &[SummaryRow], names: &[&str]) -> Vec<SummaryRow> {
    summary.iter().filter(|r| names.contains(&r.indicator.as_str())).cloned().collect()
}

/// All figure bundles, keyed by file name.
pub fn figure_bundles(analysis: &Analysis, stats: &StatsOutputs, _config: &RunConfig) -> Result<Vec<(String, Vec<u8>)>> {
    let labels: HashMap<(i64, i64), Vec<(f64, ScenarioLabel)>> =
        analysis.scenarios.iter().fold(HashMap::new(), |mut m, r| {
            m.entry((r.recording_id, r.track_id)).or_default().push((r.threshold, r.label));
            m
        });
    let scatter: Vec<MacroScatterRow> = analysis
        .macro_rows
        .iter()
        .flat_map(|m| {
            labels
                .get(&(m.recording_id, m.track_id))
                .into_iter()
                .flatten()
                .map(move |&(threshold, label)| MacroScatterRow {
                    recording_id: m.recording_id,
                    track_id: m.track_id,
                    location_id: m.location_id,
                    vehicle_class: m.vehicle_class,
                    threshold,
                    label,
                    region: m.region.clone(),
                    q_veh_per_h: m.q_veh_per_h,
                    k_veh_per_km: m.k_veh_per_km,
                    v_km_per_h: m.v_km_per_h,
                })
        })
        .collect();
    Ok(vec![
        ("merge_points.csv".into(), to_csv(&analysis.merge_points)?),
        ("lanelets.csv".into(), to_csv(&analysis.lanelets)?),
        ("boxplots.csv".into(), to_csv(&subset(&stats.summary, &BOXPLOT_INDICATORS))?),
        ("headways.csv".into(), to_csv(&subset(&stats.summary, &HEADWAY_INDICATORS))?),
        ("ttc.csv".into(), ttc_bundle(&stats.summary, &analysis.indicators)?),
        ("js_heatmap.csv".into(), to_csv(&stats.divergence)?),
        ("macro_scatter.csv".into(), to_csv(&scatter)?),
        ("consecutive_lc.csv".into(), to_csv(&consecutive_rows(&analysis.indicators))?),
    ])
}
