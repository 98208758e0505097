//! Row types of the CSV outputs and their readers and writers.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{MergingEvent, Rejection};
use crate::indicators::IndicatorSet;
use crate::ingest::VehicleClass;
use crate::macroscopic::EdieEstimate;
use crate::scenario::{ScenarioLabel, ScenarioRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
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
    /// Extraction warnings joined by `|`.
    pub warnings: String,
}

impl From<&MergingEvent> for EventRow {
    fn from(e: &MergingEvent) -> Self {
        EventRow {
            recording_id: e.recording_id,
            track_id: e.track_id,
            location_id: e.location_id,
            vehicle_class: e.vehicle_class,
            t_b: e.t_b,
            t_d: e.t_d,
            t_e: e.t_e,
            t_f: e.t_f,
            t_g: e.t_g,
            t_h: e.t_h,
            crossed_solid: e.crossed_solid,
            warnings: e.warnings.join("|"),
        }
    }
}

impl From<&EventRow> for MergingEvent {
    fn from(r: &EventRow) -> Self {
        MergingEvent {
            recording_id: r.recording_id,
            track_id: r.track_id,
            location_id: r.location_id,
            vehicle_class: r.vehicle_class,
            t_b: r.t_b,
            t_d: r.t_d,
            t_e: r.t_e,
            t_f: r.t_f,
            t_g: r.t_g,
            t_h: r.t_h,
            crossed_solid: r.crossed_solid,
            warnings: r.warnings.split('|').filter(|s| !s.is_empty()).map(String::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub route: String,
    pub reason: String,
    pub detail: String,
}

impl From<&Rejection> for RejectionRow {
    fn from(r: &Rejection) -> Self {
        RejectionRow {
            recording_id: r.recording_id,
            track_id: r.track_id,
            location_id: r.location_id,
            route: r.route.as_str().to_string(),
            reason: format!("{:?}", r.reason),
            detail: r.detail.clone(),
        }
    }
}

/// Route counts per recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRow {
    pub recording_id: i64,
    pub location_id: i64,
    pub route: String,
    pub count: usize,
}

pub type ScenarioRow = ScenarioRecord;

/// One (event, threshold) pair: scenario label joined with the indicator set.
/// Infinite TTC is written as `inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub vehicle_class: VehicleClass,
    pub threshold: f64,
    pub label: ScenarioLabel,
    pub merging_speed: f64,
    pub merging_distance: Option<f64>,
    pub distance_ratio: Option<f64>,
    pub duration: Option<f64>,
    pub max_lat_speed: Option<f64>,
    pub max_lat_accel: Option<f64>,
    pub fit_rms: Option<f64>,
    pub min_ttc_lead: f64,
    pub min_ttc_rear: f64,
    pub lead_dhw: Option<f64>,
    pub lead_thw: Option<f64>,
    pub rear_dhw: Option<f64>,
    pub rear_thw: Option<f64>,
    pub consecutive_lc: bool,
    pub consecutive_lc_duration: Option<f64>,
}

impl IndicatorRow {
    pub fn new(rec: &ScenarioRecord, ind: &IndicatorSet) -> IndicatorRow {
        IndicatorRow {
            recording_id: rec.recording_id,
            track_id: rec.track_id,
            location_id: rec.location_id,
            vehicle_class: rec.vehicle_class,
            threshold: rec.threshold,
            label: rec.label,
            merging_speed: ind.merging_speed,
            merging_distance: ind.merging_distance,
            distance_ratio: ind.distance_ratio,
            duration: ind.duration,
            max_lat_speed: ind.max_lat_speed,
            max_lat_accel: ind.max_lat_accel,
            fit_rms: ind.fit_rms,
            min_ttc_lead: ind.min_ttc_lead,
            min_ttc_rear: ind.min_ttc_rear,
            lead_dhw: ind.lead_dhw,
            lead_thw: ind.lead_thw,
            rear_dhw: ind.rear_dhw,
            rear_thw: ind.rear_thw,
            consecutive_lc: ind.consecutive_lc_duration.is_some(),
            consecutive_lc_duration: ind.consecutive_lc_duration,
        }
    }

    /// Value of a named indicator; infinite TTC counts as missing.
    pub fn value(&self, indicator: &str) -> Option<f64> {
        let finite = |v: f64| v.is_finite().then_some(v);
        match indicator {
            "merging_speed" => Some(self.merging_speed),
            "merging_distance" => self.merging_distance,
            "distance_ratio" => self.distance_ratio,
            "duration" => self.duration,
            "max_lat_speed" => self.max_lat_speed,
            "max_lat_accel" => self.max_lat_accel,
            "min_ttc_lead" => finite(self.min_ttc_lead),
            "min_ttc_rear" => finite(self.min_ttc_rear),
            "lead_dhw" => self.lead_dhw,
            "lead_thw" => self.lead_thw.and_then(finite),
            "rear_dhw" => self.rear_dhw,
            "rear_thw" => self.rear_thw.and_then(finite),
            "consecutive_lc_duration" => self.consecutive_lc_duration,
            _ => None,
        }
    }
}

/// Indicators summarized per group, in output order.
pub const SUMMARY_INDICATORS: [&str; 13] = [
    "merging_speed",
    "merging_distance",
    "distance_ratio",
    "duration",
    "max_lat_speed",
    "max_lat_accel",
    "lead_dhw",
    "lead_thw",
    "rear_dhw",
    "rear_thw",
    "min_ttc_lead",
    "min_ttc_rear",
    "consecutive_lc_duration",
];

/// Indicators compared by JS divergence.
pub const DIVERGENCE_INDICATORS: [&str; 5] =
    ["merging_speed", "distance_ratio", "duration", "max_lat_speed", "max_lat_accel"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroRow {
    pub recording_id: i64,
    pub track_id: i64,
    pub location_id: i64,
    pub vehicle_class: VehicleClass,
    /// `upstream` (area 4) or `downstream` (area 5).
    pub region: String,
    pub t0: i64,
    pub t1: i64,
    pub length: f64,
    pub total_distance: f64,
    pub total_time: f64,
    pub area: f64,
    pub q: f64,
    pub k: f64,
    pub v: Option<f64>,
    pub q_veh_per_h: f64,
    pub k_veh_per_km: f64,
    pub v_km_per_h: Option<f64>,
    pub n_vehicles: usize,
}

impl MacroRow {
    pub fn new(event: &MergingEvent, region: &str, length: f64, est: &EdieEstimate) -> MacroRow {
        MacroRow {
            recording_id: event.recording_id,
            track_id: event.track_id,
            location_id: event.location_id,
            vehicle_class: event.vehicle_class,
            region: region.to_string(),
            t0: event.t_b,
            t1: event.t_f,
            length,
            total_distance: est.total_distance,
            total_time: est.total_time,
            area: est.area,
            q: est.q,
            k: est.k,
            v: est.v,
            q_veh_per_h: est.q_veh_per_h(),
            k_veh_per_km: est.k_veh_per_km(),
            v_km_per_h: est.v_km_per_h(),
            n_vehicles: est.n_vehicles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub indicator: String,
    pub location: String,
    pub vehicle_class: String,
    pub threshold: String,
    pub scenario: String,
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub iqr: f64,
    pub fence_multiplier: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_outliers: usize,
    /// Outlier values joined by `;`, ascending.
    pub outliers: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub indicator: String,
    pub location: String,
    pub vehicle_class: String,
    pub threshold: String,
    pub scenario_i: ScenarioLabel,
    pub scenario_j: ScenarioLabel,
    pub js: Option<f64>,
    pub n_i: usize,
    pub n_j: usize,
    pub masked: bool,
}

/// A CSV row type with a fixed column list.
pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

macro_rules! csv_row {
    ($t:ty, [$($col:literal),* $(,)?]) => {
        impl CsvRow for $t {
            const HEADER: &'static [&'static str] = &[$($col),*];
        }
    };
}

csv_row!(EventRow, [
    "recording_id", "track_id", "location_id", "vehicle_class", "t_b", "t_d", "t_e", "t_f", "t_g", "t_h",
    "crossed_solid", "warnings",
]);
csv_row!(RejectionRow, ["recording_id", "track_id", "location_id", "route", "reason", "detail"]);
csv_row!(RouteRow, ["recording_id", "location_id", "route", "count"]);
csv_row!(ScenarioRecord, [
    "recording_id", "track_id", "location_id", "vehicle_class", "threshold", "label", "lead_id", "rear_id",
    "rear_to_lead", "lead_to_rear",
]);
csv_row!(IndicatorRow, [
    "recording_id", "track_id", "location_id", "vehicle_class", "threshold", "label", "merging_speed",
    "merging_distance", "distance_ratio", "duration", "max_lat_speed", "max_lat_accel", "fit_rms", "min_ttc_lead",
    "min_ttc_rear", "lead_dhw", "lead_thw", "rear_dhw", "rear_thw", "consecutive_lc", "consecutive_lc_duration",
]);
csv_row!(MacroRow, [
    "recording_id", "track_id", "location_id", "vehicle_class", "region", "t0", "t1", "length", "total_distance",
    "total_time", "area", "q", "k", "v", "q_veh_per_h", "k_veh_per_km", "v_km_per_h", "n_vehicles",
]);
csv_row!(SummaryRow, [
    "indicator", "location", "vehicle_class", "threshold", "scenario", "n", "q1", "median", "q3", "mean", "iqr",
    "fence_multiplier", "lower_fence", "upper_fence", "whisker_low", "whisker_high", "n_outliers", "outliers",
]);
csv_row!(DivergenceRow, [
    "indicator", "location", "vehicle_class", "threshold", "scenario_i", "scenario_j", "js", "n_i", "n_j", "masked",
]);

/// Serializes rows to CSV bytes with a header, also when there are no rows.
pub fn to_csv<T: CsvRow>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Internal(format!("csv buffer: {e}")))
}

/// Reads rows from a CSV file written by [`to_csv`].
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Schema {
                file: path.display().to_string(),
                column: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn serialized_header<T: Serialize>(row: &T) -> Vec<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().split(',').map(String::from).collect()
    }

    #[test]
    fn headers_match_field_order() {
        let rec = ScenarioRecord {
            recording_id: 1,
            track_id: 2,
            location_id: 3,
            vehicle_class: VehicleClass::Car,
            threshold: 100.0,
            label: ScenarioLabel::A,
            lead_id: None,
            rear_id: None,
            rear_to_lead: false,
            lead_to_rear: false,
        };
        assert_eq!(serialized_header(&rec), ScenarioRecord::HEADER);
        let est = EdieEstimate::from_totals(1.0, 1.0, 1.0, 1);
        let ev = MergingEvent::from(&EventRow {
            recording_id: 1,
            track_id: 2,
            location_id: 3,
            vehicle_class: VehicleClass::Car,
            t_b: 0,
            t_d: None,
            t_e: None,
            t_f: 1,
            t_g: None,
            t_h: None,
            crossed_solid: true,
            warnings: String::new(),
        });
        assert_eq!(serialized_header(&EventRow::from(&ev)), EventRow::HEADER);
        assert_eq!(serialized_header(&MacroRow::new(&ev, "upstream", 1.0, &est)), MacroRow::HEADER);
        let rej = RejectionRow {
            recording_id: 1,
            track_id: 1,
            location_id: 1,
            route: "x".into(),
            reason: "y".into(),
            detail: "z".into(),
        };
        assert_eq!(serialized_header(&rej), RejectionRow::HEADER);
        let route = RouteRow { recording_id: 1, location_id: 1, route: "x".into(), count: 1 };
        assert_eq!(serialized_header(&route), RouteRow::HEADER);
        let sum = SummaryRow {
            indicator: "a".into(),
            location: "b".into(),
            vehicle_class: "c".into(),
            threshold: "d".into(),
            scenario: "e".into(),
            n: 1,
            q1: 0.0,
            median: 0.0,
            q3: 0.0,
            mean: 0.0,
            iqr: 0.0,
            fence_multiplier: 3.0,
            lower_fence: 0.0,
            upper_fence: 0.0,
            whisker_low: 0.0,
            whisker_high: 0.0,
            n_outliers: 0,
            outliers: String::new(),
        };
        assert_eq!(serialized_header(&sum), SummaryRow::HEADER);
        let div = DivergenceRow {
            indicator: "a".into(),
            location: "b".into(),
            vehicle_class: "c".into(),
            threshold: "d".into(),
            scenario_i: ScenarioLabel::A,
            scenario_j: ScenarioLabel::B,
            js: None,
            n_i: 0,
            n_j: 0,
            masked: true,
        };
        assert_eq!(serialized_header(&div), DivergenceRow::HEADER);
    }

    #[test]
    fn empty_output_keeps_header() {
        let bytes = to_csv::<RouteRow>(&[]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "recording_id,location_id,route,count\n");
    }

    #[test]
    fn event_rows_round_trip() {
        let e = MergingEvent {
            recording_id: 3,
            track_id: 17,
            location_id: 2,
            vehicle_class: VehicleClass::Van,
            t_b: 10,
            t_d: None,
            t_e: Some(12),
            t_f: 40,
            t_g: Some(44),
            t_h: None,
            crossed_solid: true,
            warnings: vec!["a".into(), "b, c".into()],
        };
        let bytes = to_csv(&[EventRow::from(&e)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.csv");
        std::fs::write(&p, bytes).unwrap();
        let back: Vec<EventRow> = read_csv(&p).unwrap();
        assert_eq!(MergingEvent::from(&back[0]), e);
    }

    #[test]
    fn infinite_ttc_round_trips() {
        let row = IndicatorRow {
            recording_id: 1,
            track_id: 1,
            location_id: 2,
            vehicle_class: VehicleClass::Car,
            threshold: 100.0,
            label: ScenarioLabel::C,
            merging_speed: 20.5,
            merging_distance: None,
            distance_ratio: None,
            duration: None,
            max_lat_speed: None,
            max_lat_accel: None,
            fit_rms: None,
            min_ttc_lead: f64::INFINITY,
            min_ttc_rear: 3.25,
            lead_dhw: Some(12.0),
            lead_thw: Some(0.6),
            rear_dhw: None,
            rear_thw: None,
            consecutive_lc: false,
            consecutive_lc_duration: None,
        };
        let bytes = to_csv(std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains(",inf,3.25,"), "{text}");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.csv");
        std::fs::write(&p, bytes).unwrap();
        let back: Vec<IndicatorRow> = read_csv(&p).unwrap();
        assert_eq!(back[0], row);
        assert_eq!(back[0].value("min_ttc_lead"), None);
    }
}
