//! Wide per-location tables: one row per location and vehicle class, one column
//! per threshold and scenario.

use crate::error::{Error, Result};
use crate::events::SolidLineRow;
use crate::ingest::VehicleClass;
use crate::scenario::{ScenarioLabel, ScenarioRecord};

use super::records::IndicatorRow;
use super::stats_tables::{format_threshold, ALL};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Internal(format!("csv buffer: {e}")))
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.header.iter().position(|h| h == column)?;
        self.rows.get(row)?.get(c).map(String::as_str)
    }
}

/// Fields a wide table groups by.
pub trait Labeled {
    fn location_id(&self) -> i64;
    fn vehicle_class(&self) -> VehicleClass;
    fn threshold(&self) -> f64;
    fn label(&self) -> ScenarioLabel;
}

impl Labeled for ScenarioRecord {
    fn location_id(&self) -> i64 {
        self.location_id
    }
    fn vehicle_class(&self) -> VehicleClass {
        self.vehicle_class
    }
    fn threshold(&self) -> f64 {
        self.threshold
    }
    fn label(&self) -> ScenarioLabel {
        self.label
    }
}

impl Labeled for IndicatorRow {
    fn location_id(&self) -> i64 {
        self.location_id
    }
    fn vehicle_class(&self) -> VehicleClass {
        self.vehicle_class
    }
    fn threshold(&self) -> f64 {
        self.threshold
    }
    fn label(&self) -> ScenarioLabel {
        self.label
    }
}

const ROW_CLASSES: [Option<VehicleClass>; 5] = [
    None,
    Some(VehicleClass::Car),
    Some(VehicleClass::Truck),
    Some(VehicleClass::Van),
    Some(VehicleClass::Other),
];

fn wide_header(thresholds: &[f64]) -> Vec<String> {
    let mut h = vec!["location".to_string(), "vehicle_class".to_string()];
    for &t in thresholds {
        for l in ScenarioLabel::ALL {
            h.push(format!("{}_{}", format_threshold(t), l.as_str()));
        }
    }
    h
}

fn cells<T: Labeled>(
    rows: &[&T],
    thresholds: &[f64],
    cell: &impl Fn(&[&T]) -> Option<String>,
) -> Vec<String> {
    let mut out = Vec::new();
    for &t in thresholds {
        for l in ScenarioLabel::ALL {
            let group: Vec<&T> = rows.iter().copied().filter(|r| r.threshold() == t && r.label() == l).collect();
            out.push(cell(&group).unwrap_or_default());
        }
    }
    out
}

/// Per location: a `total` row and one row per class; then a pooled `all`/`total` row.
fn wide_table<T: Labeled>(
    rows: &[T],
    locations: &[i64],
    thresholds: &[f64],
    cell: impl Fn(&[&T]) -> Option<String>,
) -> Table {
    let mut out = Vec::new();
    for &loc in locations {
        for class in ROW_CLASSES {
            let sel: Vec<&T> = rows
                .iter()
                .filter(|r| r.location_id() == loc && class.is_none_or(|c| r.vehicle_class() == c))
                .collect();
            let mut line = vec![loc.to_string(), class.map_or("total", VehicleClass::as_str).to_string()];
            line.extend(cells(&sel, thresholds, &cell));
            out.push(line);
        }
    }
    let sel: Vec<&T> = rows.iter().filter(|r| locations.contains(&r.location_id())).collect();
    let mut line = vec![ALL.to_string(), "total".to_string()];
    line.extend(cells(&sel, thresholds, &cell));
    out.push(line);
    Table { header: wide_header(thresholds), rows: out }
}

fn mean_of(rows: &[&IndicatorRow], f: impl Fn(&IndicatorRow) -> Option<f64>) -> Option<String> {
    let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
    (!v.is_empty()).then(|| (v.iter().sum::<f64>() / v.len() as f64).to_string())
}

/// Solid-line merge counts per location and class, with a pooled row.
pub fn solid_line_table(rows: &[SolidLineRow]) -> Table {
    let header = ["location", "car", "truck", "van", "other", "total"].map(String::from).to_vec();
    let line = |loc: String, r: [usize; 4]| {
        let mut v = vec![loc];
        v.extend(r.iter().map(usize::to_string));
        v.push(r.iter().sum::<usize>().to_string());
        v
    };
    let mut total = [0usize; 4];
    let mut out = Vec::new();
    for r in rows {
        let c = [r.car, r.truck, r.van, r.other];
        for (t, x) in total.iter_mut().zip(c) {
            *t += x;
        }
        out.push(line(r.location_id.to_string(), c));
    }
    out.push(line(ALL.to_string(), total));
    Table { header, rows: out }
}

/// Scenario counts, followed by the pooled share of each scenario in percent.
pub fn counts_table(records: &[ScenarioRecord], locations: &[i64], thresholds: &[f64]) -> Table {
    let mut t = wide_table(records, locations, thresholds, |g| Some(g.len().to_string()));
    let pooled: Vec<&ScenarioRecord> = records.iter().filter(|r| locations.contains(&r.location_id)).collect();
    let mut line = vec![ALL.to_string(), "percent".to_string()];
    for &thr in thresholds {
        let n = pooled.iter().filter(|r| r.threshold == thr).count();
        for l in ScenarioLabel::ALL {
            let k = pooled.iter().filter(|r| r.threshold == thr && r.label == l).count();
            line.push(if n == 0 { String::new() } else { (100.0 * k as f64 / n as f64).to_string() });
        }
    }
    t.rows.push(line);
    t
}

/// Mean distance ratio.
pub fn distance_ratio_table(rows: &[IndicatorRow], locations: &[i64], thresholds: &[f64]) -> Table {
    wide_table(rows, locations, thresholds, |g| mean_of(g, |r| r.distance_ratio))
}

/// Mean merging duration, seconds.
pub fn duration_table(rows: &[IndicatorRow], locations: &[i64], thresholds: &[f64]) -> Table {
    wide_table(rows, locations, thresholds, |g| mean_of(g, |r| r.duration))
}

/// Fraction of events followed by a second lane change into the inner lane.
pub fn consecutive_share_table(rows: &[IndicatorRow], locations: &[i64], thresholds: &[f64]) -> Table {
    wide_table(rows, locations, thresholds, |g| {
        mean_of(g, |r| Some(if r.consecutive_lc { 1.0 } else { 0.0 }))
    })
}

/// Mean duration between the two lane changes, seconds.
pub fn consecutive_duration_table(rows: &[IndicatorRow], locations: &[i64], thresholds: &[f64]) -> Table {
    wide_table(rows, locations, thresholds, |g| mean_of(g, |r| r.consecutive_lc_duration))
}
