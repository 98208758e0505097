//! Grouped boxplot summaries and divergence matrices from indicator rows.

use std::collections::{BTreeMap, HashMap};

use crate::error::Result;
use crate::ingest::VehicleClass;
use crate::scenario::ScenarioLabel;
use crate::stats::{divergence_matrices, label_at, summarize, GroupKey};

use super::records::{DivergenceRow, IndicatorRow, MacroRow, SummaryRow, DIVERGENCE_INDICATORS, SUMMARY_INDICATORS};

pub const ALL: &str = "all";
const CLASSES: [VehicleClass; 4] = [VehicleClass::Car, VehicleClass::Truck, VehicleClass::Van, VehicleClass::Other];
/// Macro quantities summarized per region, appended after the microscopic indicators.
const MACRO_QUANTITIES: [&str; 3] = ["q_veh_per_h", "k_veh_per_km", "v_km_per_h"];
const MACRO_REGIONS: [&str; 2] = ["upstream", "downstream"];

pub fn format_threshold(t: f64) -> String {
    format!("{t}")
}

fn class_index(c: VehicleClass) -> usize {
    CLASSES.iter().position(|&k| k == c).unwrap()
}

fn label_index(l: ScenarioLabel) -> usize {
    ScenarioLabel::ALL.iter().position(|&k| k == l).unwrap()
}

fn threshold_index(thresholds: &[f64], t: f64) -> Option<usize> {
    thresholds.iter().position(|&k| k == t)
}

/// Group key by order indices; `n` of a dimension stands for "all".
type Slot = (usize, usize, usize, usize, usize);

struct Buckets<'a> {
    locations: &'a [i64],
    samples: BTreeMap<Slot, Vec<f64>>,
}

impl Buckets<'_> {
    /// Adds `value` to every group it belongs to: own and pooled location, class and scenario.
    fn add(&mut self, ind: usize, loc: i64, class: VehicleClass, thr: usize, label: ScenarioLabel, value: f64) {
        let nl = self.locations.len();
        let locs = [self.locations.iter().position(|&l| l == loc), Some(nl)];
        for l in locs.into_iter().flatten() {
            for c in [class_index(class), CLASSES.len()] {
                for s in [label_index(label), ScenarioLabel::ALL.len()] {
                    self.samples.entry((ind, l, c, thr, s)).or_default().push(value);
                }
            }
        }
    }
}

fn indicator_names() -> Vec<String> {
    let mut names: Vec<String> = SUMMARY_INDICATORS.iter().map(|s| s.to_string()).collect();
    for r in MACRO_REGIONS {
        for q in MACRO_QUANTITIES {
            names.push(format!("{r}_{q}"));
        }
    }
    names
}

fn macro_value(row: &MacroRow, quantity: &str) -> Option<f64> {
    match quantity {
        "q_veh_per_h" => Some(row.q_veh_per_h),
        "k_veh_per_km" => Some(row.k_veh_per_km),
        "v_km_per_h" => row.v_km_per_h,
        _ => None,
    }
}

/// Boxplot summary of every non-empty group: indicator × location (and all) ×
/// class (and all) × threshold × scenario (and all). Macro rows take the labels of
/// their event at each threshold.
pub fn summary_rows(
    indicators: &[IndicatorRow],
    macro_rows: &[MacroRow],
    locations: &[i64],
    thresholds: &[f64],
    fence_multiplier: f64,
) -> Result<Vec<SummaryRow>> {
    let names = indicator_names();
    let mut b = Buckets { locations, samples: BTreeMap::new() };
    let mut labels: HashMap<(i64, i64), Vec<(usize, ScenarioLabel)>> = HashMap::new();
    for r in indicators {
        let Some(thr) = threshold_index(thresholds, r.threshold) else { continue };
        labels.entry((r.recording_id, r.track_id)).or_default().push((thr, r.label));
        for (i, name) in SUMMARY_INDICATORS.iter().enumerate() {
            if let Some(v) = r.value(name) {
                b.add(i, r.location_id, r.vehicle_class, thr, r.label, v);
            }
        }
    }
    for m in macro_rows {
        let Some(region) = MACRO_REGIONS.iter().position(|&r| r == m.region) else { continue };
        let Some(event_labels) = labels.get(&(m.recording_id, m.track_id)) else { continue };
        for (q, quantity) in MACRO_QUANTITIES.iter().enumerate() {
            let Some(v) = macro_value(m, quantity) else { continue };
            let ind = SUMMARY_INDICATORS.len() + region * MACRO_QUANTITIES.len() + q;
            for &(thr, label) in event_labels {
                b.add(ind, m.location_id, m.vehicle_class, thr, label, v);
            }
        }
    }
    b.samples
        .iter()
        .map(|(&(ind, loc, class, thr, scen), samples)| {
            let s = summarize(samples, fence_multiplier)?;
            Ok(SummaryRow {
                indicator: names[ind].clone(),
                location: locations.get(loc).map_or(ALL.to_string(), |l| l.to_string()),
                vehicle_class: CLASSES.get(class).map_or(ALL, |c| c.as_str()).to_string(),
                threshold: format_threshold(thresholds[thr]),
                scenario: ScenarioLabel::ALL.get(scen).map_or(ALL, |l| l.as_str()).to_string(),
                n: s.n,
                q1: s.q1,
                median: s.median,
                q3: s.q3,
                mean: s.mean,
                iqr: s.iqr,
                fence_multiplier: s.fence_multiplier,
                lower_fence: s.lower_fence,
                upper_fence: s.upper_fence,
                whisker_low: s.whisker_low,
                whisker_high: s.whisker_high,
                n_outliers: s.outliers.len(),
                outliers: s.outliers.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
            })
        })
        .collect()
}

/// Pairwise JS divergence between scenario populations for each indicator ×
/// location (and all) × class × threshold group; 64 rows per group. A class of
/// `all` pools every class.
pub fn divergence_rows(
    indicators: &[IndicatorRow],
    locations: &[i64],
    thresholds: &[f64],
    classes: &[String],
) -> Vec<DivergenceRow> {
    let loc_names: Vec<String> = locations
        .iter()
        .map(|l| l.to_string())
        .chain(std::iter::once(ALL.to_string()))
        .collect();
    let mut groups = Vec::new();
    for ind in DIVERGENCE_INDICATORS {
        for (li, loc) in loc_names.iter().enumerate() {
            for class in classes {
                for &thr in thresholds {
                    let mut samples: [Vec<f64>; 8] = Default::default();
                    for r in indicators.iter().filter(|r| {
                        r.threshold == thr
                            && (li == locations.len() || r.location_id == locations[li])
                            && (class == ALL || r.vehicle_class.as_str() == class)
                    }) {
                        if let Some(v) = r.value(ind) {
                            samples[label_index(r.label)].push(v);
                        }
                    }
                    let key = GroupKey {
                        indicator: ind.to_string(),
                        location: loc.clone(),
                        vehicle_class: class.clone(),
                        threshold: format_threshold(thr),
                    };
                    groups.push((key, samples));
                }
            }
        }
    }
    let mut rows = Vec::new();
    for m in divergence_matrices(groups) {
        for i in 0..8 {
            for j in 0..8 {
                rows.push(DivergenceRow {
                    indicator: m.key.indicator.clone(),
                    location: m.key.location.clone(),
                    vehicle_class: m.key.vehicle_class.clone(),
                    threshold: m.key.threshold.clone(),
                    scenario_i: label_at(i),
                    scenario_j: label_at(j),
                    js: m.js[i][j],
                    n_i: m.n[i],
                    n_j: m.n[j],
                    masked: m.masked(i) || m.masked(j),
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(loc: i64, class: VehicleClass, thr: f64, label: ScenarioLabel, speed: f64) -> IndicatorRow {
        IndicatorRow {
            recording_id: 1,
            track_id: speed as i64,
            location_id: loc,
            vehicle_class: class,
            threshold: thr,
            label,
            merging_speed: speed,
            merging_distance: None,
            distance_ratio: None,
            duration: None,
            max_lat_speed: None,
            max_lat_accel: None,
            fit_rms: None,
            min_ttc_lead: f64::INFINITY,
            min_ttc_rear: f64::INFINITY,
            lead_dhw: None,
            lead_thw: None,
            rear_dhw: None,
            rear_thw: None,
            consecutive_lc: false,
            consecutive_lc_duration: None,
        }
    }

    #[test]
    fn groups_pool_locations_classes_and_scenarios() {
        let rows = vec![
            row(2, VehicleClass::Car, 100.0, ScenarioLabel::A, 10.0),
            row(2, VehicleClass::Truck, 100.0, ScenarioLabel::B, 20.0),
            row(3, VehicleClass::Car, 100.0, ScenarioLabel::A, 30.0),
        ];
        let s = summary_rows(&rows, &[], &[2, 3], &[100.0], 3.0).unwrap();
        let find = |loc: &str, class: &str, scen: &str| {
            s.iter()
                .find(|r| r.indicator == "merging_speed" && r.location == loc && r.vehicle_class == class && r.scenario == scen)
                .map(|r| (r.n, r.mean))
        };
        assert_eq!(find("2", "car", "A"), Some((1, 10.0)));
        assert_eq!(find("all", "car", "A"), Some((2, 20.0)));
        assert_eq!(find("all", "all", "all"), Some((3, 20.0)));
        assert_eq!(find("2", "all", "all"), Some((2, 15.0)));
        assert_eq!(find("3", "truck", "B"), None);
        assert!(s.iter().all(|r| r.indicator == "merging_speed"));
    }

    #[test]
    fn divergence_has_64_rows_per_group_and_masks_small_samples() {
        let rows: Vec<IndicatorRow> = (0..10)
            .map(|i| row(2, VehicleClass::Car, 100.0, if i < 6 { ScenarioLabel::A } else { ScenarioLabel::B }, i as f64))
            .collect();
        let d = divergence_rows(&rows, &[2], &[100.0], &["car".to_string()]);
        assert_eq!(d.len(), DIVERGENCE_INDICATORS.len() * 2 * 64);
        let ab = d
            .iter()
            .find(|r| r.indicator == "merging_speed" && r.location == "2" && r.scenario_i == ScenarioLabel::A && r.scenario_j == ScenarioLabel::B)
            .unwrap();
        assert!(ab.masked && ab.js.is_none());
        let aa = d
            .iter()
            .find(|r| r.indicator == "merging_speed" && r.location == "2" && r.scenario_i == ScenarioLabel::A && r.scenario_j == ScenarioLabel::A)
            .unwrap();
        assert_eq!((aa.js, aa.masked, aa.n_i), (Some(0.0), false, 6));
    }
}
