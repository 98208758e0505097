//! Run manifest: configuration, input and output digests, method constants and
//! timings. Everything except `timings` is deterministic for fixed inputs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::events::{CROSS_CHECK_FRAMES, LANE_CHANGE_MIN_JUMP};
use crate::indicators::{FIT_GRID_CELLS, MIN_FIT_SAMPLES, RATIO_TOLERANCE};
use crate::stats::{DENSITY_FLOOR, KDE_GRID_PADDING, KDE_GRID_POINTS, KDE_MIN_SAMPLES, KERNEL_CUTOFF};

use super::{Analysis, RunConfig, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub lookback_frames: usize,
    pub lane_change_min_jump_m: f64,
    pub cross_check_frames: i64,
    pub distance_ratio_tolerance: f64,
    pub lateral_fit_degree: usize,
    pub lateral_fit_min_samples: usize,
    pub lateral_fit_grid_cells: usize,
    pub quantile: String,
    pub outlier_fences: String,
    pub kde_bandwidth: String,
    pub kde_grid_points: usize,
    pub kde_grid_padding_bandwidths: f64,
    pub kde_kernel_cutoff_bandwidths: f64,
    pub kde_min_samples: usize,
    pub density_floor: f64,
    pub divergence_log_base: u32,
    pub neighbor_tie_break: String,
    pub gaps: String,
    pub headways: String,
    pub macro_occupancy: String,
    pub solid_line_merges: String,
    pub statistics_samples: String,
}

impl Method {
    fn new(config: &RunConfig) -> Method {
        Method {
            lookback_frames: config.lookback,
            lane_change_min_jump_m: LANE_CHANGE_MIN_JUMP,
            cross_check_frames: CROSS_CHECK_FRAMES,
            distance_ratio_tolerance: RATIO_TOLERANCE,
            lateral_fit_degree: 5,
            lateral_fit_min_samples: MIN_FIT_SAMPLES,
            lateral_fit_grid_cells: FIT_GRID_CELLS,
            quantile: "linear interpolation at p*(n-1)".into(),
            outlier_fences: "[q1 - M*iqr, q3 + M*iqr]".into(),
            kde_bandwidth: "1.06*min(std, iqr/1.349)*n^(-1/5), floored at 1e-6*range".into(),
            kde_grid_points: KDE_GRID_POINTS,
            kde_grid_padding_bandwidths: KDE_GRID_PADDING,
            kde_kernel_cutoff_bandwidths: KERNEL_CUTOFF,
            kde_min_samples: KDE_MIN_SAMPLES,
            density_floor: DENSITY_FLOOR,
            divergence_log_base: 2,
            neighbor_tie_break: "equal gaps resolve to the lower track id".into(),
            gaps: "bumper to bumper".into(),
            headways: "at the merging point F".into(),
            macro_occupancy: "all vehicles in areas 4 and 5".into(),
            solid_line_merges: "counted, excluded from scenarios, indicators and statistics".into(),
            statistics_samples: "all samples; outliers reported, not removed".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub recordings: usize,
    pub tracks: usize,
    pub events: usize,
    pub solid_line_events: usize,
    pub rejections: usize,
    pub scenario_records: usize,
    pub indicator_rows: usize,
    pub macro_rows: usize,
}

/// Excluded from determinism comparisons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total: f64,
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: Stage,
    pub config: RunConfig,
    pub method: Method,
    pub inputs: Vec<InputFile>,
    /// Output path relative to the output directory, to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub counts: Counts,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

impl Manifest {
    pub fn new(
        stage: Stage,
        config: RunConfig,
        inputs: &[(String, PathBuf)],
        outputs: &BTreeMap<String, Vec<u8>>,
        warnings: Vec<String>,
    ) -> Result<Manifest> {
        let inputs = inputs
            .iter()
            .map(|(role, path)| {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                Ok(InputFile {
                    role: role.clone(),
                    file: path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest {
            tool: "mergekit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            stage,
            method: Method::new(&config),
            config,
            inputs,
            outputs: outputs.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
            counts: Counts::default(),
            warnings,
            timings: Timings::default(),
        })
    }

    pub fn set_counts(&mut self, a: &Analysis) {
        self.counts = Counts {
            recordings: a.ingest.len(),
            tracks: a.ingest.iter().map(|r| r.n_tracks).sum(),
            events: a.events.len(),
            solid_line_events: a.events.iter().filter(|e| e.crossed_solid).count(),
            rejections: a.rejections.len(),
            scenario_records: a.scenarios.len(),
            indicator_rows: a.indicators.len(),
            macro_rows: a.macro_rows.len(),
        };
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("manifest serialization: {e}")))
    }

    /// JSON without the timing section, for reproducibility checks.
    pub fn deterministic_json(&self) -> Result<String> {
        Manifest { timings: Timings::default(), ..self.clone() }.to_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
