//! End-to-end batch runs: input discovery, per-recording analysis, aggregation,
//! table and figure-bundle emission, and the run manifest.

mod figures;
mod manifest;
pub mod records;
mod stats_tables;
mod tables;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{count_solid_line_merges, extract_events, ExtractConfig, MergingEvent, DEFAULT_LOOKBACK};
use crate::indicators::compute_indicators;
use crate::ingest::{assign_lanes, discover_recordings, RecordingFiles, RecordingMeta, Track};
use crate::macroscopic::event_macro;
use crate::map::{load_layout, parse_lanelet2, LaneletMap, LayoutFile, MergingAreaLayout};
use crate::scenario::{classify_events, NeighborSource, RecordingIndex, DEFAULT_THRESHOLDS};
use crate::stats::DEFAULT_OUTLIER_MULTIPLIER;

pub use figures::{figure_bundles, lanelet_rows, ConsecutiveRow, LaneletRow, MacroScatterRow, MergePointRow, FIGURE_FILES};
pub use manifest::{sha256_hex, Manifest, MANIFEST_FILE};
pub use records::*;
pub use stats_tables::{divergence_rows, summary_rows};
pub use tables::{solid_line_table, counts_table, distance_ratio_table, duration_table, consecutive_share_table, consecutive_duration_table, Table};

/// Settings of one run. Loadable from TOML; command-line flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub maps_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub layout: Option<PathBuf>,
    /// Locations to process; empty means every location of the layout file.
    pub locations: Vec<i64>,
    pub distance_thresholds: Vec<f64>,
    pub outlier_multiplier: f64,
    /// Overrides the recordings' frame spacing, seconds.
    pub timestep: Option<f64>,
    pub lookback: usize,
    pub neighbor_source: NeighborSource,
    /// Vehicle classes with divergence matrices.
    pub divergence_classes: Vec<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            maps_dir: None,
            data_dir: None,
            layout: None,
            locations: Vec::new(),
            distance_thresholds: DEFAULT_THRESHOLDS.to_vec(),
            outlier_multiplier: DEFAULT_OUTLIER_MULTIPLIER,
            timestep: None,
            lookback: DEFAULT_LOOKBACK,
            neighbor_source: NeighborSource::Auto,
            divergence_classes: vec!["car".into()],
            out: None,
            jobs: None,
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for slot in [&mut c.maps_dir, &mut c.data_dir, &mut c.layout, &mut c.out] {
            if let Some(p) = slot.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.distance_thresholds.is_empty() {
            return bad("at least one distance threshold is required".into());
        }
        if let Some(t) = self.distance_thresholds.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return bad(format!("distance threshold {t} must be positive"));
        }
        if !(self.outlier_multiplier.is_finite() && self.outlier_multiplier > 0.0) {
            return bad(format!("outlier multiplier {} must be positive", self.outlier_multiplier));
        }
        if self.lookback == 0 {
            return bad("lookback must be at least one frame".into());
        }
        if let Some(t) = self.timestep.filter(|t| !(t.is_finite() && *t > 0.0)) {
            return bad(format!("timestep {t} must be positive"));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive".into());
        }
        Ok(())
    }

    fn required<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing --{name}")))
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.required(&self.data_dir, "data-dir")
    }

    pub fn layout_path(&self) -> Result<&Path> {
        self.required(&self.layout, "layout")
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.required(&self.out, "out")
    }

    /// The configuration recorded in the manifest: everything that affects outputs.
    fn recorded(&self) -> RunConfig {
        RunConfig { out: None, jobs: None, ..self.clone() }
    }
}

/// Pipeline stages, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Extract,
    Classify,
    Indicators,
    Macro,
    Stats,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Classify => "classify",
            Stage::Indicators => "indicators",
            Stage::Macro => "macro",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }

    fn classifies(self) -> bool {
        matches!(self, Stage::Classify | Stage::Indicators | Stage::Stats | Stage::Report)
    }

    fn computes_indicators(self) -> bool {
        matches!(self, Stage::Indicators | Stage::Stats | Stage::Report)
    }

    fn computes_macro(self) -> bool {
        matches!(self, Stage::Macro | Stage::Stats | Stage::Report)
    }
}

/// Map and layout of one location in one recording frame.
pub struct LocationContext {
    pub location_id: i64,
    pub map: LaneletMap,
    pub layout: MergingAreaLayout,
}

pub struct LoadedRecording {
    pub files: RecordingFiles,
    pub meta: RecordingMeta,
    pub tracks: Vec<Track>,
    pub context: Arc<LocationContext>,
}

/// Everything read from disk for a run.
pub struct Inputs {
    pub recordings: Vec<LoadedRecording>,
    pub locations: Vec<i64>,
    /// `(label, path)` of every file read, in a stable order.
    pub files: Vec<(String, PathBuf)>,
    pub warnings: Vec<String>,
}

/// Finds the map file of a location: the layout's own entry, else a single
/// `<id>.osm`, `<id>_*.osm` or `location<id>.osm` in the maps directory or its
/// `lanelet2` subdirectory.
fn resolve_map(config: &RunConfig, layout_path: &Path, entry: Option<&str>, id: i64) -> Result<PathBuf> {
    if let Some(p) = entry {
        let base = layout_path.parent().unwrap_or(Path::new("."));
        return Ok(base.join(p));
    }
    let maps_dir = config
        .maps_dir
        .as_deref()
        .ok_or_else(|| Error::Config(format!("location {id}: no map in the layout file and no --maps-dir")))?;
    let mut found = Vec::new();
    for dir in [maps_dir.to_path_buf(), maps_dir.join("lanelet2")] {
        let Ok(entries) = std::fs::read_dir(&dir) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.extension().and_then(|x| x.to_str()) != Some("osm") {
                continue;
            }
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if stem == id.to_string() || stem.starts_with(&format!("{id}_")) || stem == format!("location{id}") {
                found.push(p);
            }
        }
    }
    found.sort();
    match found.len() {
        1 => Ok(found.pop().unwrap()),
        0 => Err(Error::Config(format!("location {id}: no map file in {}", maps_dir.display()))),
        _ => Err(Error::Config(format!("location {id}: ambiguous map files {found:?}"))),
    }
}

/// Reads the layout, maps and recordings selected by `config`.
pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let layout_path = config.layout_path()?;
    let layout_file = LayoutFile::load(layout_path).map_err(|e| e.in_stage("ingest"))?;
    let locations = if config.locations.is_empty() {
        layout_file.location_ids()?
    } else {
        config.locations.clone()
    };
    let mut files = vec![("layout".to_string(), layout_path.to_path_buf())];
    let mut warnings = Vec::new();

    let data_dir = config.data_dir()?;
    let discovered = discover_recordings(data_dir)?;
    let parsed: Vec<(RecordingFiles, RecordingMeta, Vec<Track>)> = discovered
        .into_par_iter()
        .map(|f| {
            let (mut meta, tracks) = f.load()?;
            if let Some(ts) = config.timestep {
                meta.timestep = ts;
                meta.frame_rate = 1.0 / ts;
            }
            Ok((f, meta, tracks))
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.in_stage("ingest"))?;

    let mut base_maps: BTreeMap<i64, (LaneletMap, PathBuf)> = BTreeMap::new();
    let mut contexts: HashMap<(i64, [u64; 2]), Arc<LocationContext>> = HashMap::new();
    let mut selected = Vec::new();
    for (f, meta, tracks) in parsed {
        let loc = meta.location_id;
        if !locations.contains(&loc) {
            warnings.push(format!("recording {}: location {loc} not selected, skipped", meta.recording_id));
            continue;
        }
        let entry = layout_file
            .location(loc)
            .ok_or_else(|| Error::Config(format!("location {loc} missing from the layout file")))?;
        if !base_maps.contains_key(&loc) {
            let path = resolve_map(config, layout_path, entry.map.as_deref(), loc)?;
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let map = parse_lanelet2(&bytes).map_err(|e| e.in_stage("ingest"))?;
            base_maps.insert(loc, (map, path));
        }
        let origin = meta.origin_offset;
        let key = (loc, [origin.x.to_bits(), origin.y.to_bits()]);
        if !contexts.contains_key(&key) {
            let map = base_maps[&loc].0.translated(origin)?;
            let (layout, w) = load_layout(&map, entry, loc, layout_file.tolerance)?;
            warnings.extend(w.into_iter().map(|w| format!("location {loc}: {w}")));
            contexts.insert(key, Arc::new(LocationContext { location_id: loc, map, layout }));
        }
        selected.push((f, meta, tracks, contexts[&key].clone()));
    }
    if selected.is_empty() {
        return Err(Error::Config(format!(
            "no recordings for locations {locations:?} in {}",
            data_dir.display()
        )));
    }
    for (loc, (_, path)) in &base_maps {
        files.push((format!("map/{loc}"), path.clone()));
    }
    let recordings: Vec<LoadedRecording> = selected
        .into_par_iter()
        .map(|(f, meta, mut tracks, context)| {
            for t in &mut tracks {
                assign_lanes(t, &context.map);
            }
            LoadedRecording { files: f, meta, tracks, context }
        })
        .collect();
    for r in &recordings {
        for p in r.files.all() {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            files.push((format!("data/{name}"), p.to_path_buf()));
        }
    }
    Ok(Inputs { recordings, locations, files, warnings })
}

/// Per-recording ingest statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRow {
    pub recording_id: i64,
    pub location_id: i64,
    pub frame_rate: f64,
    pub n_tracks: usize,
    pub n_frames: usize,
    pub derived_kinematics: usize,
    pub incomplete_kinematics: usize,
    pub unassigned_frames: usize,
}

impl CsvRow for IngestRow {
    const HEADER: &'static [&'static str] = &[
        "recording_id",
        "location_id",
        "frame_rate",
        "n_tracks",
        "n_frames",
        "derived_kinematics",
        "incomplete_kinematics",
        "unassigned_frames",
    ];
}

fn ingest_row(r: &LoadedRecording) -> IngestRow {
    IngestRow {
        recording_id: r.meta.recording_id,
        location_id: r.meta.location_id,
        frame_rate: r.meta.frame_rate,
        n_tracks: r.tracks.len(),
        n_frames: r.tracks.iter().map(|t| t.frames.len()).sum(),
        derived_kinematics: r.tracks.iter().filter(|t| !t.fields.velocity || !t.fields.acceleration).count(),
        incomplete_kinematics: r.tracks.iter().filter(|t| t.kinematics_incomplete).count(),
        unassigned_frames: r
            .tracks
            .iter()
            .flat_map(|t| &t.frames)
            .filter(|f| f.lanelet_id.is_none())
            .count(),
    }
}

/// Results of the per-recording stages.
#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub ingest: Vec<IngestRow>,
    pub events: Vec<MergingEvent>,
    pub rejections: Vec<RejectionRow>,
    pub routes: Vec<RouteRow>,
    pub scenarios: Vec<ScenarioRow>,
    pub indicators: Vec<IndicatorRow>,
    pub macro_rows: Vec<MacroRow>,
    pub merge_points: Vec<MergePointRow>,
    pub lanelets: Vec<LaneletRow>,
}

#[derive(Default)]
struct RecordingResult {
    events: Vec<MergingEvent>,
    rejections: Vec<RejectionRow>,
    routes: Vec<RouteRow>,
    scenarios: Vec<ScenarioRow>,
    indicators: Vec<IndicatorRow>,
    macro_rows: Vec<MacroRow>,
    merge_points: Vec<MergePointRow>,
}

fn analyze_recording(
    r: &LoadedRecording,
    config: &RunConfig,
    stage: Stage,
    prior_events: Option<&[MergingEvent]>,
) -> Result<RecordingResult> {
    let layout = &r.context.layout;
    let mut out = RecordingResult::default();
    let events = match prior_events {
        Some(all) => {
            let mine: Vec<MergingEvent> = all
                .iter()
                .filter(|e| e.recording_id == r.meta.recording_id)
                .cloned()
                .collect();
            if let Some(e) = mine.iter().find(|e| !r.tracks.iter().any(|t| t.id() == e.track_id)) {
                return Err(Error::Integrity(format!(
                    "event track {} not in recording {}",
                    e.track_id, r.meta.recording_id
                )));
            }
            mine
        }
        None => {
            let x = extract_events(&r.meta, &r.tracks, layout, &ExtractConfig { lookback: config.lookback });
            out.rejections = x.rejections.iter().map(RejectionRow::from).collect();
            out.routes = x
                .routes
                .iter()
                .map(|(route, &count)| RouteRow {
                    recording_id: r.meta.recording_id,
                    location_id: r.meta.location_id,
                    route: route.as_str().to_string(),
                    count,
                })
                .collect();
            x.events
        }
    };
    for w in events.iter().flat_map(|e| &e.warnings) {
        log::warn!("recording {}: {w}", r.meta.recording_id);
    }
    let index = RecordingIndex::new(&r.tracks, layout);
    out.merge_points = events
        .iter()
        .map(|e| MergePointRow::new(e, &index))
        .collect();
    if stage.classifies() {
        let analyzable: Vec<&MergingEvent> = events.iter().filter(|e| !e.crossed_solid).collect();
        let classified = classify_events(&analyzable, &index, &config.distance_thresholds, config.neighbor_source);
        let per_event = config.distance_thresholds.len();
        for (i, (timeline, rec)) in classified.iter().enumerate() {
            if stage.computes_indicators() {
                let ev = analyzable[i / per_event];
                let ind = compute_indicators(ev, timeline, &index, r.meta.timestep)
                    .map_err(|e| e.in_stage("indicators"))?;
                out.indicators.push(IndicatorRow::new(rec, &ind));
            }
        }
        out.scenarios = classified.into_iter().map(|(_, rec)| rec).collect();
    }
    if stage.computes_macro() {
        for e in &events {
            let (up, down) = event_macro(e, &r.tracks, layout, r.meta.timestep);
            if let (Some(up), Some(chain)) = (up, layout.upstream_chain()) {
                out.macro_rows.push(MacroRow::new(e, "upstream", chain.length(), &up));
            }
            out.macro_rows
                .push(MacroRow::new(e, "downstream", layout.downstream_chain().length(), &down));
        }
    }
    out.events = events;
    Ok(out)
}

/// Runs the per-recording stages up to `stage` over all recordings in parallel.
/// `prior_events` replaces extraction with previously written events.
pub fn analyze(inputs: &Inputs, config: &RunConfig, stage: Stage, prior_events: Option<&[MergingEvent]>) -> Result<Analysis> {
    let mut analysis = Analysis {
        ingest: inputs.recordings.iter().map(ingest_row).collect(),
        ..Analysis::default()
    };
    if stage == Stage::Ingest {
        return Ok(analysis);
    }
    let mut seen = Vec::new();
    for r in &inputs.recordings {
        if !seen.contains(&r.context.location_id) {
            seen.push(r.context.location_id);
            analysis.lanelets.extend(lanelet_rows(&r.context.map, &r.context.layout));
        }
    }
    let results: Vec<RecordingResult> = inputs
        .recordings
        .par_iter()
        .map(|r| analyze_recording(r, config, stage, prior_events))
        .collect::<Result<_>>()?;
    for r in results {
        analysis.events.extend(r.events);
        analysis.rejections.extend(r.rejections);
        analysis.routes.extend(r.routes);
        analysis.scenarios.extend(r.scenarios);
        analysis.indicators.extend(r.indicators);
        analysis.macro_rows.extend(r.macro_rows);
        analysis.merge_points.extend(r.merge_points);
    }
    Ok(analysis)
}

/// Output files of a run, keyed by path relative to the output directory.
pub type Outputs = BTreeMap<String, Vec<u8>>;

fn add_csv<T: CsvRow>(out: &mut Outputs, name: &str, rows: &[T]) -> Result<()> {
    out.insert(name.to_string(), to_csv(rows)?);
    Ok(())
}

fn add_table(out: &mut Outputs, name: &str, table: &Table) -> Result<()> {
    out.insert(format!("tables/{name}"), table.to_csv()?);
    Ok(())
}

/// Statistical outputs computed from indicator and macro rows.
pub struct StatsOutputs {
    pub summary: Vec<SummaryRow>,
    pub divergence: Vec<DivergenceRow>,
}

pub fn compute_stats(
    indicators: &[IndicatorRow],
    macro_rows: &[MacroRow],
    locations: &[i64],
    config: &RunConfig,
) -> Result<StatsOutputs> {
    Ok(StatsOutputs {
        summary: summary_rows(indicators, macro_rows, locations, &config.distance_thresholds, config.outlier_multiplier)?,
        divergence: divergence_rows(indicators, locations, &config.distance_thresholds, &config.divergence_classes),
    })
}

/// Renders the outputs of `stage` from an analysis.
pub fn render_outputs(analysis: &Analysis, locations: &[i64], config: &RunConfig, stage: Stage) -> Result<Outputs> {
    let mut out = Outputs::new();
    let thresholds = &config.distance_thresholds;
    if stage == Stage::Ingest {
        add_csv(&mut out, "ingest.csv", &analysis.ingest)?;
        return Ok(out);
    }
    let events: Vec<EventRow> = analysis.events.iter().map(EventRow::from).collect();
    if matches!(stage, Stage::Extract | Stage::Report) {
        add_csv(&mut out, "events.csv", &events)?;
        add_csv(&mut out, "rejections.csv", &analysis.rejections)?;
        add_csv(&mut out, "routes.csv", &analysis.routes)?;
        add_table(&mut out, "solid_line_merges.csv", &solid_line_table(&count_solid_line_merges(&analysis.events, locations)))?;
    }
    if matches!(stage, Stage::Classify | Stage::Report) {
        add_csv(&mut out, "scenarios.csv", &analysis.scenarios)?;
        add_table(&mut out, "scenario_counts.csv", &counts_table(&analysis.scenarios, locations, thresholds))?;
    }
    if matches!(stage, Stage::Indicators | Stage::Report) {
        add_csv(&mut out, "indicators.csv", &analysis.indicators)?;
        add_table(&mut out, "distance_ratio.csv", &distance_ratio_table(&analysis.indicators, locations, thresholds))?;
        add_table(&mut out, "duration.csv", &duration_table(&analysis.indicators, locations, thresholds))?;
        add_table(&mut out, "consecutive_share.csv", &consecutive_share_table(&analysis.indicators, locations, thresholds))?;
        add_table(&mut out, "consecutive_duration.csv", &consecutive_duration_table(&analysis.indicators, locations, thresholds))?;
    }
    if matches!(stage, Stage::Macro | Stage::Report) {
        add_csv(&mut out, "macro.csv", &analysis.macro_rows)?;
    }
    if matches!(stage, Stage::Stats | Stage::Report) {
        let stats = compute_stats(&analysis.indicators, &analysis.macro_rows, locations, config)?;
        add_csv(&mut out, "summary.csv", &stats.summary)?;
        add_csv(&mut out, "divergence.csv", &stats.divergence)?;
        if stage == Stage::Report {
            for (name, bytes) in figure_bundles(analysis, &stats, config)? {
                out.insert(format!("figures/{name}"), bytes);
            }
        }
    }
    Ok(out)
}

/// Writes `outputs` plus `manifest.json` into a fresh sibling directory and moves it
/// into place, so a failed run leaves no partial output. An existing output
/// directory is replaced only when it is empty or holds a previous manifest.
pub fn commit_outputs(out_dir: &Path, outputs: &Outputs, manifest: &Manifest) -> Result<()> {
    if out_dir.exists() {
        let empty = std::fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir, e))?
            .next()
            .is_none();
        if !empty && !out_dir.join(MANIFEST_FILE).exists() {
            return Err(Error::Config(format!(
                "output directory {} exists and is not a previous run",
                out_dir.display()
            )));
        }
    }
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".mergekit-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    for (name, bytes) in outputs {
        let p = staging.path().join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    let mp = staging.path().join(MANIFEST_FILE);
    std::fs::write(&mp, manifest.to_json()?).map_err(|e| Error::io(&mp, e))?;
    if out_dir.exists() {
        std::fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    let staged = staging.keep();
    std::fs::rename(&staged, out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(())
}

/// Wall-clock seconds per stage.
#[derive(Debug, Default)]
struct Timer {
    stages: Vec<(String, f64)>,
}

impl Timer {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f();
        self.stages.push((name.to_string(), start.elapsed().as_secs_f64()));
        r
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub n_recordings: usize,
    pub n_events: usize,
    pub files: Vec<String>,
}

/// Runs the pipeline up to `stage` and writes its outputs and manifest.
pub fn run_stage(config: &RunConfig, stage: Stage, prior_events: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    with_jobs(config.jobs, || run_stage_on_pool(config, stage, prior_events))?
}

fn run_stage_on_pool(config: &RunConfig, stage: Stage, prior_events: Option<&Path>) -> Result<RunSummary> {
    let out_dir = config.out_dir()?.to_path_buf();
    let mut timer = Timer::default();
    let started = Instant::now();
    let prior: Option<Vec<MergingEvent>> = prior_events
        .map(|p| read_csv::<EventRow>(p).map(|rows| rows.iter().map(MergingEvent::from).collect()))
        .transpose()?;
    let inputs = timer.time("ingest", || load_inputs(config))?;
    let mut input_files = inputs.files.clone();
    if let Some(p) = prior_events {
        input_files.push(("events".into(), p.to_path_buf()));
    }
    let analysis = timer.time("analysis", || {
        analyze(&inputs, config, stage, prior.as_deref()).map_err(|e| e.in_stage(stage.as_str()))
    })?;
    let outputs = timer.time("render", || {
        render_outputs(&analysis, &inputs.locations, config, stage).map_err(|e| e.in_stage("report"))
    })?;
    let mut manifest = Manifest::new(stage, config.recorded(), &input_files, &outputs, inputs.warnings.clone())?;
    manifest.set_counts(&analysis);
    manifest.timings.stages = timer.stages;
    manifest.timings.total = started.elapsed().as_secs_f64();
    commit_outputs(&out_dir, &outputs, &manifest)?;
    Ok(RunSummary {
        out_dir,
        n_recordings: inputs.recordings.len(),
        n_events: analysis.events.len(),
        files: outputs.keys().cloned().collect(),
    })
}

/// Full pipeline: every CSV, table, figure bundle and the manifest.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    run_stage(config, Stage::Report, None)
}

/// Recomputes statistics from the `indicators.csv` and `macro.csv` of a previous run.
pub fn run_stats_from(config: &RunConfig, prior_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let out_dir = config.out_dir()?.to_path_buf();
    let started = Instant::now();
    let ind_path = prior_dir.join("indicators.csv");
    let macro_path = prior_dir.join("macro.csv");
    if !ind_path.exists() {
        return Err(Error::Config(format!("missing upstream table {}", ind_path.display())));
    }
    let indicators: Vec<IndicatorRow> = read_csv(&ind_path)?;
    let macro_rows: Vec<MacroRow> = if macro_path.exists() { read_csv(&macro_path)? } else { Vec::new() };
    let mut locations: Vec<i64> = if config.locations.is_empty() {
        indicators.iter().map(|r| r.location_id).collect()
    } else {
        config.locations.clone()
    };
    locations.sort_unstable();
    locations.dedup();
    let stats = compute_stats(&indicators, &macro_rows, &locations, config).map_err(|e| e.in_stage("stats"))?;
    let mut outputs = Outputs::new();
    add_csv(&mut outputs, "summary.csv", &stats.summary)?;
    add_csv(&mut outputs, "divergence.csv", &stats.divergence)?;
    let mut files = vec![("indicators".to_string(), ind_path)];
    if macro_path.exists() {
        files.push(("macro".to_string(), macro_path));
    }
    let mut manifest = Manifest::new(Stage::Stats, config.recorded(), &files, &outputs, Vec::new())?;
    manifest.timings.total = started.elapsed().as_secs_f64();
    commit_outputs(&out_dir, &outputs, &manifest)?;
    Ok(RunSummary {
        out_dir,
        n_recordings: 0,
        n_events: 0,
        files: outputs.keys().cloned().collect(),
    })
}

/// Runs `f` on a thread pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Internal(format!("thread pool: {e}"))),
    }
}
