use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use mergekit::report::{
    read_csv, run_pipeline, run_stage, run_stats_from, DivergenceRow, EventRow, IndicatorRow, Manifest, MergePointRow,
    RunConfig, Stage, SummaryRow, CsvRow, FIGURE_FILES, MANIFEST_FILE,
};
use mergekit::synth::{generate_corpus, write_corpus, SynthConfig, DATA_DIR, LAYOUT_FILE};
use mergekit::ErrorKind;

fn corpus(dir: &Path, events: usize) {
    let config = SynthConfig { events, scenes_per_recording: 20, ..SynthConfig::default() };
    write_corpus(&generate_corpus(&config).unwrap(), dir).unwrap();
}

fn run_config(corpus: &Path, out: &Path) -> RunConfig {
    RunConfig {
        data_dir: Some(corpus.join(DATA_DIR)),
        layout: Some(corpus.join(LAYOUT_FILE)),
        out: Some(out.to_path_buf()),
        ..RunConfig::default()
    }
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn read_manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn full_run_writes_every_output_with_consistent_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 80);
    let out = tmp.path().join("out");
    let summary = run_pipeline(&run_config(tmp.path(), &out)).unwrap();
    assert_eq!(summary.n_events, 80);
    for f in ["events.csv", "scenarios.csv", "indicators.csv", "macro.csv", "summary.csv", "divergence.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    for f in FIGURE_FILES {
        assert!(out.join("figures").join(f).exists(), "{f}");
    }
    for t in ["solid_line_merges", "scenario_counts", "distance_ratio", "duration"] {
        assert!(out.join("tables").join(format!("{t}.csv")).exists(), "{t}");
    }

    let events: Vec<EventRow> = read_csv(&out.join("events.csv")).unwrap();
    let indicators: Vec<IndicatorRow> = read_csv(&out.join("indicators.csv")).unwrap();
    let n_solid = events.iter().filter(|e| e.crossed_solid).count();
    assert_eq!(indicators.len(), (events.len() - n_solid) * 3);

    // Every analyzed event appears exactly once in the merge-point scatter.
    let points: Vec<MergePointRow> = read_csv(&out.join("figures/merge_points.csv")).unwrap();
    let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
    for p in &points {
        *seen.entry((p.recording_id, p.track_id)).or_default() += 1;
    }
    for r in &indicators {
        assert_eq!(seen.get(&(r.recording_id, r.track_id)), Some(&1));
    }
    assert_eq!(points.len(), events.len());

    // Boxplot bundle carries exactly the summary columns.
    assert_eq!(header(&out.join("figures/boxplots.csv")), SummaryRow::HEADER);
    let box_rows: Vec<SummaryRow> = read_csv(&out.join("figures/boxplots.csv")).unwrap();
    assert!(box_rows.iter().any(|r| r.indicator == "merging_speed" && r.location == "99" && r.scenario == "A"));

    // Heatmap bundle: 64 rows per group, masked where a population is too small.
    let heat: Vec<DivergenceRow> = read_csv(&out.join("figures/js_heatmap.csv")).unwrap();
    let mut groups: BTreeMap<(String, String, String, String), usize> = BTreeMap::new();
    for r in &heat {
        *groups.entry((r.indicator.clone(), r.location.clone(), r.vehicle_class.clone(), r.threshold.clone())).or_default() += 1;
        assert_eq!(r.masked, r.n_i < 5 || r.n_j < 5);
        assert_eq!(r.js.is_none(), r.masked);
    }
    assert!(groups.values().all(|&n| n == 64));
    assert_eq!(groups.len(), 5 * 2 * 3);

    let ttc_header = header(&out.join("figures/ttc.csv"));
    assert_eq!(ttc_header.last().map(String::as_str), Some("n_infinite"));

    let m = read_manifest(&out);
    assert_eq!(m.counts.events, 80);
    assert!(m.outputs.contains_key("figures/lanelets.csv"));
    assert!(m.inputs.iter().any(|i| i.role == "layout"));
    assert!(m.config.out.is_none());
}

#[test]
fn runs_are_byte_identical_apart_from_timings() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 40);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_pipeline(&run_config(tmp.path(), &a)).unwrap();
    run_pipeline(&RunConfig { jobs: Some(2), ..run_config(tmp.path(), &b) }).unwrap();
    let (ma, mb) = (read_manifest(&a), read_manifest(&b));
    assert_eq!(ma.deterministic_json().unwrap(), mb.deterministic_json().unwrap());
    for name in ma.outputs.keys() {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn stages_and_prior_events() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 24);
    let ext = tmp.path().join("extract");
    run_stage(&run_config(tmp.path(), &ext), Stage::Extract, None).unwrap();
    assert!(ext.join("events.csv").exists());
    assert!(!ext.join("scenarios.csv").exists());

    let ind = tmp.path().join("ind");
    run_stage(&run_config(tmp.path(), &ind), Stage::Indicators, Some(&ext.join("events.csv"))).unwrap();
    let full = tmp.path().join("full");
    run_pipeline(&run_config(tmp.path(), &full)).unwrap();
    assert_eq!(
        std::fs::read(ind.join("indicators.csv")).unwrap(),
        std::fs::read(full.join("indicators.csv")).unwrap()
    );

    let st = tmp.path().join("stats");
    run_stats_from(&run_config(tmp.path(), &st), &full).unwrap();
    assert_eq!(
        std::fs::read(st.join("summary.csv")).unwrap(),
        std::fs::read(full.join("summary.csv")).unwrap()
    );
}

#[test]
fn config_errors_leave_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 8);
    let out = tmp.path().join("out");

    let none = RunConfig { locations: vec![2], ..run_config(tmp.path(), &out) };
    assert_eq!(run_pipeline(&none).unwrap_err().kind(), ErrorKind::Config);
    assert!(!out.exists());

    let bad = RunConfig { distance_thresholds: vec![-1.0], ..run_config(tmp.path(), &out) };
    assert_eq!(run_pipeline(&bad).unwrap_err().kind(), ErrorKind::Config);

    let foreign = tmp.path().join("foreign");
    std::fs::create_dir(&foreign).unwrap();
    std::fs::write(foreign.join("keep.txt"), "x").unwrap();
    let err = run_pipeline(&run_config(tmp.path(), &foreign)).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(foreign.join("keep.txt").exists());

    let leftovers: Vec<_> = std::fs::read_dir(tmp.path())
        .unwrap()
        .flatten()
        .filter(|e| e.file_name().to_string_lossy().starts_with(".mergekit-"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn rerun_replaces_previous_output() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 8);
    let out = tmp.path().join("out");
    run_pipeline(&run_config(tmp.path(), &out)).unwrap();
    std::fs::write(out.join("stale.csv"), "old").unwrap();
    run_pipeline(&run_config(tmp.path(), &out)).unwrap();
    assert!(!out.join("stale.csv").exists());
}
