//! Batches of scenes packed into recordings and written in the dataset layout.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{generate_scene, GroundTruth, SceneSpec};
use super::{fill_neighbor_ids, synthetic_layout_file, synthetic_map, SYNTH_FRAME_RATE, SYNTH_LOCATION_ID, SYNTH_TIMESTEP};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::ingest::{write_recording_meta, write_tracks, write_tracks_meta, RecordingFiles, RecordingMeta, Track, VehicleClass};
use crate::map::write_lanelet2;
use crate::scenario::ScenarioLabel;

/// Frames reserved for one scene inside a recording.
pub const SCENE_FRAMES: i64 = 1000;
/// Track ids reserved for one scene.
const IDS_PER_SCENE: i64 = 10;

pub const MAP_FILE: &str = "maps/location99.osm";
pub const LAYOUT_FILE: &str = "layout.toml";
pub const DATA_DIR: &str = "data";
pub const TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub events: usize,
    pub scenes_per_recording: usize,
    pub solid_fraction: f64,
    pub consecutive_fraction: f64,
    pub max_distractors: usize,
    pub first_recording_id: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            events: 200,
            scenes_per_recording: 25,
            solid_fraction: 0.1,
            consecutive_fraction: 0.3,
            max_distractors: 3,
            first_recording_id: 1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.scenes_per_recording == 0 {
            return Err(Error::Config("scenes_per_recording must be positive".into()));
        }
        if self.max_distractors + 3 > IDS_PER_SCENE as usize {
            return Err(Error::Config(format!(
                "max_distractors must not exceed {}",
                IDS_PER_SCENE - 3
            )));
        }
        for (name, p) in [("solid_fraction", self.solid_fraction), ("consecutive_fraction", self.consecutive_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// Scene request and random stream of scene `index`. Targets cycle through A–H.
    pub fn scene(&self, index: usize) -> (SceneSpec, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let slot = (index % self.scenes_per_recording) as i64;
        let start_frame = slot * SCENE_FRAMES;
        let ego_class = match rng.random_range(0..25) {
            0..=2 => VehicleClass::Truck,
            3 | 4 => VehicleClass::Van,
            _ => VehicleClass::Car,
        };
        let spec = SceneSpec {
            recording_id: self.first_recording_id + (index / self.scenes_per_recording) as i64,
            start_frame,
            end_frame: start_frame + SCENE_FRAMES - 1,
            first_track_id: slot * IDS_PER_SCENE + 1,
            target: ScenarioLabel::ALL[index % ScenarioLabel::ALL.len()],
            crossed_solid: rng.random_bool(self.solid_fraction),
            consecutive: rng.random_bool(self.consecutive_fraction),
            ego_class,
            distractors: rng.random_range(0..=self.max_distractors),
        };
        (spec, rng)
    }
}

#[derive(Debug, Clone)]
pub struct SynthRecording {
    pub meta: RecordingMeta,
    /// Sorted by track id.
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub recordings: Vec<SynthRecording>,
    /// One per scene, in scene order.
    pub truths: Vec<GroundTruth>,
}

impl SynthCorpus {
    pub fn recording(&self, recording_id: i64) -> Option<&SynthRecording> {
        self.recordings.iter().find(|r| r.meta.recording_id == recording_id)
    }
}

/// Generates the scenes in parallel; the result depends only on `config`.
pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let scenes: Vec<(i64, Vec<Track>, GroundTruth)> = (0..config.events)
        .into_par_iter()
        .map(|i| {
            let (spec, mut rng) = config.scene(i);
            let scene = generate_scene(&spec, &mut rng)?;
            let tracks = scene
                .vehicles
                .iter()
                .map(|v| {
                    let mut t = v.render(SYNTH_TIMESTEP);
                    let others: Vec<_> = scene.vehicles.iter().filter(|o| o.id != v.id).collect();
                    fill_neighbor_ids(&mut t, v, &others, SYNTH_TIMESTEP);
                    t
                })
                .collect();
            Ok((spec.recording_id, tracks, scene.truth))
        })
        .collect::<Result<_>>()?;
    let mut recordings: Vec<SynthRecording> = Vec::new();
    let mut truths = Vec::with_capacity(scenes.len());
    for (recording_id, tracks, truth) in scenes {
        if recordings.last().map_or(true, |r| r.meta.recording_id != recording_id) {
            recordings.push(SynthRecording {
                meta: RecordingMeta {
                    recording_id,
                    location_id: SYNTH_LOCATION_ID,
                    frame_rate: SYNTH_FRAME_RATE,
                    timestep: SYNTH_TIMESTEP,
                    origin_offset: Vec2::ZERO,
                },
                tracks: Vec::new(),
            });
        }
        recordings.last_mut().unwrap().tracks.extend(tracks);
        truths.push(truth);
    }
    for r in &mut recordings {
        r.tracks.sort_by_key(Track::id);
    }
    Ok(SynthCorpus { config: config.clone(), recordings, truths })
}

/// Writes map, layout, recordings and ground truth below `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    let create = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let write = |p: &Path, bytes: &[u8]| std::fs::write(p, bytes).map_err(|e| Error::io(p, e));
    let map_path = dir.join(MAP_FILE);
    create(map_path.parent().unwrap())?;
    write(&map_path, write_lanelet2(&synthetic_map()).as_bytes())?;
    let mut layout = synthetic_layout_file();
    for loc in layout.locations.values_mut() {
        loc.map = Some(MAP_FILE.to_string());
    }
    write(&dir.join(LAYOUT_FILE), layout.to_toml().as_bytes())?;
    let data = dir.join(DATA_DIR);
    create(&data)?;
    for r in &corpus.recordings {
        let files = RecordingFiles::in_dir(&data, &format!("{:02}", r.meta.recording_id));
        let mut buf = Vec::new();
        write_recording_meta(&mut buf, &r.meta)?;
        write(&files.recording_meta, &buf)?;
        buf.clear();
        write_tracks_meta(&mut buf, r.meta.recording_id, &r.tracks)?;
        write(&files.tracks_meta, &buf)?;
        buf.clear();
        write_tracks(&mut buf, r.meta.recording_id, &r.tracks)?;
        write(&files.tracks, &buf)?;
    }
    let json = serde_json::to_string_pretty(&corpus.truths)
        .map_err(|e| Error::Internal(format!("ground truth serialization: {e}")))?;
    write(&dir.join(TRUTH_FILE), json.as_bytes())
}

/// Reads a ground-truth file written by [`write_corpus`].
pub fn read_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_reproducible_and_packed() {
        let config = SynthConfig { events: 30, scenes_per_recording: 12, ..SynthConfig::default() };
        let a = generate_corpus(&config).unwrap();
        let b = generate_corpus(&config).unwrap();
        assert_eq!(a.truths, b.truths);
        assert_eq!(a.recordings.len(), 3);
        assert_eq!(a.recordings[2].meta.recording_id, 3);
        for (i, t) in a.truths.iter().enumerate() {
            assert_eq!(t.target, ScenarioLabel::ALL[i % 8]);
            assert_eq!(t.thresholds[0].label, t.target);
        }
        let rec = &a.recordings[0];
        for w in rec.tracks.windows(2) {
            assert!(w[0].id() < w[1].id());
        }
    }

    #[test]
    fn rejects_bad_config() {
        let config = SynthConfig { max_distractors: 9, ..SynthConfig::default() };
        assert!(matches!(generate_corpus(&config), Err(Error::Config(_))));
    }
}
