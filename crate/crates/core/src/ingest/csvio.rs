use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Vec2;

use super::kinematics::derive_kinematics;
use super::{NeighborIds, RecordingMeta, Track, TrackFields, TrackFrame, TrackMeta, VehicleClass};

/// Column order used when writing a tracks file.
pub const TRACK_COLUMNS: [&str; 21] = [
    "recordingId",
    "trackId",
    "frame",
    "xCenter",
    "yCenter",
    "heading",
    "xVelocity",
    "yVelocity",
    "xAcceleration",
    "yAcceleration",
    "laneletId",
    "latLaneCenterOffset",
    "laneChange",
    "leadId",
    "rearId",
    "leftLeadId",
    "rightLeadId",
    "leftAlongsideId",
    "rightAlongsideId",
    "leftRearId",
    "rightRearId",
];

const NEIGHBOR_COLUMNS: [&str; 8] = [
    "leadId",
    "rearId",
    "leftLeadId",
    "rightLeadId",
    "leftAlongsideId",
    "rightAlongsideId",
    "leftRearId",
    "rightRearId",
];

struct Header {
    file: &'static str,
    index: HashMap<String, usize>,
}

impl Header {
    fn read<R: std::io::Read>(file: &'static str, rdr: &mut csv::Reader<R>) -> Result<Header> {
        let index = rdr
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        Ok(Header { file, index })
    }

    fn required(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::Schema {
            file: self.file.to_string(),
            column: name.to_string(),
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

struct Row<'a> {
    file: &'static str,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn raw(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("").trim()
    }

    fn bad(&self, col: usize, what: &str) -> Error {
        Error::Integrity(format!(
            "{} line {}: {what} {:?} in column {}",
            self.file,
            self.line,
            self.raw(col),
            col + 1
        ))
    }

    fn f64(&self, col: usize) -> Result<f64> {
        let v: f64 = self.raw(col).parse().map_err(|_| self.bad(col, "invalid number"))?;
        if !v.is_finite() {
            return Err(self.bad(col, "non-finite number"));
        }
        Ok(v)
    }

    fn opt_f64(&self, col: Option<usize>) -> Result<Option<f64>> {
        match col {
            Some(c) if !self.raw(c).is_empty() => self.f64(c).map(Some),
            _ => Ok(None),
        }
    }

    fn i64(&self, col: usize) -> Result<i64> {
        let raw = self.raw(col);
        if let Ok(v) = raw.parse::<i64>() {
            return Ok(v);
        }
        // Some exports write integral ids as floats ("12.0").
        match raw.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as i64),
            _ => Err(self.bad(col, "invalid integer")),
        }
    }

    fn neighbor(&self, col: Option<usize>) -> Result<Option<i64>> {
        match col {
            Some(c) if !self.raw(c).is_empty() => {
                let id = self.i64(c)?;
                Ok((id > 0).then_some(id))
            }
            _ => Ok(None),
        }
    }

    fn list<T: std::str::FromStr>(&self, col: Option<usize>) -> Result<Vec<T>> {
        let Some(c) = col else { return Ok(Vec::new()) };
        self.raw(c)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|_| self.bad(c, "invalid list entry")))
            .collect()
    }

    fn flag(&self, col: Option<usize>) -> Result<bool> {
        let Some(c) = col else { return Ok(false) };
        match self.raw(c).to_ascii_lowercase().as_str() {
            "" | "0" | "false" | "0.0" => Ok(false),
            "1" | "true" | "1.0" => Ok(true),
            _ => Err(self.bad(c, "invalid flag")),
        }
    }
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::Headers).from_reader(bytes)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub fn parse_recording_meta(bytes: &[u8]) -> Result<RecordingMeta> {
    const FILE: &str = "recordingMeta";
    let mut rdr = reader(bytes);
    let h = Header::read(FILE, &mut rdr)?;
    let c_rec = h.required("recordingId")?;
    let c_loc = h.required("locationId")?;
    let c_rate = h.required("frameRate")?;
    let c_ux = h.optional("xUtmOrigin");
    let c_uy = h.optional("yUtmOrigin");
    let record = rdr
        .records()
        .next()
        .ok_or_else(|| Error::Integrity(format!("{FILE}: no data row")))??;
    let row = Row { file: FILE, line: line_of(&record), record: &record };
    let frame_rate = row.f64(c_rate)?;
    if !(frame_rate > 0.0) {
        return Err(row.bad(c_rate, "non-positive frame rate"));
    }
    Ok(RecordingMeta {
        recording_id: row.i64(c_rec)?,
        location_id: row.i64(c_loc)?,
        frame_rate,
        timestep: 1.0 / frame_rate,
        origin_offset: Vec2::new(
            row.opt_f64(c_ux)?.unwrap_or(0.0),
            row.opt_f64(c_uy)?.unwrap_or(0.0),
        ),
    })
}

pub fn parse_tracks_meta(bytes: &[u8]) -> Result<Vec<TrackMeta>> {
    const FILE: &str = "tracksMeta";
    let mut rdr = reader(bytes);
    let h = Header::read(FILE, &mut rdr)?;
    let c_id = h.required("trackId")?;
    let c_first = h.required("initialFrame")?;
    let c_last = h.required("finalFrame")?;
    let c_w = h.required("width")?;
    let c_l = h.required("length")?;
    let c_class = h.required("class")?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = Row { file: FILE, line: line_of(&record), record: &record };
        let meta = TrackMeta {
            track_id: row.i64(c_id)?,
            vehicle_class: VehicleClass::parse(row.raw(c_class)),
            length: row.f64(c_l)?,
            width: row.f64(c_w)?,
            first_frame: row.i64(c_first)?,
            last_frame: row.i64(c_last)?,
        };
        if meta.first_frame > meta.last_frame {
            return Err(Error::Integrity(format!(
                "track {}: initialFrame {} after finalFrame {}",
                meta.track_id, meta.first_frame, meta.last_frame
            )));
        }
        if !(meta.length > 0.0 && meta.width > 0.0) {
            return Err(Error::Integrity(format!(
                "track {}: non-positive vehicle dimensions",
                meta.track_id
            )));
        }
        out.push(meta);
    }
    Ok(out)
}

struct TrackColumns {
    id: usize,
    frame: usize,
    x: usize,
    y: usize,
    heading: Option<usize>,
    vx: Option<usize>,
    vy: Option<usize>,
    ax: Option<usize>,
    ay: Option<usize>,
    lon_v: Option<usize>,
    lat_v: Option<usize>,
    lon_a: Option<usize>,
    lat_a: Option<usize>,
    lanelet: Option<usize>,
    offset: Option<usize>,
    lane_change: Option<usize>,
    neighbors: [Option<usize>; 8],
}

impl TrackColumns {
    fn resolve(h: &Header) -> Result<TrackColumns> {
        let pair = |a: &str, b: &str| match (h.optional(a), h.optional(b)) {
            (Some(x), Some(y)) => (Some(x), Some(y)),
            _ => (None, None),
        };
        let (vx, vy) = pair("xVelocity", "yVelocity");
        let (ax, ay) = pair("xAcceleration", "yAcceleration");
        let (lon_v, lat_v) = pair("lonVelocity", "latVelocity");
        let (lon_a, lat_a) = pair("lonAcceleration", "latAcceleration");
        Ok(TrackColumns {
            id: h.required("trackId")?,
            frame: h.required("frame")?,
            x: h.required("xCenter")?,
            y: h.required("yCenter")?,
            heading: h.optional("heading"),
            vx,
            vy,
            ax,
            ay,
            lon_v,
            lat_v,
            lon_a,
            lat_a,
            lanelet: h.optional("laneletId"),
            offset: h.optional("latLaneCenterOffset"),
            lane_change: h.optional("laneChange"),
            neighbors: NEIGHBOR_COLUMNS.map(|c| h.optional(c)),
        })
    }

    fn fields(&self) -> TrackFields {
        let heading = self.heading.is_some();
        TrackFields {
            heading,
            velocity: self.vx.is_some() || (heading && self.lon_v.is_some()),
            acceleration: self.ax.is_some() || (heading && self.lon_a.is_some()),
            lanelet: self.lanelet.is_some(),
            offset: self.offset.is_some(),
            lane_change: self.lane_change.is_some(),
            neighbors: self.neighbors.iter().any(Option::is_some),
        }
    }
}

/// Rotates a (longitudinal, lateral) vector given in the vehicle frame to world axes.
fn body_to_world(lon: f64, lat: f64, heading: f64) -> Vec2 {
    let (s, c) = heading.sin_cos();
    Vec2::new(lon * c - lat * s, lon * s + lat * c)
}

fn parse_frame(row: &Row, cols: &TrackColumns) -> Result<TrackFrame> {
    let center = Vec2::new(row.f64(cols.x)?, row.f64(cols.y)?);
    let heading_deg = row.opt_f64(cols.heading)?.unwrap_or(f64::NAN);
    let heading = heading_deg.to_radians();
    let vector = |x: Option<usize>, y: Option<usize>, lon: Option<usize>, lat: Option<usize>| {
        if let (Some(x), Some(y)) = (x, y) {
            return Ok::<_, Error>(Vec2::new(row.f64(x)?, row.f64(y)?));
        }
        if let (Some(lon), Some(lat), true) = (lon, lat, heading.is_finite()) {
            return Ok(body_to_world(row.f64(lon)?, row.f64(lat)?, heading));
        }
        Ok(Vec2::new(f64::NAN, f64::NAN))
    };
    let velocity = vector(cols.vx, cols.vy, cols.lon_v, cols.lat_v)?;
    let acceleration = vector(cols.ax, cols.ay, cols.lon_a, cols.lat_a)?;
    let lanelet_ids: Vec<i64> = row.list(cols.lanelet)?;
    let lat_offsets: Vec<f64> = row.list(cols.offset)?;
    let n = [
        row.neighbor(cols.neighbors[0])?,
        row.neighbor(cols.neighbors[1])?,
        row.neighbor(cols.neighbors[2])?,
        row.neighbor(cols.neighbors[3])?,
        row.neighbor(cols.neighbors[4])?,
        row.neighbor(cols.neighbors[5])?,
        row.neighbor(cols.neighbors[6])?,
        row.neighbor(cols.neighbors[7])?,
    ];
    Ok(TrackFrame {
        frame: row.i64(cols.frame)?,
        center,
        heading_deg,
        velocity,
        acceleration,
        lanelet_id: lanelet_ids.first().copied(),
        lat_lane_center_offset: lat_offsets.first().copied(),
        lanelet_ids,
        lat_offsets,
        lane_change: row.flag(cols.lane_change)?,
        neighbors: NeighborIds {
            lead: n[0],
            rear: n[1],
            left_lead: n[2],
            right_lead: n[3],
            left_alongside: n[4],
            right_alongside: n[5],
            left_rear: n[6],
            right_rear: n[7],
        },
    })
}

/// Parses a tracks file and joins it with its per-track metadata.
pub fn parse_tracks(bytes: &[u8], metas: &[TrackMeta], timestep: f64) -> Result<Vec<Track>> {
    const FILE: &str = "tracks";
    let mut rdr = reader(bytes);
    let h = Header::read(FILE, &mut rdr)?;
    let cols = TrackColumns::resolve(&h)?;
    let fields = cols.fields();
    let mut by_track: BTreeMap<i64, Vec<TrackFrame>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let row = Row { file: FILE, line: line_of(&record), record: &record };
        let id = row.i64(cols.id)?;
        by_track.entry(id).or_default().push(parse_frame(&row, &cols)?);
    }
    let meta_by_id: BTreeMap<i64, &TrackMeta> = metas.iter().map(|m| (m.track_id, m)).collect();
    let mut tracks = Vec::with_capacity(by_track.len());
    for (id, mut frames) in by_track {
        let meta = meta_by_id
            .get(&id)
            .ok_or_else(|| Error::Integrity(format!("track {id}: no tracksMeta row")))?;
        frames.sort_by_key(|f| f.frame);
        for w in frames.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                return Err(Error::Integrity(format!(
                    "track {id}: non-contiguous frames {} -> {}",
                    w[0].frame, w[1].frame
                )));
            }
        }
        let (first, last) = (frames[0].frame, frames.last().unwrap().frame);
        if first != meta.first_frame || last != meta.last_frame {
            return Err(Error::Integrity(format!(
                "track {id}: frames {first}..={last} disagree with tracksMeta {}..={}",
                meta.first_frame, meta.last_frame
            )));
        }
        let mut track = Track {
            meta: (*meta).clone(),
            frames,
            fields,
            kinematics_incomplete: false,
        };
        if !fields.velocity || !fields.acceleration {
            derive_kinematics(&mut track, timestep);
        }
        // Whatever could not be supplied or derived becomes zero so downstream
        // arithmetic stays finite; heading follows the direction of motion.
        let mut last_heading = 0.0;
        for f in &mut track.frames {
            if !f.velocity.is_finite() {
                f.velocity = Vec2::ZERO;
            }
            if !f.acceleration.is_finite() {
                f.acceleration = Vec2::ZERO;
            }
            if !f.heading_deg.is_finite() {
                if f.velocity.norm() > 0.0 {
                    last_heading = f.velocity.y.atan2(f.velocity.x).to_degrees();
                }
                f.heading_deg = last_heading;
            } else {
                last_heading = f.heading_deg;
            }
        }
        tracks.push(track);
    }
    if let Some(m) = metas.iter().find(|m| !tracks.iter().any(|t| t.id() == m.track_id)) {
        return Err(Error::Integrity(format!("track {}: listed in tracksMeta but has no frames", m.track_id)));
    }
    Ok(tracks)
}

pub fn parse_recording(
    recording_csv: &[u8],
    tracks_meta_csv: &[u8],
    tracks_csv: &[u8],
) -> Result<(RecordingMeta, Vec<Track>)> {
    let meta = parse_recording_meta(recording_csv)?;
    let metas = parse_tracks_meta(tracks_meta_csv)?;
    let tracks = parse_tracks(tracks_csv, &metas, meta.timestep)?;
    Ok((meta, tracks))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn opt_id(id: Option<i64>) -> String {
    id.map_or_else(String::new, |v| v.to_string())
}

pub fn write_recording_meta<W: Write>(w: W, meta: &RecordingMeta) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["recordingId", "locationId", "frameRate", "xUtmOrigin", "yUtmOrigin"])?;
    wtr.write_record([
        meta.recording_id.to_string(),
        meta.location_id.to_string(),
        meta.frame_rate.to_string(),
        meta.origin_offset.x.to_string(),
        meta.origin_offset.y.to_string(),
    ])?;
    wtr.flush().map_err(|e| Error::io("recordingMeta", e))
}

pub fn write_tracks_meta<W: Write>(w: W, recording_id: i64, tracks: &[Track]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "recordingId",
        "trackId",
        "initialFrame",
        "finalFrame",
        "numFrames",
        "width",
        "length",
        "class",
    ])?;
    for t in tracks {
        let m = &t.meta;
        wtr.write_record([
            recording_id.to_string(),
            m.track_id.to_string(),
            m.first_frame.to_string(),
            m.last_frame.to_string(),
            (m.last_frame - m.first_frame + 1).to_string(),
            m.width.to_string(),
            m.length.to_string(),
            m.vehicle_class.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("tracksMeta", e))
}

/// Writes tracks with the full column set of [`TRACK_COLUMNS`]. Absent values are
/// written as empty cells; lanelet and offset cells keep their raw lists.
pub fn write_tracks<W: Write>(w: W, recording_id: i64, tracks: &[Track]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRACK_COLUMNS)?;
    for t in tracks {
        for f in &t.frames {
            let n = &f.neighbors;
            wtr.write_record([
                recording_id.to_string(),
                t.meta.track_id.to_string(),
                f.frame.to_string(),
                f.center.x.to_string(),
                f.center.y.to_string(),
                f.heading_deg.to_string(),
                f.velocity.x.to_string(),
                f.velocity.y.to_string(),
                f.acceleration.x.to_string(),
                f.acceleration.y.to_string(),
                join(&f.lanelet_ids),
                join(&f.lat_offsets),
                u8::from(f.lane_change).to_string(),
                opt_id(n.lead),
                opt_id(n.rear),
                opt_id(n.left_lead),
                opt_id(n.right_lead),
                opt_id(n.left_alongside),
                opt_id(n.right_alongside),
                opt_id(n.left_rear),
                opt_id(n.right_rear),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("tracks", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const REC: &str = "recordingId,locationId,frameRate,xUtmOrigin,yUtmOrigin\n7,2,25,100.5,-20\n";
    const META: &str = "recordingId,trackId,initialFrame,finalFrame,numFrames,width,length,class\n\
                        7,1,10,12,3,1.9,4.5,car\n";

    #[test]
    fn three_row_track() {
        let tracks = "trackId,frame,xCenter,yCenter,heading,xVelocity,yVelocity,xAcceleration,yAcceleration,laneletId,extra\n\
                      1,10,0,0,0,20,0,0,0,1500,x\n1,11,0.8,0,0,20,0,0,0,1500;1503,y\n1,12,1.6,0,0,20,0,0,0,,z\n";
        let (rec, ts) = parse_recording(REC.as_bytes(), META.as_bytes(), tracks.as_bytes()).unwrap();
        assert_eq!(rec.timestep, 0.04);
        assert_eq!(rec.origin_offset, Vec2::new(100.5, -20.0));
        assert_eq!(ts.len(), 1);
        let t = &ts[0];
        assert_eq!(t.frames.len(), 3);
        assert_eq!(t.frames[1].lanelet_ids, vec![1500, 1503]);
        assert_eq!(t.frames[2].lanelet_id, None);
        assert!(!t.fields.neighbors);
    }

    #[test]
    fn frame_gap_names_track() {
        let meta = "trackId,initialFrame,finalFrame,width,length,class\n4,10,12,2,4,car\n";
        let tracks = "trackId,frame,xCenter,yCenter\n4,10,0,0\n4,12,1,0\n";
        let err = parse_recording(REC.as_bytes(), meta.as_bytes(), tracks.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Integrity(ref m) if m.contains("track 4")), "{err}");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let tracks = "trackId,frame,xCenter\n1,10,0\n";
        let err = parse_tracks(tracks.as_bytes(), &[], 0.04).unwrap_err();
        match err {
            Error::Schema { column, .. } => assert_eq!(column, "yCenter"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn body_frame_velocity_is_rotated() {
        let tracks = "trackId,frame,xCenter,yCenter,heading,lonVelocity,latVelocity,lonAcceleration,latAcceleration\n\
                      1,10,0,0,90,10,1,0,0\n1,11,0,0.4,90,10,1,0,0\n1,12,0,0.8,90,10,1,0,0\n";
        let (_, ts) = parse_recording(REC.as_bytes(), META.as_bytes(), tracks.as_bytes()).unwrap();
        let v = ts[0].frames[0].velocity;
        assert!((v.x + 1.0).abs() < 1e-12 && (v.y - 10.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_neighbor_ids_are_absent() {
        let tracks = "trackId,frame,xCenter,yCenter,leadId,rearId,leftLeadId\n\
                      1,10,0,0,-1,0,5\n1,11,1,0,,3,5\n1,12,2,0,,,\n";
        let (_, ts) = parse_recording(REC.as_bytes(), META.as_bytes(), tracks.as_bytes()).unwrap();
        let n = ts[0].frames[0].neighbors;
        assert_eq!((n.lead, n.rear, n.left_lead), (None, None, Some(5)));
        assert_eq!(ts[0].frames[1].neighbors.rear, Some(3));
        assert!(ts[0].fields.neighbors);
    }
}
