use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LanePosition, LaneletMap};
use crate::error::{Error, Result};
use crate::geometry::{dedup_vertices, Polyline, Projection, Vec2};

pub const AREA_IDS: [u8; 5] = [1, 2, 3, 4, 5];

/// Small bit set over the five merging areas. One lanelet may belong to several.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AreaSet(u8);

impl AreaSet {
    pub const EMPTY: AreaSet = AreaSet(0);
    /// Areas 1-3: on-ramp junction and acceleration lane.
    pub const RAMP: AreaSet = AreaSet(0b00111);
    /// Areas 4-5: outer mainline lane.
    pub const MAINLINE: AreaSet = AreaSet(0b11000);

    pub fn of(areas: &[u8]) -> AreaSet {
        areas.iter().fold(AreaSet::EMPTY, |s, &a| s.with(a))
    }

    pub fn with(self, area: u8) -> AreaSet {
        debug_assert!((1..=5).contains(&area));
        AreaSet(self.0 | 1 << (area - 1))
    }

    pub fn contains(self, area: u8) -> bool {
        (1..=5).contains(&area) && self.0 & (1 << (area - 1)) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersects(self, other: AreaSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Lies in the ramp areas and in no mainline area.
    pub fn is_exclusive_ramp(self) -> bool {
        self.intersects(AreaSet::RAMP) && !self.intersects(AreaSet::MAINLINE)
    }

    pub fn is_mainline(self) -> bool {
        self.intersects(AreaSet::MAINLINE)
    }

    /// Highest ramp area number in the set, if any.
    pub fn ramp_rank(self) -> Option<u8> {
        [3u8, 2, 1].into_iter().find(|&a| self.contains(a))
    }
}

/// Layout configuration file (TOML). Keys of `locations` and `areas` are the numeric
/// location and area ids as strings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayoutFile {
    /// Allowed difference between configured and measured area lengths, meters.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    pub locations: BTreeMap<String, LocationLayout>,
}

fn default_tolerance() -> f64 {
    0.15
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LocationLayout {
    /// Map file for this location, relative to the layout file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<String>,
    pub areas: BTreeMap<String, AreaConfig>,
    /// Inner mainline lanelets; when listed, a follow-up lane change must end on one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AreaConfig {
    pub lanelets: Vec<i64>,
    /// Expected lanelet lengths, validated against the map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
}

impl LayoutFile {
    pub fn from_toml(text: &str) -> Result<LayoutFile> {
        toml::from_str(text).map_err(|e| Error::Config(format!("layout file: {e}")))
    }

    pub fn load(path: &Path) -> Result<LayoutFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LayoutFile::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("layout serializes")
    }

    pub fn location(&self, id: i64) -> Option<&LocationLayout> {
        self.locations.get(&id.to_string())
    }

    pub fn location_ids(&self) -> Result<Vec<i64>> {
        let mut ids = self
            .locations
            .keys()
            .map(|k| {
                k.parse::<i64>()
                    .map_err(|_| Error::Config(format!("location key {k:?} is not an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        ids.sort_unstable();
        Ok(ids)
    }
}

/// Ordered lanelets forming one longitudinal axis. Coordinates accumulate the
/// lengths of upstream members.
#[derive(Debug, Clone)]
pub struct Chain {
    ids: Vec<i64>,
    offsets: Vec<f64>,
    centerlines: Vec<Polyline>,
    index: HashMap<i64, usize>,
    length: f64,
}

impl Chain {
    pub fn new(map: &LaneletMap, ids: &[i64]) -> Result<Chain> {
        if ids.is_empty() {
            return Err(Error::Config("empty lanelet chain".into()));
        }
        let mut offsets = Vec::with_capacity(ids.len());
        let mut centerlines = Vec::with_capacity(ids.len());
        let mut index = HashMap::new();
        let mut acc = 0.0;
        for (i, id) in ids.iter().enumerate() {
            let ll = map
                .lanelet(*id)
                .ok_or_else(|| Error::Config(format!("unknown lanelet id {id}")))?;
            offsets.push(acc);
            acc += ll.length;
            centerlines.push(ll.centerline.clone());
            index.entry(*id).or_insert(i);
        }
        Ok(Chain {
            ids: ids.to_vec(),
            offsets,
            centerlines,
            index,
            length: acc,
        })
    }

    pub fn lanelet_ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn contains(&self, lanelet_id: i64) -> bool {
        self.index.contains_key(&lanelet_id)
    }

    /// Arc length of the start of a member lanelet.
    pub fn offset_of(&self, lanelet_id: i64) -> Option<f64> {
        self.index.get(&lanelet_id).map(|&i| self.offsets[i])
    }

    /// Chain coordinate of a lane position: `s` plus the lengths of all upstream members.
    pub fn coordinate(&self, pos: &LanePosition) -> Result<f64> {
        let &i = self.index.get(&pos.lanelet_id).ok_or_else(|| {
            Error::Domain(format!("lanelet {} is not part of the chain", pos.lanelet_id))
        })?;
        let len = self.centerlines[i].length();
        if !(pos.s >= -1e-9 && pos.s <= len + 1e-6) {
            return Err(Error::Domain(format!(
                "s = {} outside lanelet {} of length {len}",
                pos.s, pos.lanelet_id
            )));
        }
        Ok(self.offsets[i] + pos.s)
    }

    fn project_member(&self, i: usize, p: Vec2) -> Projection {
        let last = self.ids.len() - 1;
        let mut proj = self.centerlines[i].project_with(p, i == 0, i == last);
        proj.s += self.offsets[i];
        proj
    }

    /// Projects a point onto the chain; the chain is extended as a ray past both ends.
    pub fn project(&self, p: Vec2) -> Projection {
        (0..self.ids.len())
            .map(|i| self.project_member(i, p))
            .reduce(|best, cand| if cand.distance < best.distance { cand } else { best })
            .unwrap()
    }

    /// Chain coordinate of a point, using the member lanelet directly when the point
    /// is known to be on it.
    pub fn coordinate_of(&self, lanelet_id: Option<i64>, p: Vec2) -> f64 {
        match lanelet_id.and_then(|id| self.index.get(&id)) {
            Some(&i) => self.project_member(i, p).s,
            None => self.project(p).s,
        }
    }
}

/// The five labeled merging areas of one location.
#[derive(Debug, Clone)]
pub struct MergingAreaLayout {
    pub location_id: i64,
    pub area_lanelets: BTreeMap<u8, Vec<i64>>,
    pub area_length: BTreeMap<u8, f64>,
    /// Length of areas 2 and 3 together.
    pub merge_window_length: f64,
    pub inner_lanelets: Vec<i64>,
    membership: HashMap<i64, AreaSet>,
    acceleration: Chain,
    mainline: Chain,
    upstream: Option<Chain>,
    downstream: Chain,
    merge_boundary: Polyline,
}

impl MergingAreaLayout {
    pub fn areas_of(&self, lanelet_id: i64) -> AreaSet {
        self.membership.get(&lanelet_id).copied().unwrap_or_default()
    }

    pub fn is_inner(&self, lanelet_id: i64) -> bool {
        self.inner_lanelets.contains(&lanelet_id)
    }

    pub fn area_length(&self, area: u8) -> f64 {
        self.area_length.get(&area).copied().unwrap_or(0.0)
    }

    /// Areas 2+3: the acceleration lane segment where merging is permitted.
    pub fn acceleration_chain(&self) -> &Chain {
        &self.acceleration
    }

    /// Areas 4+5: the outer mainline lane, upstream to downstream.
    pub fn mainline_chain(&self) -> &Chain {
        &self.mainline
    }

    /// Area 4 alone, if configured.
    pub fn upstream_chain(&self) -> Option<&Chain> {
        self.upstream.as_ref()
    }

    /// Area 5 alone.
    pub fn downstream_chain(&self) -> &Chain {
        &self.downstream
    }

    /// Boundary between the acceleration lane and the mainline (left boundaries of
    /// the area 2 and 3 lanelets).
    pub fn merge_boundary(&self) -> &Polyline {
        &self.merge_boundary
    }

    /// Chain for an arbitrary set of areas, members in configured order.
    pub fn chain_for(&self, map: &LaneletMap, areas: &[u8]) -> Result<Chain> {
        let mut ids = Vec::new();
        for a in areas {
            ids.extend(self.area_lanelets.get(a).into_iter().flatten().copied());
        }
        Chain::new(map, &ids)
    }
}

/// Chain coordinate of `pos` along the lanelets of `areas` (in that order).
pub fn longitudinal_chain_coordinate(
    map: &LaneletMap,
    layout: &MergingAreaLayout,
    areas: &[u8],
    pos: &LanePosition,
) -> Result<f64> {
    layout.chain_for(map, areas)?.coordinate(pos)
}

/// Builds the labeled layout for one location and validates it against the map.
/// Returns non-fatal validation warnings alongside the layout.
pub fn load_layout(
    map: &LaneletMap,
    config: &LocationLayout,
    location_id: i64,
    tolerance: f64,
) -> Result<(MergingAreaLayout, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut area_lanelets: BTreeMap<u8, Vec<i64>> = BTreeMap::new();
    let mut area_length = BTreeMap::new();
    let mut membership: HashMap<i64, AreaSet> = HashMap::new();

    for (key, area_cfg) in &config.areas {
        let area = key
            .trim()
            .parse::<u8>()
            .ok()
            .filter(|a| AREA_IDS.contains(a))
            .ok_or_else(|| {
                Error::Config(format!(
                    "location {location_id}: area key {key:?} is not one of 1..5"
                ))
            })?;
        let mut total = 0.0;
        for (i, id) in area_cfg.lanelets.iter().enumerate() {
            let ll = map.lanelet(*id).ok_or_else(|| {
                Error::Config(format!(
                    "location {location_id} area {area}: unknown lanelet id {id}"
                ))
            })?;
            total += ll.length;
            let entry = membership.entry(*id).or_default();
            *entry = entry.with(area);
            if let Some(expected) = area_cfg.lengths.as_ref().and_then(|l| l.get(i)) {
                if (ll.length - expected).abs() > tolerance {
                    warnings.push(format!(
                        "location {location_id} area {area}: lanelet {id} measures {:.2} m, expected {expected:.2} m",
                        ll.length
                    ));
                }
            }
        }
        for w in area_cfg.lanelets.windows(2) {
            let a = &map.lanelets[&w[0]].centerline;
            let b = &map.lanelets[&w[1]].centerline;
            let gap = a.end().distance(b.start());
            if gap > 2.0 {
                warnings.push(format!(
                    "location {location_id} area {area}: lanelets {} and {} are not contiguous ({gap:.2} m apart)",
                    w[0], w[1]
                ));
            }
        }
        area_lanelets.insert(area, area_cfg.lanelets.clone());
        area_length.insert(area, total);
    }

    for required in [1u8, 2, 3, 5] {
        if area_lanelets.get(&required).is_none_or(Vec::is_empty) {
            return Err(Error::Config(format!(
                "location {location_id}: area {required} has no lanelets"
            )));
        }
    }
    for id in &config.inner {
        if map.lanelet(*id).is_none() {
            return Err(Error::Config(format!(
                "location {location_id}: unknown inner lanelet id {id}"
            )));
        }
    }

    let merge_window_length = area_length[&2] + area_length[&3];
    if !(merge_window_length > 0.0) {
        return Err(Error::Config(format!(
            "location {location_id}: merge window has zero length"
        )));
    }

    let ids = |areas: &[u8]| -> Vec<i64> {
        areas
            .iter()
            .flat_map(|a| area_lanelets.get(a).into_iter().flatten().copied())
            .collect()
    };
    let acceleration = Chain::new(map, &ids(&[2, 3]))?;
    let mainline = Chain::new(map, &ids(&[4, 5]))?;
    let upstream = match area_lanelets.get(&4) {
        Some(v) if !v.is_empty() => Some(Chain::new(map, v)?),
        _ => None,
    };
    let downstream = Chain::new(map, &area_lanelets[&5])?;

    let mut boundary = Vec::new();
    for id in ids(&[2, 3]) {
        boundary.extend_from_slice(&map.lanelets[&id].left);
    }
    let merge_boundary = Polyline::new(dedup_vertices(&boundary));

    Ok((
        MergingAreaLayout {
            location_id,
            area_lanelets,
            area_length,
            merge_window_length,
            inner_lanelets: config.inner.clone(),
            membership,
            acceleration,
            mainline,
            upstream,
            downstream,
            merge_boundary,
        },
        warnings,
    ))
}
