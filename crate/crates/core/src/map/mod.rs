//! Lanelet2 map model: points, linestrings and lanelets with derived centerlines,
//! plus the labeled merging-area layout built on top of them.

mod layout;
mod parse;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dedup_vertices, point_in_polygon, resample, BBox, Polyline, Vec2};

pub use layout::{
    load_layout, longitudinal_chain_coordinate, AreaConfig, AreaSet, Chain, LayoutFile,
    LocationLayout, MergingAreaLayout, AREA_IDS,
};
pub use parse::{parse_lanelet2, write_lanelet2};

/// Minimum number of resampled vertices used to build a centerline.
pub const CENTERLINE_MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MapPoint {
    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineType {
    Solid,
    Dashed,
    Virtual,
    Other,
}

impl LineType {
    /// Maps lanelet2 `type`/`subtype` tags onto the coarse line classes.
    pub fn from_tags(kind: Option<&str>, subtype: Option<&str>) -> LineType {
        if kind == Some("virtual") {
            return LineType::Virtual;
        }
        match subtype {
            Some(s) if s.contains("dashed") => LineType::Dashed,
            Some(s) if s.contains("solid") => LineType::Solid,
            _ => LineType::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineString {
    pub id: i64,
    pub point_ids: Vec<i64>,
    pub line_type: LineType,
    pub kind: Option<String>,
    pub subtype: Option<String>,
}

/// An atomic lane segment bounded by a left and a right linestring.
#[derive(Debug, Clone)]
pub struct Lanelet {
    pub id: i64,
    pub left_id: i64,
    pub right_id: i64,
    pub subtype: Option<String>,
    /// Left boundary resampled to the centerline vertex count.
    pub left: Vec<Vec2>,
    /// Right boundary resampled and oriented like the left one.
    pub right: Vec<Vec2>,
    pub centerline: Polyline,
    pub length: f64,
    bbox: BBox,
}

impl Lanelet {
    /// Builds the derived geometry from raw boundary vertices. The right boundary is
    /// reversed when it runs against the left one.
    pub fn from_boundaries(
        id: i64,
        left_id: i64,
        right_id: i64,
        subtype: Option<String>,
        left_raw: &[Vec2],
        right_raw: &[Vec2],
    ) -> Result<Lanelet> {
        let left_pts = dedup_vertices(left_raw);
        let mut right_pts = dedup_vertices(right_raw);
        if left_pts.len() < 2 || right_pts.len() < 2 {
            return Err(Error::Integrity(format!(
                "lanelet {id}: boundary with fewer than two distinct points"
            )));
        }
        let (l0, ln) = (left_pts[0], *left_pts.last().unwrap());
        let (r0, rn) = (right_pts[0], *right_pts.last().unwrap());
        if l0.distance(r0) + ln.distance(rn) > l0.distance(rn) + ln.distance(r0) {
            right_pts.reverse();
        }
        let n = left_pts.len().max(right_pts.len()).max(CENTERLINE_MIN_SAMPLES);
        let left = resample(&left_pts, n);
        let right = resample(&right_pts, n);
        let center: Vec<Vec2> = left
            .iter()
            .zip(&right)
            .map(|(&l, &r)| l.lerp(r, 0.5))
            .collect();
        let center = dedup_vertices(&center);
        if center.len() < 2 {
            return Err(Error::Integrity(format!("lanelet {id}: degenerate centerline")));
        }
        let centerline = Polyline::new(center);
        let length = centerline.length();
        if !(length > 0.0) {
            return Err(Error::Integrity(format!("lanelet {id}: zero length")));
        }
        let mut all = left.clone();
        all.extend_from_slice(&right);
        let bbox = BBox::of(&all);
        Ok(Lanelet {
            id,
            left_id,
            right_id,
            subtype,
            left,
            right,
            centerline,
            length,
            bbox,
        })
    }

    /// Containment in the strip of quadrilaterals between the two boundaries.
    pub fn contains(&self, p: Vec2) -> bool {
        if !self.bbox.contains(p, 1e-9) {
            return false;
        }
        (0..self.left.len() - 1).any(|i| {
            let quad = [self.left[i], self.left[i + 1], self.right[i + 1], self.right[i]];
            point_in_polygon(&quad, p)
        })
    }

    /// Closed outline: left boundary followed by the reversed right boundary.
    pub fn outline(&self) -> Vec<Vec2> {
        let mut out = self.left.clone();
        out.extend(self.right.iter().rev());
        out
    }

    pub fn position_of(&self, p: Vec2) -> LanePosition {
        let proj = self.centerline.project(p, false);
        LanePosition {
            lanelet_id: self.id,
            s: proj.s,
            lateral_offset: proj.offset,
        }
    }
}

/// Position of a point relative to one lanelet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanePosition {
    pub lanelet_id: i64,
    /// Arc length from the lanelet start along its centerline.
    pub s: f64,
    /// Signed distance to the centerline, positive toward the left boundary.
    pub lateral_offset: f64,
}

/// A parsed lanelet2 map. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct LaneletMap {
    pub points: BTreeMap<i64, MapPoint>,
    pub linestrings: BTreeMap<i64, LineString>,
    pub lanelets: BTreeMap<i64, Lanelet>,
    /// UTM zone used when node coordinates came from lat/lon.
    pub utm_zone: Option<u8>,
}

impl LaneletMap {
    pub fn lanelet(&self, id: i64) -> Option<&Lanelet> {
        self.lanelets.get(&id)
    }

    pub fn linestring_points(&self, id: i64) -> Result<Vec<Vec2>> {
        let ls = self
            .linestrings
            .get(&id)
            .ok_or_else(|| Error::Integrity(format!("dangling linestring reference {id}")))?;
        ls.point_ids
            .iter()
            .map(|pid| {
                self.points
                    .get(pid)
                    .map(MapPoint::xy)
                    .ok_or_else(|| Error::Integrity(format!("dangling point reference {pid}")))
            })
            .collect()
    }

    /// Copy of the map shifted by `-origin`, e.g. to move UTM coordinates into a
    /// recording's local frame.
    pub fn translated(&self, origin: Vec2) -> Result<LaneletMap> {
        if origin == Vec2::ZERO {
            return Ok(self.clone());
        }
        let mut out = LaneletMap {
            points: self.points.clone(),
            linestrings: self.linestrings.clone(),
            lanelets: BTreeMap::new(),
            utm_zone: self.utm_zone,
        };
        for p in out.points.values_mut() {
            p.x -= origin.x;
            p.y -= origin.y;
        }
        for ll in self.lanelets.values() {
            let left = out.linestring_points(ll.left_id)?;
            let right = out.linestring_points(ll.right_id)?;
            let rebuilt = Lanelet::from_boundaries(
                ll.id,
                ll.left_id,
                ll.right_id,
                ll.subtype.clone(),
                &left,
                &right,
            )?;
            out.lanelets.insert(ll.id, rebuilt);
        }
        Ok(out)
    }

    /// Map-matches a point. Among lanelets whose boundary strip contains the point the
    /// one whose centerline tangent best agrees with `heading` (radians) wins; ties and
    /// missing headings fall back to the smallest lateral offset, then the lower id.
    pub fn locate(&self, x: f64, y: f64, heading: Option<f64>) -> Option<LanePosition> {
        let p = Vec2::new(x, y);
        let mut best: Option<(f64, f64, LanePosition)> = None;
        for ll in self.lanelets.values() {
            if !ll.contains(p) {
                continue;
            }
            let pos = ll.position_of(p);
            let alignment = match heading {
                Some(h) if h.is_finite() => {
                    let t = ll.centerline.tangent_at(pos.s);
                    t.dot(Vec2::new(h.cos(), h.sin()))
                }
                _ => 0.0,
            };
            let better = match &best {
                None => true,
                Some((ba, bo, _)) => {
                    alignment > ba + 1e-9
                        || ((alignment - ba).abs() <= 1e-9 && pos.lateral_offset.abs() < bo - 1e-12)
                }
            };
            if better {
                best = Some((alignment, pos.lateral_offset.abs(), pos));
            }
        }
        best.map(|(_, _, pos)| pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(id: i64, y_right: f64, x0: f64, x1: f64) -> Lanelet {
        Lanelet::from_boundaries(
            id,
            id * 10,
            id * 10 + 1,
            None,
            &[Vec2::new(x0, y_right + 3.5), Vec2::new(x1, y_right + 3.5)],
            &[Vec2::new(x0, y_right), Vec2::new(x1, y_right)],
        )
        .unwrap()
    }

    fn toy() -> LaneletMap {
        let mut map = LaneletMap::default();
        for ll in [straight(1, 0.0, 0.0, 100.0), straight(2, 3.5, 0.0, 100.0)] {
            map.lanelets.insert(ll.id, ll);
        }
        map
    }

    #[test]
    fn centerline_is_mean_of_boundaries() {
        let ll = straight(1, 0.0, 0.0, 100.0);
        assert!((ll.length - 100.0).abs() < 1e-9);
        assert_eq!(ll.centerline.points().len(), CENTERLINE_MIN_SAMPLES);
        for p in ll.centerline.points() {
            assert!((p.y - 1.75).abs() < 1e-12);
        }
    }

    #[test]
    fn reversed_right_boundary_is_realigned() {
        let ll = Lanelet::from_boundaries(
            7,
            1,
            2,
            None,
            &[Vec2::new(0.0, 3.5), Vec2::new(50.0, 3.5)],
            &[Vec2::new(50.0, 0.0), Vec2::new(0.0, 0.0)],
        )
        .unwrap();
        assert!((ll.length - 50.0).abs() < 1e-9);
        assert!(ll.contains(Vec2::new(25.0, 1.0)));
    }

    #[test]
    fn locate_on_centerline_and_offset() {
        let map = toy();
        let on = map.locate(50.0, 1.75, Some(0.0)).unwrap();
        assert_eq!(on.lanelet_id, 1);
        assert!(on.lateral_offset.abs() < 1e-9);
        assert!((on.s - 50.0).abs() < 1e-6);
        let left = map.locate(30.0, 2.75, None).unwrap();
        assert_eq!(left.lanelet_id, 1);
        assert!((left.lateral_offset - 1.0).abs() < 1e-9);
        assert!(map.locate(30.0, -0.5, None).is_none());
    }

    #[test]
    fn locate_prefers_heading_match() {
        let mut map = toy();
        // Opposite-direction lanelet overlapping lanelet 1.
        let rev = Lanelet::from_boundaries(
            3,
            30,
            31,
            None,
            &[Vec2::new(100.0, 0.0), Vec2::new(0.0, 0.0)],
            &[Vec2::new(100.0, 3.5), Vec2::new(0.0, 3.5)],
        )
        .unwrap();
        map.lanelets.insert(3, rev);
        assert_eq!(map.locate(40.0, 1.0, Some(0.0)).unwrap().lanelet_id, 1);
        assert_eq!(
            map.locate(40.0, 1.0, Some(std::f64::consts::PI)).unwrap().lanelet_id,
            3
        );
    }
}
