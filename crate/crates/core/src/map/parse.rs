use std::collections::BTreeMap;
use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{Lanelet, LaneletMap, LineString, LineType, MapPoint};
use crate::error::{Error, Result};

fn tag<'a>(node: Node<'a, '_>, key: &str) -> Option<&'a str> {
    node.children()
        .filter(|c| c.has_tag_name("tag"))
        .find(|c| c.attribute("k") == Some(key))
        .and_then(|c| c.attribute("v"))
}

fn line_of(doc: &Document, node: Node) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn attr_i64(doc: &Document, node: Node, name: &str) -> Result<i64> {
    let raw = node.attribute(name).ok_or_else(|| Error::Xml {
        line: line_of(doc, node),
        message: format!("<{}> without `{name}`", node.tag_name().name()),
    })?;
    raw.trim().parse::<i64>().map_err(|_| Error::Xml {
        line: line_of(doc, node),
        message: format!("`{name}` is not an integer: {raw:?}"),
    })
}

fn parse_f64(doc: &Document, node: Node, raw: &str, what: &str) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Xml {
            line: line_of(doc, node),
            message: format!("{what} is not a finite number: {raw:?}"),
        }),
    }
}

/// Parses a lanelet2 OSM-XML document.
///
/// Nodes carrying `local_x`/`local_y` tags use those planar coordinates directly;
/// otherwise `lat`/`lon` are projected to UTM (zone taken from the first node).
/// Only relations tagged `type=lanelet` become lanelets; regulatory elements and
/// other relations are ignored.
pub fn parse_lanelet2(xml: &[u8]) -> Result<LaneletMap> {
    let text = std::str::from_utf8(xml).map_err(|e| Error::Xml {
        line: 1,
        message: format!("not valid UTF-8: {e}"),
    })?;
    if text.trim().is_empty() {
        return Err(Error::Integrity("empty map document: no lanelets".into()));
    }
    let doc = Document::parse(text).map_err(|e| Error::Xml {
        line: e.pos().row,
        message: e.to_string(),
    })?;

    let mut map = LaneletMap::default();
    let root = doc.root_element();

    for node in root.children().filter(|n| n.has_tag_name("node")) {
        let id = attr_i64(&doc, node, "id")?;
        let z = tag(node, "ele")
            .map(|v| parse_f64(&doc, node, v, "ele"))
            .transpose()?
            .unwrap_or(0.0);
        let (x, y) = match (tag(node, "local_x"), tag(node, "local_y")) {
            (Some(lx), Some(ly)) => (
                parse_f64(&doc, node, lx, "local_x")?,
                parse_f64(&doc, node, ly, "local_y")?,
            ),
            _ => {
                let lat = parse_f64(&doc, node, node.attribute("lat").unwrap_or(""), "lat")?;
                let lon = parse_f64(&doc, node, node.attribute("lon").unwrap_or(""), "lon")?;
                let zone = *map
                    .utm_zone
                    .get_or_insert_with(|| utm::lat_lon_to_zone_number(lat, lon));
                let (northing, easting, _) = utm::to_utm_wgs84(lat, lon, zone);
                (easting, northing)
            }
        };
        if map.points.insert(id, MapPoint { id, x, y, z }).is_some() {
            return Err(Error::Integrity(format!("duplicate point id {id}")));
        }
    }

    for way in root.children().filter(|n| n.has_tag_name("way")) {
        let id = attr_i64(&doc, way, "id")?;
        let point_ids = way
            .children()
            .filter(|c| c.has_tag_name("nd"))
            .map(|nd| attr_i64(&doc, nd, "ref"))
            .collect::<Result<Vec<_>>>()?;
        for pid in &point_ids {
            if !map.points.contains_key(pid) {
                return Err(Error::Integrity(format!(
                    "linestring {id} references missing point {pid}"
                )));
            }
        }
        let kind = tag(way, "type").map(str::to_owned);
        let subtype = tag(way, "subtype").map(str::to_owned);
        let line_type = LineType::from_tags(kind.as_deref(), subtype.as_deref());
        let ls = LineString {
            id,
            point_ids,
            line_type,
            kind,
            subtype,
        };
        if map.linestrings.insert(id, ls).is_some() {
            return Err(Error::Integrity(format!("duplicate linestring id {id}")));
        }
    }

    for rel in root.children().filter(|n| n.has_tag_name("relation")) {
        if tag(rel, "type") != Some("lanelet") {
            continue;
        }
        let id = attr_i64(&doc, rel, "id")?;
        let member = |role: &str| -> Result<i64> {
            let m = rel
                .children()
                .filter(|c| c.has_tag_name("member"))
                .find(|c| c.attribute("role") == Some(role))
                .ok_or_else(|| {
                    Error::Integrity(format!("lanelet {id} has no `{role}` boundary member"))
                })?;
            attr_i64(&doc, m, "ref")
        };
        let left_id = member("left")?;
        let right_id = member("right")?;
        let left = map.linestring_points(left_id).map_err(|_| {
            Error::Integrity(format!("lanelet {id} references missing linestring {left_id}"))
        })?;
        let right = map.linestring_points(right_id).map_err(|_| {
            Error::Integrity(format!("lanelet {id} references missing linestring {right_id}"))
        })?;
        let subtype = tag(rel, "subtype").map(str::to_owned);
        let ll = Lanelet::from_boundaries(id, left_id, right_id, subtype, &left, &right)?;
        if map.lanelets.insert(id, ll).is_some() {
            return Err(Error::Integrity(format!("duplicate lanelet id {id}")));
        }
    }

    if map.lanelets.is_empty() {
        return Err(Error::Integrity("map contains no lanelets".into()));
    }
    Ok(map)
}

/// Serializes points, linestrings and lanelets back to lanelet2 OSM XML using
/// `local_x`/`local_y` node tags. Lanelets are written with the boundary linestring
/// ids they were built from.
pub fn write_lanelet2(map: &LaneletMap) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"mergekit\">\n");
    for p in map.points.values() {
        let _ = writeln!(
            out,
            "  <node id=\"{}\" lat=\"0\" lon=\"0\">\n    <tag k=\"local_x\" v=\"{}\"/>\n    <tag k=\"local_y\" v=\"{}\"/>\n    <tag k=\"ele\" v=\"{}\"/>\n  </node>",
            p.id, p.x, p.y, p.z
        );
    }
    for ls in map.linestrings.values() {
        let _ = writeln!(out, "  <way id=\"{}\">", ls.id);
        for pid in &ls.point_ids {
            let _ = writeln!(out, "    <nd ref=\"{pid}\"/>");
        }
        let kind = ls.kind.clone().unwrap_or_else(|| match ls.line_type {
            LineType::Virtual => "virtual".into(),
            _ => "line_thin".into(),
        });
        let _ = writeln!(out, "    <tag k=\"type\" v=\"{kind}\"/>");
        let subtype = ls.subtype.clone().or(match ls.line_type {
            LineType::Solid => Some("solid".into()),
            LineType::Dashed => Some("dashed".into()),
            _ => None,
        });
        if let Some(st) = subtype {
            let _ = writeln!(out, "    <tag k=\"subtype\" v=\"{st}\"/>");
        }
        out.push_str("  </way>\n");
    }
    let mut by_id: BTreeMap<i64, &Lanelet> = BTreeMap::new();
    for ll in map.lanelets.values() {
        by_id.insert(ll.id, ll);
    }
    for ll in by_id.values() {
        let _ = writeln!(
            out,
            "  <relation id=\"{}\">\n    <member type=\"way\" ref=\"{}\" role=\"left\"/>\n    <member type=\"way\" ref=\"{}\" role=\"right\"/>\n    <tag k=\"type\" v=\"lanelet\"/>\n    <tag k=\"subtype\" v=\"{}\"/>\n  </relation>",
            ll.id,
            ll.left_id,
            ll.right_id,
            ll.subtype.as_deref().unwrap_or("road")
        );
    }
    out.push_str("</osm>\n");
    out
}
