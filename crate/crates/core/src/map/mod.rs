//! Lane-level maps and the route graph derived from them.
//!
//! A map file is JSON with `meta`, `waypoints`, `lanes`, `connectors`,
//! `regions` and `signs` sections. Distances are meters, angles radians, in a
//! right-handed x/y plane.

mod routes;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{Polygon, Polyline, Vec2};

pub use routes::{build_routes, routes_conflict, Conflict, Route, RouteGraph, RouteKind};

pub const SCHEMA_VERSION: u32 = 1;
/// Maximum spacing between consecutive lane waypoints.
pub const MAX_WAYPOINT_SPACING: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("geometry error at {path}: {message}")]
    Geometry { path: String, message: String },
    #[error("reading map {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> MapError {
    MapError::Schema { path: path.into(), message: message.into() }
}

fn geometry(path: impl Into<String>, message: impl Into<String>) -> MapError {
    MapError::Geometry { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub schema_version: u32,
    pub map_id: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub lane_id: String,
}

impl Waypoint {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneKind {
    Driving,
    Shoulder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: String,
    pub road_id: String,
    pub waypoints: Vec<String>,
    pub width: f64,
    #[serde(default = "none_token")]
    pub left_marker: String,
    #[serde(default = "none_token")]
    pub right_marker: String,
    #[serde(default = "driving")]
    pub kind: LaneKind,
    #[serde(default)]
    pub left_neighbor: Option<String>,
    #[serde(default)]
    pub right_neighbor: Option<String>,
}

fn none_token() -> String {
    crate::dsl::NONE.to_string()
}

fn driving() -> LaneKind {
    LaneKind::Driving
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorKind {
    /// Path through a junction between two lanes.
    Junction,
    /// Declared lane change between adjacent lanes.
    LaneChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: ConnectorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub tags: Vec<String>,
    pub polygon: Vec<[f64; 2]>,
}

impl Region {
    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.polygon.iter().map(|p| Vec2::new(p[0], p[1])).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sign {
    pub id: String,
    pub token: String,
    pub x: f64,
    pub y: f64,
    pub lane_id: String,
    /// Numeric payload, e.g. the limit of a speed limit sign in m/s.
    #[serde(default)]
    pub value: Option<f64>,
}

impl Sign {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapFile {
    meta: MapMeta,
    waypoints: Vec<Waypoint>,
    lanes: Vec<Lane>,
    #[serde(default)]
    connectors: Vec<Connector>,
    #[serde(default)]
    regions: Vec<Region>,
    #[serde(default)]
    signs: Vec<Sign>,
}

/// A validated lane-level map.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneMap {
    pub meta: MapMeta,
    pub waypoints: BTreeMap<String, Waypoint>,
    pub lanes: BTreeMap<String, Lane>,
    pub connectors: Vec<Connector>,
    pub regions: Vec<Region>,
    pub signs: Vec<Sign>,
}

pub fn load_map(path: &Path) -> Result<LaneMap, MapError> {
    let text = std::fs::read_to_string(path).map_err(|source| MapError::Io { path: path.display().to_string(), source })?;
    LaneMap::from_json(&text)
}

impl LaneMap {
    pub fn from_json(text: &str) -> Result<Self, MapError> {
        let file: MapFile = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(f: MapFile) -> Result<Self, MapError> {
        if f.meta.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "meta.schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", f.meta.schema_version),
            ));
        }
        if f.meta.map_id.trim().is_empty() {
            return Err(schema("meta.map_id", "empty map id"));
        }
        if f.lanes.is_empty() {
            return Err(schema("lanes", "map has no lanes"));
        }
        let mut waypoints = BTreeMap::new();
        for (i, w) in f.waypoints.into_iter().enumerate() {
            let path = format!("waypoints[{i}]");
            if !(w.x.is_finite() && w.y.is_finite() && w.heading.is_finite()) {
                return Err(geometry(path, "non-finite coordinate"));
            }
            if !(-PI..PI).contains(&w.heading) {
                return Err(geometry(path, format!("heading {} outside [-pi, pi)", w.heading)));
            }
            if waypoints.contains_key(&w.id) {
                return Err(schema(path, format!("duplicate waypoint id `{}`", w.id)));
            }
            waypoints.insert(w.id.clone(), w);
        }
        let mut lanes = BTreeMap::new();
        for (i, lane) in f.lanes.into_iter().enumerate() {
            let path = format!("lanes[{i}]");
            if lanes.contains_key(&lane.id) {
                return Err(schema(path, format!("duplicate lane id `{}`", lane.id)));
            }
            if lane.width <= 0.0 || !lane.width.is_finite() {
                return Err(geometry(path, format!("lane width {} must be positive", lane.width)));
            }
            if lane.waypoints.len() < 2 {
                return Err(geometry(path, format!("lane `{}` has fewer than 2 waypoints", lane.id)));
            }
            for (j, wid) in lane.waypoints.iter().enumerate() {
                let w = waypoints
                    .get(wid)
                    .ok_or_else(|| schema(format!("{path}.waypoints[{j}]"), format!("unknown waypoint `{wid}`")))?;
                if w.lane_id != lane.id {
                    return Err(schema(
                        format!("{path}.waypoints[{j}]"),
                        format!("waypoint `{wid}` belongs to lane `{}`", w.lane_id),
                    ));
                }
            }
            for (j, pair) in lane.waypoints.windows(2).enumerate() {
                let d = waypoints[&pair[0]].position().distance(waypoints[&pair[1]].position());
                if d > MAX_WAYPOINT_SPACING + 1e-6 {
                    return Err(geometry(
                        format!("{path}.waypoints[{j}..{}]", j + 1),
                        format!("spacing {d:.3} m exceeds {MAX_WAYPOINT_SPACING} m"),
                    ));
                }
                if d == 0.0 {
                    return Err(geometry(format!("{path}.waypoints[{j}..{}]", j + 1), "coincident waypoints"));
                }
            }
            lanes.insert(lane.id.clone(), lane);
        }
        for (id, lane) in &lanes {
            for n in [&lane.left_neighbor, &lane.right_neighbor].into_iter().flatten() {
                if !lanes.contains_key(n) {
                    return Err(schema(format!("lanes[{id}]"), format!("unknown neighbor lane `{n}`")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (i, c) in f.connectors.iter().enumerate() {
            let path = format!("connectors[{i}]");
            if lanes.contains_key(&c.id) || !seen.insert(c.id.clone()) {
                return Err(schema(path, format!("duplicate connector id `{}`", c.id)));
            }
            for end in [&c.from, &c.to] {
                if !waypoints.contains_key(end) {
                    return Err(schema(path.clone(), format!("unknown waypoint `{end}`")));
                }
            }
            if c.from == c.to {
                return Err(geometry(path, "connector starts and ends at the same waypoint"));
            }
        }
        for (i, r) in f.regions.iter().enumerate() {
            if r.polygon.len() < 3 {
                return Err(geometry(format!("regions[{i}]"), "polygon needs at least 3 vertices"));
            }
        }
        for (i, s) in f.signs.iter().enumerate() {
            if !lanes.contains_key(&s.lane_id) {
                return Err(schema(format!("signs[{i}]"), format!("unknown lane `{}`", s.lane_id)));
            }
        }
        Ok(LaneMap { meta: f.meta, waypoints, lanes, connectors: f.connectors, regions: f.regions, signs: f.signs })
    }

    pub fn id(&self) -> &str {
        &self.meta.map_id
    }

    pub fn lane_polyline(&self, lane_id: &str) -> Option<Polyline> {
        let lane = self.lanes.get(lane_id)?;
        Some(Polyline::new(lane.waypoints.iter().map(|w| self.waypoints[w].position()).collect()))
    }

    /// Driving lane whose centerline is nearest to `p` among lanes running
    /// roughly along `heading` and containing `p` within their width.
    pub fn locate_lane(&self, p: Vec2, heading: f64) -> Option<(String, f64)> {
        let dir = Vec2::from_angle(heading);
        let mut best: Option<(String, f64)> = None;
        for (id, lane) in &self.lanes {
            if lane.kind != LaneKind::Driving {
                continue;
            }
            let pl = self.lane_polyline(id)?;
            let proj = pl.project(p);
            let (_, lane_heading) = pl.sample(proj.s);
            if Vec2::from_angle(lane_heading).dot(dir) < 0.5 {
                continue;
            }
            // off the ends of the lane
            let (foot, _) = pl.sample(proj.s);
            if (proj.s <= 1e-9 || proj.s >= pl.length() - 1e-9) && foot.distance(p) > proj.offset.abs() + 1e-6 {
                continue;
            }
            if proj.offset.abs() > lane.width / 2.0 {
                continue;
            }
            if best.as_ref().is_none_or(|(_, o)| proj.offset.abs() < o.abs()) {
                best = Some((id.clone(), proj.offset));
            }
        }
        best
    }
}
