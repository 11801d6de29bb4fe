use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{ConnectorKind, LaneMap, MapError};
use crate::geometry::{point_segment_distance, segments_cross_interior, wrap_angle, Polygon, Vec2};

/// Signs attach to the nearest route of their lane within this distance.
pub const SIGN_ATTACH_WINDOW: f64 = 15.0;
const GRID_CELL: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    Lane,
    Junction,
    LaneChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachedSign {
    pub sign_id: String,
    pub token: String,
    pub position: Vec2,
    pub value: Option<f64>,
}

/// Directed segment between two adjacent waypoints, plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    pub kind: RouteKind,
    pub start: String,
    pub end: String,
    pub start_pos: Vec2,
    pub end_pos: Vec2,
    pub length: f64,
    pub direction: Vec2,
    /// Lane of the route; for connectors, the lane they leave.
    pub lane_id: String,
    pub left_marker: String,
    pub right_marker: String,
    pub lane_width: f64,
    pub predecessors: Vec<String>,
    pub successors: Vec<String>,
    pub signs: Vec<AttachedSign>,
    pub region_tags: BTreeSet<String>,
    /// Ids of the regions containing the midpoint.
    pub regions: Vec<String>,
}

impl Route {
    pub fn midpoint(&self) -> Vec2 {
        (self.start_pos + self.end_pos) * 0.5
    }

    pub fn has_sign(&self, token: &str) -> bool {
        self.signs.iter().any(|s| s.token == token)
    }

    pub fn sign_tokens(&self) -> impl Iterator<Item = &str> {
        self.signs.iter().map(|s| s.token.as_str())
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        point_segment_distance(p, self.start_pos, self.end_pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conflict {
    Crossing,
    Merging,
    None,
}

/// All routes of a map with adjacency and spatial indexes.
#[derive(Debug, Clone)]
pub struct RouteGraph {
    map: LaneMap,
    routes: Vec<Route>,
    index: HashMap<String, usize>,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

fn cell_of(p: Vec2) -> (i64, i64) {
    ((p.x / GRID_CELL).floor() as i64, (p.y / GRID_CELL).floor() as i64)
}

/// Derives the route graph of a validated map.
pub fn build_routes(map: &LaneMap) -> RouteGraph {
    let mut routes = Vec::new();
    for (lane_id, lane) in &map.lanes {
        for (k, pair) in lane.waypoints.windows(2).enumerate() {
            routes.push(new_route(map, format!("{lane_id}#{k:03}"), RouteKind::Lane, &pair[0], &pair[1], lane_id));
        }
    }
    for c in &map.connectors {
        let kind = match c.kind {
            ConnectorKind::Junction => RouteKind::Junction,
            ConnectorKind::LaneChange => RouteKind::LaneChange,
        };
        let lane_id = map.waypoints[&c.from].lane_id.clone();
        let mut r = new_route(map, c.id.clone(), kind, &c.from, &c.to, &lane_id);
        if kind == RouteKind::Junction {
            r.left_marker = crate::dsl::NONE.into();
            r.right_marker = crate::dsl::NONE.into();
        }
        routes.push(r);
    }
    routes.sort_by(|a, b| a.id.cmp(&b.id));

    let mut by_start: HashMap<String, Vec<usize>> = HashMap::new();
    let mut by_end: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, r) in routes.iter().enumerate() {
        by_start.entry(r.start.clone()).or_default().push(i);
        by_end.entry(r.end.clone()).or_default().push(i);
    }
    let ids: Vec<String> = routes.iter().map(|r| r.id.clone()).collect();
    for (i, r) in routes.iter_mut().enumerate() {
        r.successors = by_start.get(&r.end).into_iter().flatten().filter(|j| **j != i).map(|j| ids[*j].clone()).collect();
        r.predecessors = by_end.get(&r.start).into_iter().flatten().filter(|j| **j != i).map(|j| ids[*j].clone()).collect();
    }

    let polygons: Vec<Polygon> = map.regions.iter().map(|r| r.polygon()).collect();
    for r in routes.iter_mut() {
        let mid = r.midpoint();
        for (region, poly) in map.regions.iter().zip(&polygons) {
            if poly.contains(mid) {
                r.region_tags.extend(region.tags.iter().cloned());
                r.regions.push(region.id.clone());
            }
        }
    }

    for sign in &map.signs {
        let p = sign.position();
        let best = routes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == RouteKind::Lane && r.lane_id == sign.lane_id)
            .map(|(i, r)| (i, r.distance_to(p)))
            .filter(|(_, d)| *d <= SIGN_ATTACH_WINDOW)
            // ties go to the upstream route (lower index within the lane)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        if let Some((i, _)) = best {
            routes[i].signs.push(AttachedSign {
                sign_id: sign.id.clone(),
                token: sign.token.clone(),
                position: p,
                value: sign.value,
            });
        }
    }

    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, r) in routes.iter().enumerate() {
        let (c0, c1) = (cell_of(r.start_pos), cell_of(r.end_pos));
        for cx in c0.0.min(c1.0)..=c0.0.max(c1.0) {
            for cy in c0.1.min(c1.1)..=c0.1.max(c1.1) {
                grid.entry((cx, cy)).or_default().push(i);
            }
        }
    }

    let index = routes.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    RouteGraph { map: map.clone(), routes, index, grid }
}

fn new_route(map: &LaneMap, id: String, kind: RouteKind, from: &str, to: &str, lane_id: &str) -> Route {
    let a = map.waypoints[from].position();
    let b = map.waypoints[to].position();
    let lane = &map.lanes[lane_id];
    Route {
        id,
        kind,
        start: from.to_string(),
        end: to.to_string(),
        start_pos: a,
        end_pos: b,
        length: a.distance(b),
        direction: (b - a).normalized(),
        lane_id: lane_id.to_string(),
        left_marker: lane.left_marker.clone(),
        right_marker: lane.right_marker.clone(),
        lane_width: lane.width,
        predecessors: Vec::new(),
        successors: Vec::new(),
        signs: Vec::new(),
        region_tags: BTreeSet::new(),
        regions: Vec::new(),
    }
}

/// Crossing iff the segments meet at a point interior to both; merging iff
/// distinct routes share their end waypoint. Symmetric.
pub fn routes_conflict(a: &Route, b: &Route) -> Conflict {
    if a.id == b.id {
        return Conflict::None;
    }
    if segments_cross_interior(a.start_pos, a.end_pos, b.start_pos, b.end_pos) {
        Conflict::Crossing
    } else if a.end == b.end {
        Conflict::Merging
    } else {
        Conflict::None
    }
}

impl RouteGraph {
    pub fn map(&self) -> &LaneMap {
        &self.map
    }

    pub fn map_id(&self) -> &str {
        self.map.id()
    }

    /// Routes sorted by id.
    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn route(&self, id: &str) -> Option<&Route> {
        self.index.get(id).map(|i| &self.routes[*i])
    }

    pub fn get(&self, id: &str) -> Result<&Route, MapError> {
        self.route(id).ok_or_else(|| MapError::Schema { path: "routes".into(), message: format!("unknown route `{id}`") })
    }

    /// All routes with an endpoint within `radius` of the center route's segment, sorted by id.
    pub fn routes_within(&self, center: &str, radius: f64) -> Result<Vec<String>, MapError> {
        let c = self.get(center)?;
        let lo = Vec2::new(c.start_pos.x.min(c.end_pos.x) - radius, c.start_pos.y.min(c.end_pos.y) - radius);
        let hi = Vec2::new(c.start_pos.x.max(c.end_pos.x) + radius, c.start_pos.y.max(c.end_pos.y) + radius);
        let (c0, c1) = (cell_of(lo), cell_of(hi));
        let mut hits = BTreeSet::new();
        for cx in c0.0..=c1.0 {
            for cy in c0.1..=c1.1 {
                for &i in self.grid.get(&(cx, cy)).into_iter().flatten() {
                    let r = &self.routes[i];
                    let d = point_segment_distance(r.start_pos, c.start_pos, c.end_pos).min(point_segment_distance(
                        r.end_pos,
                        c.start_pos,
                        c.end_pos,
                    ));
                    if d <= radius {
                        hits.insert(i);
                    }
                }
            }
        }
        Ok(hits.into_iter().map(|i| self.routes[i].id.clone()).collect())
    }

    /// The predecessor used for heading and placement: a same-lane route when
    /// one exists, otherwise the lowest id.
    pub fn primary_predecessor(&self, r: &Route) -> Option<&Route> {
        self.primary_of(r, &r.predecessors)
    }

    pub fn primary_successor(&self, r: &Route) -> Option<&Route> {
        self.primary_of(r, &r.successors)
    }

    fn primary_of<'a>(&'a self, r: &Route, ids: &[String]) -> Option<&'a Route> {
        let cands: Vec<&Route> = ids.iter().filter_map(|id| self.route(id)).collect();
        cands
            .iter()
            .find(|c| c.kind == RouteKind::Lane && c.lane_id == r.lane_id)
            .or_else(|| cands.iter().find(|c| c.kind == RouteKind::Lane))
            .or_else(|| cands.first())
            .copied()
    }

    /// Signed heading change (radians, left positive) from the route's
    /// approach to its exit. Zero when either side is missing.
    pub fn heading_change(&self, r: &Route) -> f64 {
        match (self.primary_predecessor(r), self.primary_successor(r)) {
            (Some(p), Some(s)) => wrap_angle(s.direction.angle() - p.direction.angle()),
            _ => 0.0,
        }
    }

    /// Direction an actor on this route came from: for connectors the
    /// direction of the feeding lane, otherwise the route's own direction.
    pub fn approach_direction(&self, r: &Route) -> Vec2 {
        if r.kind == RouteKind::Lane {
            return r.direction;
        }
        self.primary_predecessor(r).map_or(r.direction, |p| p.direction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn lane_map() -> LaneMap {
        // one 5-waypoint lane going east, a region around its third route
        let wps: Vec<_> = (0..5)
            .map(|i| json!({"id": format!("w{i}"), "x": 10.0 * i as f64, "y": 0.0, "heading": 0.0, "lane_id": "l"}))
            .collect();
        let j = json!({
            "meta": {"schema_version": 1, "map_id": "t"},
            "waypoints": wps,
            "lanes": [{"id": "l", "road_id": "r", "waypoints": ["w0","w1","w2","w3","w4"], "width": 3.5}],
            "regions": [{"id": "j", "tags": ["intersection"], "polygon": [[20.0,-5.0],[30.0,-5.0],[30.0,5.0],[20.0,5.0]]}],
            "signs": [{"id": "s", "token": "stop sign", "x": 19.0, "y": -3.0, "lane_id": "l"}],
        });
        LaneMap::from_json(&j.to_string()).unwrap()
    }

    #[test]
    fn lane_routes_chain() {
        let g = build_routes(&lane_map());
        assert_eq!(g.len(), 4);
        let ids: Vec<&str> = g.routes().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["l#000", "l#001", "l#002", "l#003"]);
        for r in g.routes() {
            for s in &r.successors {
                let s = g.route(s).unwrap();
                assert_eq!(s.start, r.end);
                assert!(s.predecessors.contains(&r.id));
            }
            assert!((r.length - r.start_pos.distance(r.end_pos)).abs() < 1e-6);
        }
        assert_eq!(g.route("l#000").unwrap().successors, vec!["l#001".to_string()]);
    }

    #[test]
    fn midpoint_region_and_sign_attachment() {
        let g = build_routes(&lane_map());
        assert!(g.route("l#002").unwrap().region_tags.contains("intersection"));
        assert!(g.route("l#001").unwrap().region_tags.is_empty());
        // sign near w2 is equidistant-ish; nearest segment is l#001
        assert!(g.route("l#001").unwrap().has_sign("stop sign"));
        assert!(!g.route("l#002").unwrap().has_sign("stop sign"));
    }

    #[test]
    fn routes_within_small_radius_is_self() {
        let g = build_routes(&lane_map());
        // the neighbors share endpoints, so even a tiny radius includes them
        assert_eq!(g.routes_within("l#001", 0.1).unwrap(), ["l#000", "l#001", "l#002"]);
        assert!(g.routes_within("nope", 1.0).is_err());
    }
}
