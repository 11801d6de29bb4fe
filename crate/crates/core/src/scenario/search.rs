//! Dictionary search over route metadata and the hierarchical ego/NPC route search.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{GenError, GeneratorConfig, Pose};
use crate::dsl::{Actor, RoadNetwork, EGO_VEHICLE, NONE};
use crate::geometry::{segment_intersection, Vec2};
use crate::map::{routes_conflict, Conflict, LaneKind, Route, RouteGraph, RouteKind};

/// How many predecessor routes upstream a required sign may sit.
pub const SIGN_LOOKBACK: usize = 2;
/// Depth bound for the "same route chain" relation.
const CHAIN_DEPTH: usize = 6;
const EPS: f64 = 1e-6;

/// What a position-reference token denotes on a particular map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reference {
    Unspecified,
    EgoVehicle,
    Region(String),
    Sign(String),
    Marker(String),
    /// Not present on this map; never satisfiable.
    Absent(String),
}

impl Reference {
    pub fn classify(graph: &RouteGraph, token: &str) -> Self {
        let map = graph.map();
        if token == NONE {
            Reference::Unspecified
        } else if token == EGO_VEHICLE {
            Reference::EgoVehicle
        } else if map.regions.iter().any(|r| r.tags.iter().any(|t| t == token)) {
            Reference::Region(token.into())
        } else if map.signs.iter().any(|s| s.token == token) {
            Reference::Sign(token.into())
        } else if map.lanes.values().any(|l| l.left_marker == token || l.right_marker == token) {
            Reference::Marker(token.into())
        } else {
            Reference::Absent(token.into())
        }
    }
}

/// Routes reachable by following links `depth` steps, excluding `r` itself.
fn walk<'a>(graph: &'a RouteGraph, r: &Route, depth: usize, forward: bool) -> Vec<&'a Route> {
    let mut seen = BTreeSet::from([r.id.clone()]);
    let mut out = Vec::new();
    let mut queue = VecDeque::from([(r.id.clone(), 0usize)]);
    while let Some((id, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        let Some(cur) = graph.route(&id) else { continue };
        let next = if forward { &cur.successors } else { &cur.predecessors };
        for n in next {
            if seen.insert(n.clone()) {
                if let Some(route) = graph.route(n) {
                    out.push(route);
                    queue.push_back((n.clone(), d + 1));
                }
            }
        }
    }
    out
}

fn sign_upstream(graph: &RouteGraph, r: &Route, token: &str) -> bool {
    r.has_sign(token) || walk(graph, r, SIGN_LOOKBACK, false).iter().any(|p| p.has_sign(token))
}

/// Routes whose metadata contains every road-network element, sorted by id.
pub fn filter_routes(graph: &RouteGraph, rn: &RoadNetwork) -> Vec<String> {
    graph
        .routes()
        .iter()
        .filter(|r| rn.road_type == NONE || r.region_tags.contains(&rn.road_type))
        .filter(|r| rn.road_marker == NONE || r.left_marker == rn.road_marker || r.right_marker == rn.road_marker)
        .filter(|r| rn.traffic_signs.iter().all(|s| sign_upstream(graph, r, s)))
        .map(|r| r.id.clone())
        .collect()
}

fn lane_of_waypoint<'a>(graph: &'a RouteGraph, wp: &str) -> &'a str {
    &graph.map().waypoints[wp].lane_id
}

/// Topology test for a behavior token. `ego` is the ego route when
/// checking an NPC, `None` when checking the ego itself.
pub fn behavior_matches(graph: &RouteGraph, cfg: &GeneratorConfig, route: &Route, behavior: &str, ego: Option<&Route>) -> bool {
    let change = graph.heading_change(route).to_degrees();
    let lane_change = route.kind == RouteKind::LaneChange;
    let neighbor = |left: bool| {
        let lane = &graph.map().lanes[&route.lane_id];
        let n = if left { &lane.left_neighbor } else { &lane.right_neighbor };
        n.as_deref() == Some(lane_of_waypoint(graph, &route.end))
    };
    match behavior {
        "go forward" => !lane_change && change.abs() < cfg.straight_max_deg,
        "turn left" => !lane_change && change > cfg.turn_min_deg && change <= cfg.turn_max_deg,
        "turn right" => !lane_change && change < -cfg.turn_min_deg && change >= -cfg.turn_max_deg,
        "change lane to left" => lane_change && neighbor(true),
        "change lane to right" => lane_change && neighbor(false),
        "static" => route.kind == RouteKind::Lane,
        "cross" => ego.is_none_or(|e| routes_conflict(route, e) == Conflict::Crossing),
        _ => true,
    }
}

/// Placement test for an actor's position reference and relation.
pub fn position_matches(graph: &RouteGraph, cfg: &GeneratorConfig, route: &Route, actor: &Actor, ego: Option<&Route>) -> bool {
    let rel = actor.position_relation.as_str();
    match Reference::classify(graph, &actor.position_reference) {
        Reference::Unspecified => true,
        Reference::EgoVehicle => ego.is_some_and(|e| ego_relation(graph, cfg, route, e, rel)),
        Reference::Region(tag) => region_relation(graph, cfg, route, &tag, rel, ego),
        Reference::Sign(token) => match rel {
            "front" => walk(graph, route, SIGN_LOOKBACK, false).iter().any(|p| p.has_sign(&token)),
            _ => {
                sign_upstream(graph, route, &token) || walk(graph, route, SIGN_LOOKBACK, true).iter().any(|s| s.has_sign(&token))
            }
        },
        Reference::Marker(token) => route.left_marker == token || route.right_marker == token,
        Reference::Absent(_) => false,
    }
}

fn side_of(graph: &RouteGraph, route: &Route, ego: &Route) -> (f64, f64, f64) {
    let d_e = graph.approach_direction(ego);
    let rel = route.start_pos - ego.start_pos;
    (rel.dot(d_e), d_e.cross(rel), graph.approach_direction(route).dot(d_e))
}

fn ego_relation(graph: &RouteGraph, cfg: &GeneratorConfig, route: &Route, ego: &Route, rel: &str) -> bool {
    let (lon, lat, dot) = side_of(graph, route, ego);
    let half = ego.lane_width / 2.0;
    match rel {
        "front" => dot > cfg.aligned_dot && lon > EPS && lat.abs() < half,
        "behind" => dot > cfg.aligned_dot && lon < -EPS && lat.abs() < half,
        "left" => lat > EPS,
        "right" => lat < -EPS,
        "opposite" => dot < cfg.opposite_dot && lon > EPS,
        "on" => walk(graph, ego, CHAIN_DEPTH, true)
            .iter()
            .chain(walk(graph, ego, CHAIN_DEPTH, false).iter())
            .any(|r| r.id == route.id),
        NONE => true,
        _ => false,
    }
}

fn region_relation(graph: &RouteGraph, cfg: &GeneratorConfig, route: &Route, tag: &str, rel: &str, ego: Option<&Route>) -> bool {
    let inside = |r: &Route| r.region_tags.contains(tag);
    let pred = graph.primary_predecessor(route);
    match rel {
        "behind" => inside(route) && pred.is_some_and(|p| !inside(p)),
        "front" => !inside(route) && pred.is_some_and(inside),
        "on" | NONE => inside(route),
        "left" | "right" | "opposite" => {
            inside(route)
                && ego.is_none_or(|e| {
                    let (_, lat, dot) = side_of(graph, route, e);
                    match rel {
                        "left" => lat > EPS,
                        "right" => lat < -EPS,
                        _ => dot < cfg.opposite_dot,
                    }
                })
        }
        _ => false,
    }
}

/// The route an ego on `r` spawns on: its primary predecessor, which must be a driving-lane route.
pub(crate) fn spawn_route<'a>(graph: &'a RouteGraph, r: &Route) -> Option<&'a Route> {
    graph.primary_predecessor(r).filter(|p| p.kind == RouteKind::Lane && graph.map().lanes[&p.lane_id].kind == LaneKind::Driving)
}

/// Candidates satisfying the ego's behavior and position and offering a spawn route, in input order.
pub fn find_ego_routes(graph: &RouteGraph, ego: &Actor, candidates: &[String], cfg: &GeneratorConfig) -> Vec<String> {
    candidates
        .iter()
        .filter_map(|id| graph.route(id))
        .filter(|r| spawn_route(graph, r).is_some())
        .filter(|r| behavior_matches(graph, cfg, r, &ego.behavior, None))
        .filter(|r| position_matches(graph, cfg, r, ego, None))
        .map(|r| r.id.clone())
        .collect()
}

/// Placement of one NPC: its run-up, assigned route and downstream continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcPlan {
    pub route_id: String,
    pub path_routes: Vec<String>,
    pub spawn: Pose,
    /// Where the NPC route meets the ego route, for crossing or merging routes.
    pub conflict_point: Option<Vec2>,
}

pub fn npc_plan(graph: &RouteGraph, cfg: &GeneratorConfig, ego: &Route, route: &Route, behavior: &str) -> NpcPlan {
    if behavior == "static" {
        return NpcPlan {
            route_id: route.id.clone(),
            path_routes: vec![route.id.clone()],
            spawn: Pose { position: route.start_pos, heading: route.direction.angle() },
            conflict_point: None,
        };
    }
    let conflict_point = match routes_conflict(route, ego) {
        Conflict::Crossing => segment_intersection(route.start_pos, route.end_pos, ego.start_pos, ego.end_pos)
            .map(|(t, _)| route.start_pos + (route.end_pos - route.start_pos) * t),
        Conflict::Merging => Some(route.end_pos),
        Conflict::None => None,
    };
    let mut path = VecDeque::from([route.id.clone()]);
    if conflict_point.is_some() {
        let mut run_up = 0.0;
        let mut cur = route;
        while run_up < cfg.npc_lead_in - EPS {
            match graph.primary_predecessor(cur) {
                Some(p) if !path.contains(&p.id) => {
                    run_up += p.length;
                    path.push_front(p.id.clone());
                    cur = p;
                }
                _ => break,
            }
        }
    }
    let mut ahead = 0.0;
    let mut cur = route;
    while ahead < cfg.npc_extension - EPS {
        match graph.primary_successor(cur) {
            Some(s) if !path.contains(&s.id) => {
                ahead += s.length;
                path.push_back(s.id.clone());
                cur = s;
            }
            _ => break,
        }
    }
    let first = graph.route(&path[0]).expect("path routes exist");
    NpcPlan {
        route_id: route.id.clone(),
        path_routes: path.into(),
        spawn: Pose { position: first.start_pos, heading: first.direction.angle() },
        conflict_point,
    }
}

/// Inputs to the NPC search that come from the ego placement and the actor table.
pub(crate) struct SpawnContext {
    pub ego_spawn: Vec2,
    pub ego_length: f64,
    pub npc_lengths: Vec<f64>,
}

/// Depth-first search over nearby routes, NPCs in list order, candidates in
/// the given order; the first complete assignment wins.
pub(crate) fn search_npcs(
    graph: &RouteGraph,
    cfg: &GeneratorConfig,
    ego: &Route,
    npcs: &[Actor],
    nearby: &[String],
    spawn: &SpawnContext,
) -> Option<Vec<NpcPlan>> {
    let candidates: Vec<Vec<NpcPlan>> = npcs
        .iter()
        .enumerate()
        .map(|(i, npc)| {
            nearby
                .iter()
                .filter_map(|id| graph.route(id))
                .filter(|r| r.id != ego.id)
                .filter(|r| behavior_matches(graph, cfg, r, &npc.behavior, Some(ego)))
                .filter(|r| position_matches(graph, cfg, r, npc, Some(ego)))
                .map(|r| npc_plan(graph, cfg, ego, r, &npc.behavior))
                .filter(|p| spawn_is_legal(graph, p))
                .filter(|p| {
                    p.spawn.position.distance(spawn.ego_spawn)
                        >= cfg.spawn_clearance * spawn.ego_length.max(spawn.npc_lengths[i]) - EPS
                })
                .collect()
        })
        .collect();
    let mut chosen: Vec<NpcPlan> = Vec::with_capacity(npcs.len());
    if dfs(cfg, &candidates, spawn, &mut chosen) {
        Some(chosen)
    } else {
        None
    }
}

fn spawn_is_legal(graph: &RouteGraph, plan: &NpcPlan) -> bool {
    graph.route(&plan.path_routes[0]).is_some_and(|r| graph.map().lanes[&r.lane_id].kind == LaneKind::Driving)
}

fn dfs(cfg: &GeneratorConfig, candidates: &[Vec<NpcPlan>], spawn: &SpawnContext, chosen: &mut Vec<NpcPlan>) -> bool {
    let i = chosen.len();
    if i == candidates.len() {
        return true;
    }
    for plan in &candidates[i] {
        let clear = chosen.iter().enumerate().all(|(j, other)| {
            plan.spawn.position.distance(other.spawn.position)
                >= cfg.spawn_clearance * spawn.npc_lengths[i].max(spawn.npc_lengths[j]) - EPS
        });
        if clear {
            chosen.push(plan.clone());
            if dfs(cfg, candidates, spawn, chosen) {
                return true;
            }
            chosen.pop();
        }
    }
    false
}

/// Default-configured NPC search for car-sized actors.
pub fn find_npc_assignment(graph: &RouteGraph, ego_route: &str, npcs: &[Actor]) -> Result<Option<Vec<NpcPlan>>, GenError> {
    super::Generator::default().find_npc_assignment(graph, ego_route, "car", npcs)
}
