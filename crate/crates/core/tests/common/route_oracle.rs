//! Placement predicates, link topology and crossing geometry re-derived from
//! raw route fields, with an exhaustive search over route assignments.

use std::collections::{BTreeSet, HashMap};

use target_core::dsl::{Actor, ScenarioRep};
use target_core::geometry::Vec2;
use target_core::map::{LaneKind, Route, RouteGraph, RouteKind};
use target_core::scenario::{ActorTable, ConcreteScenario, NpcProgram};

const EPS: f64 = 1e-6;
const NEARBY: f64 = 30.0;
const LEAD_IN: f64 = 15.0;
const EXTENSION: f64 = 40.0;
const CLEARANCE: f64 = 2.0;

#[derive(PartialEq)]
enum Meet {
    Cross,
    Merge,
    Apart,
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn meet(a: &Route, b: &Route) -> Meet {
    if a.id == b.id {
        return Meet::Apart;
    }
    let (r, s) = (a.end_pos - a.start_pos, b.end_pos - b.start_pos);
    let den = cross(r, s);
    if den.abs() > 1e-12 {
        let q = b.start_pos - a.start_pos;
        let (t, u) = (cross(q, s) / den, cross(q, r) / den);
        let inner = |x: f64| x > 1e-9 && x < 1.0 - 1e-9;
        if inner(t) && inner(u) {
            return Meet::Cross;
        }
    }
    if a.end == b.end {
        Meet::Merge
    } else {
        Meet::Apart
    }
}

fn seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let l2 = ab.dot(ab);
    let t = if l2 == 0.0 { 0.0 } else { ((p - a).dot(ab) / l2).clamp(0.0, 1.0) };
    p.distance(a + ab * t)
}

fn wrap(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a >= std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

pub struct Oracle<'a> {
    g: &'a RouteGraph,
    by_id: HashMap<&'a str, &'a Route>,
    actors: ActorTable,
}

impl<'a> Oracle<'a> {
    pub fn new(g: &'a RouteGraph) -> Self {
        let by_id = g.routes().iter().map(|r| (r.id.as_str(), r)).collect();
        Oracle { g, by_id, actors: ActorTable::builtin() }
    }

    pub fn r(&self, id: &str) -> &'a Route {
        self.by_id[id]
    }

    fn len_of(&self, actor_type: &str) -> f64 {
        self.actors.get(actor_type).unwrap().length
    }

    /// Links from route endpoints, not the stored adjacency lists.
    fn linked(&self, r: &Route, forward: bool) -> Vec<&'a Route> {
        let mut v: Vec<&Route> = self
            .g
            .routes()
            .iter()
            .filter(|o| o.id != r.id && if forward { o.start == r.end } else { o.end == r.start })
            .collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    fn primary(&self, r: &Route, forward: bool) -> Option<&'a Route> {
        let c = self.linked(r, forward);
        c.iter()
            .find(|x| x.kind == RouteKind::Lane && x.lane_id == r.lane_id)
            .or_else(|| c.iter().find(|x| x.kind == RouteKind::Lane))
            .or(c.first())
            .copied()
    }

    /// Routes within `depth` link steps, excluding `r`.
    fn reach(&self, r: &Route, depth: usize, forward: bool) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::new();
        let mut frontier = vec![r];
        for _ in 0..depth {
            let mut next = Vec::new();
            for cur in frontier {
                for n in self.linked(cur, forward) {
                    if n.id != r.id && seen.insert(n.id.as_str()) {
                        next.push(n);
                    }
                }
            }
            frontier = next;
        }
        seen
    }

    fn sign_around(&self, r: &Route, tok: &str, up: bool, here: bool, down: bool) -> bool {
        (here && r.has_sign(tok))
            || (up && self.reach(r, 2, false).iter().any(|id| self.r(id).has_sign(tok)))
            || (down && self.reach(r, 2, true).iter().any(|id| self.r(id).has_sign(tok)))
    }

    fn road_ok(&self, r: &Route, rep: &ScenarioRep) -> bool {
        let rn = &rep.road_network;
        (rn.road_type == "none" || r.region_tags.contains(&rn.road_type))
            && (rn.road_marker == "none" || r.left_marker == rn.road_marker || r.right_marker == rn.road_marker)
            && rn.traffic_signs.iter().all(|s| self.sign_around(r, s, true, true, false))
    }

    fn driving(&self, r: &Route) -> bool {
        self.g.map().lanes[&r.lane_id].kind == LaneKind::Driving
    }

    fn spawn_of(&self, r: &Route) -> Option<&'a Route> {
        self.primary(r, false).filter(|p| p.kind == RouteKind::Lane && self.driving(p))
    }

    fn turn_deg(&self, r: &Route) -> f64 {
        match (self.primary(r, false), self.primary(r, true)) {
            (Some(p), Some(s)) => wrap(s.direction.angle() - p.direction.angle()).to_degrees(),
            _ => 0.0,
        }
    }

    fn behavior_ok(&self, r: &Route, b: &str, ego: Option<&Route>) -> bool {
        let lc = r.kind == RouteKind::LaneChange;
        let deg = self.turn_deg(r);
        let lane = &self.g.map().lanes[&r.lane_id];
        let end_lane = Some(self.g.map().waypoints[&r.end].lane_id.clone());
        match b {
            "go forward" => !lc && deg.abs() < 30.0,
            "turn left" => !lc && deg > 30.0 && deg <= 150.0,
            "turn right" => !lc && (-150.0..-30.0).contains(&deg),
            "change lane to left" => lc && lane.left_neighbor == end_lane,
            "change lane to right" => lc && lane.right_neighbor == end_lane,
            "static" => r.kind == RouteKind::Lane,
            "cross" => ego.is_none_or(|e| meet(r, e) == Meet::Cross),
            _ => true,
        }
    }

    fn approach(&self, r: &Route) -> Vec2 {
        if r.kind == RouteKind::Lane {
            return r.direction;
        }
        self.primary(r, false).map_or(r.direction, |p| p.direction)
    }

    /// (longitudinal, lateral, heading dot) of `r`'s start in the ego approach frame.
    fn frame(&self, r: &Route, ego: &Route) -> (f64, f64, f64) {
        let d = self.approach(ego);
        let v = r.start_pos - ego.start_pos;
        (v.dot(d), cross(d, v), self.approach(r).dot(d))
    }

    fn position_ok(&self, r: &Route, a: &Actor, ego: Option<&Route>) -> bool {
        let map = self.g.map();
        let (reft, rel) = (a.position_reference.as_str(), a.position_relation.as_str());
        if reft == "none" {
            return true;
        }
        if reft == "ego vehicle" {
            let Some(e) = ego else { return false };
            let (lon, lat, dot) = self.frame(r, e);
            let half = e.lane_width / 2.0;
            return match rel {
                "front" => dot > 0.7 && lon > EPS && lat.abs() < half,
                "behind" => dot > 0.7 && lon < -EPS && lat.abs() < half,
                "left" => lat > EPS,
                "right" => lat < -EPS,
                "opposite" => dot < -0.7 && lon > EPS,
                "on" => self.reach(e, 6, true).contains(r.id.as_str()) || self.reach(e, 6, false).contains(r.id.as_str()),
                "none" => true,
                _ => false,
            };
        }
        if map.regions.iter().any(|g| g.tags.iter().any(|t| t == reft)) {
            let inside = |x: &Route| x.region_tags.contains(reft);
            let pred = self.primary(r, false);
            return match rel {
                "behind" => inside(r) && pred.is_some_and(|p| !inside(p)),
                "front" => !inside(r) && pred.is_some_and(inside),
                "on" | "none" => inside(r),
                "left" | "right" | "opposite" => {
                    inside(r)
                        && ego.is_none_or(|e| {
                            let (_, lat, dot) = self.frame(r, e);
                            match rel {
                                "left" => lat > EPS,
                                "right" => lat < -EPS,
                                _ => dot < -0.7,
                            }
                        })
                }
                _ => false,
            };
        }
        if map.signs.iter().any(|s| s.token == reft) {
            return match rel {
                "front" => self.sign_around(r, reft, true, false, false),
                _ => self.sign_around(r, reft, true, true, true),
            };
        }
        if map.lanes.values().any(|l| l.left_marker == reft || l.right_marker == reft) {
            return r.left_marker == reft || r.right_marker == reft;
        }
        false
    }

    fn ego_ok(&self, r: &Route, rep: &ScenarioRep) -> bool {
        self.road_ok(r, rep)
            && self.spawn_of(r).is_some()
            && self.behavior_ok(r, &rep.ego.behavior, None)
            && self.position_ok(r, &rep.ego, None)
    }

    fn near(&self, ego: &Route, r: &Route) -> bool {
        seg_dist(r.start_pos, ego.start_pos, ego.end_pos).min(seg_dist(r.end_pos, ego.start_pos, ego.end_pos)) <= NEARBY
    }

    fn npc_ok(&self, r: &Route, a: &Actor, ego: &Route) -> bool {
        r.id != ego.id && self.near(ego, r) && self.behavior_ok(r, &a.behavior, Some(ego)) && self.position_ok(r, a, Some(ego))
    }

    /// First route of an NPC path: upstream run-up when the NPC route meets the ego route.
    fn npc_start(&self, r: &'a Route, ego: &Route, behavior: &str) -> &'a Route {
        if behavior == "static" || meet(r, ego) == Meet::Apart {
            return r;
        }
        let (mut cur, mut run, mut seen) = (r, 0.0, vec![r.id.as_str()]);
        while run < LEAD_IN - EPS {
            match self.primary(cur, false) {
                Some(p) if !seen.contains(&p.id.as_str()) => {
                    run += p.length;
                    seen.push(&p.id);
                    cur = p;
                }
                _ => break,
            }
        }
        cur
    }

    fn has_assignment(&self, ego: &Route, rep: &ScenarioRep) -> bool {
        let ego_len = self.len_of(&rep.ego.actor_type);
        let ego_spawn = self.spawn_of(ego).unwrap().start_pos;
        let lens: Vec<f64> = rep.npc_actors.iter().map(|n| self.len_of(&n.actor_type)).collect();
        let cands: Vec<Vec<Vec2>> = rep
            .npc_actors
            .iter()
            .zip(&lens)
            .map(|(n, &len)| {
                self.g
                    .routes()
                    .iter()
                    .filter(|r| self.npc_ok(r, n, ego))
                    .map(|r| self.npc_start(r, ego, &n.behavior))
                    .filter(|s| self.driving(s))
                    .map(|s| s.start_pos)
                    .filter(|p| p.distance(ego_spawn) >= CLEARANCE * ego_len.max(len) - EPS)
                    .collect()
            })
            .collect();
        if cands.iter().any(|c| c.is_empty()) {
            return false;
        }
        // full odometer over the product of candidate lists
        let mut idx = vec![0usize; cands.len()];
        loop {
            let ok = (0..idx.len())
                .all(|i| (0..i).all(|j| cands[i][idx[i]].distance(cands[j][idx[j]]) >= CLEARANCE * lens[i].max(lens[j]) - EPS));
            if ok {
                return true;
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return false;
                }
                idx[k] += 1;
                if idx[k] < cands[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    pub fn satisfiable_egos(&self, rep: &ScenarioRep) -> Vec<String> {
        self.g.routes().iter().filter(|r| self.ego_ok(r, rep) && self.has_assignment(r, rep)).map(|r| r.id.clone()).collect()
    }

    /// Post-hoc check of an emitted scenario against the representation.
    pub fn validate(&self, scn: &ConcreteScenario, rep: &ScenarioRep) -> Result<(), String> {
        let ego = self.r(&scn.ego.route_id);
        if !self.ego_ok(ego, rep) {
            return Err(format!("ego route {} violates the ego predicates", ego.id));
        }
        let pr = &scn.ego.path_routes;
        if pr.len() < 2 || pr[0] != self.spawn_of(ego).unwrap().id || pr[1] != ego.id {
            return Err("ego path must start with the spawn route and the ego route".into());
        }
        for w in pr.windows(2) {
            if !self.linked(self.r(&w[0]), true).iter().any(|s| s.id == w[1]) {
                return Err(format!("{} does not lead to {}", w[0], w[1]));
            }
        }
        let uniq: BTreeSet<&String> = pr.iter().collect();
        if uniq.len() != pr.len() {
            return Err("ego path repeats a route".into());
        }
        let first = self.r(&pr[0]);
        if scn.ego.spawn.position.distance(first.start_pos) > EPS {
            return Err("ego spawn is not the start of its spawn route".into());
        }
        let last = self.r(pr.last().unwrap());
        if scn.ego.destination.distance(last.end_pos) > EPS || scn.ego.destination_waypoint != last.end {
            return Err("ego destination is not the end of its path".into());
        }
        // distance run past the ego's region must reach the extension,
        // unless the road ends first
        let chain: Vec<&Route> = pr[2..].iter().map(|id| self.r(id)).collect();
        let outside = |r: &Route| r.regions.iter().all(|g| !ego.regions.contains(g));
        let start = if ego.regions.is_empty() { 0 } else { chain.iter().position(|r| outside(r)).unwrap_or(0) };
        let past: f64 = chain.iter().skip(start).map(|r| r.length).sum();
        let dead_end = self.primary(last, true).is_none_or(|s| pr.contains(&s.id));
        if past < EXTENSION - 1e-9 && !dead_end {
            return Err(format!("destination only {past:.1} m past the region"));
        }
        if chain.len() > start + 1 {
            let without_last: f64 = chain[start..chain.len() - 1].iter().map(|r| r.length).sum();
            if without_last >= EXTENSION - 1e-9 {
                return Err("ego path runs longer than needed".into());
            }
        }

        if scn.npcs.len() != rep.npc_actors.len() {
            return Err("wrong NPC count".into());
        }
        let ego_len = self.len_of(&rep.ego.actor_type);
        for (i, (npc, actor)) in scn.npcs.iter().zip(&rep.npc_actors).enumerate() {
            let r = self.r(&npc.route_id);
            if !self.npc_ok(r, actor, ego) {
                return Err(format!("npc{i} route {} violates its predicates", r.id));
            }
            let start = self.npc_start(r, ego, &actor.behavior);
            if npc.path_routes[0] != start.id || !npc.path_routes.contains(&npc.route_id) {
                return Err(format!("npc{i} path {:?} does not run up to {}", npc.path_routes, r.id));
            }
            if !self.driving(start) || npc.spawn.position.distance(start.start_pos) > EPS {
                return Err(format!("npc{i} spawn is not a driving-lane path start"));
            }
            for w in npc.path_routes.windows(2) {
                if !self.linked(self.r(&w[0]), true).iter().any(|s| s.id == w[1]) {
                    return Err(format!("npc{i}: {} does not lead to {}", w[0], w[1]));
                }
            }
            let len = self.len_of(&actor.actor_type);
            if npc.spawn.position.distance(scn.ego.spawn.position) < CLEARANCE * ego_len.max(len) - EPS {
                return Err(format!("npc{i} spawns on top of the ego"));
            }
            for (j, other) in scn.npcs[..i].iter().enumerate() {
                let lj = self.len_of(&rep.npc_actors[j].actor_type);
                if npc.spawn.position.distance(other.spawn.position) < CLEARANCE * len.max(lj) - EPS {
                    return Err(format!("npc{i} and npc{j} spawn too close"));
                }
            }
            if matches!(npc.program, NpcProgram::Static) != (actor.behavior == "static") {
                return Err(format!("npc{i} program does not match behavior {}", actor.behavior));
            }
        }
        let tokens: Vec<&String> = rep.oracle.longitudinal.iter().chain(&rep.oracle.lateral).collect();
        let checks: Vec<&String> = scn.monitor.checks.iter().map(|c| &c.token).collect();
        if tokens != checks {
            return Err(format!("monitor checks {checks:?} differ from oracle tokens {tokens:?}"));
        }
        Ok(())
    }
}
