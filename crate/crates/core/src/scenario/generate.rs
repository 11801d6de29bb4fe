use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::oracles::{resolve_oracles, Anchors};
use super::search::{filter_routes, find_ego_routes, search_npcs, spawn_route, NpcPlan, SpawnContext};
use super::tables::{resolve_environment, ActorTable, EnvironmentParams, EnvironmentTable};
use super::{ConcreteScenario, EgoSetup, GenError, GeneratorConfig, NpcProgram, NpcScript, Pose, StartTrigger, SCENARIO_SCHEMA};
use crate::dsl::{Actor, ScenarioRep};
use crate::geometry::{Polygon, Polyline, Vec2};
use crate::map::{Route, RouteGraph, RouteKind};
use crate::monitor::{MonitorConfig, Thresholds};
use crate::sim::region_span;

/// Scenario generator: configuration plus the committed data tables.
#[derive(Debug, Clone)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub environment: EnvironmentTable,
    pub actors: ActorTable,
    pub thresholds: Thresholds,
}

impl Default for Generator {
    fn default() -> Self {
        Generator {
            config: GeneratorConfig::default(),
            environment: EnvironmentTable::builtin(),
            actors: ActorTable::builtin(),
            thresholds: Thresholds::default(),
        }
    }
}

/// Generates the first scenario with default settings.
pub fn generate(rep: &ScenarioRep, graph: &RouteGraph, rule_id: &str) -> Result<ConcreteScenario, GenError> {
    Generator::default().generate(rep, graph, rule_id)
}

/// Polyline through the start of the first route and the end of every route.
pub(crate) fn path_polyline(graph: &RouteGraph, ids: &[String]) -> Polyline {
    let routes: Vec<&Route> = ids.iter().filter_map(|id| graph.route(id)).collect();
    let mut pts = vec![routes[0].start_pos];
    pts.extend(routes.iter().map(|r| r.end_pos));
    Polyline::new(pts)
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Self {
        Generator { config, ..Default::default() }
    }

    fn order(&self, mut ids: Vec<String>, salt: u64) -> Vec<String> {
        if self.config.random_tie_break {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ salt);
            ids.shuffle(&mut rng);
        }
        ids
    }

    /// NPC placement around `ego_route` for an ego of the given type.
    pub fn find_npc_assignment(
        &self,
        graph: &RouteGraph,
        ego_route: &str,
        ego_type: &str,
        npcs: &[Actor],
    ) -> Result<Option<Vec<NpcPlan>>, GenError> {
        let ego = graph.get(ego_route)?;
        let Some(spawn) = spawn_route(graph, ego) else { return Ok(None) };
        let ctx = SpawnContext {
            ego_spawn: spawn.start_pos,
            ego_length: self.actors.get(ego_type)?.length,
            npc_lengths: npcs.iter().map(|n| self.actors.get(&n.actor_type).map(|s| s.length)).collect::<Result<_, _>>()?,
        };
        let nearby = self.order(graph.routes_within(ego_route, self.config.nearby_radius)?, 0x9e37_79b9);
        Ok(search_npcs(graph, &self.config, ego, npcs, &nearby, &ctx))
    }

    /// The first satisfying scenario in candidate order.
    pub fn generate(&self, rep: &ScenarioRep, graph: &RouteGraph, rule_id: &str) -> Result<ConcreteScenario, GenError> {
        Ok(self.generate_all(rep, graph, rule_id, Some(1))?.remove(0))
    }

    /// One scenario per eligible ego route that admits an NPC assignment.
    pub fn generate_all(
        &self,
        rep: &ScenarioRep,
        graph: &RouteGraph,
        rule_id: &str,
        limit: Option<usize>,
    ) -> Result<Vec<ConcreteScenario>, GenError> {
        let env = resolve_environment(&rep.environment, &self.environment)?;
        self.actors.get(&rep.ego.actor_type)?;
        for npc in &rep.npc_actors {
            self.actors.get(&npc.actor_type)?;
        }
        let candidates = filter_routes(graph, &rep.road_network);
        let egos = self.order(find_ego_routes(graph, &rep.ego, &candidates, &self.config), 0);
        let mut out = Vec::new();
        for ego_id in egos {
            if limit.is_some_and(|l| out.len() >= l) {
                break;
            }
            if let Some(plans) = self.find_npc_assignment(graph, &ego_id, &rep.ego.actor_type, &rep.npc_actors)? {
                out.push(self.assemble(rep, graph, rule_id, &ego_id, &plans, &env)?);
            }
        }
        if out.is_empty() {
            return Err(GenError::ScenarioUnsupportedOnMap { map_id: graph.map_id().to_string() });
        }
        Ok(out)
    }

    /// Spawn route, ego route, then successors until the path runs
    /// `destination_extension` past the region the ego route lies in.
    fn ego_path(&self, graph: &RouteGraph, ego: &Route) -> Vec<String> {
        const HORIZON: f64 = 300.0;
        let spawn = spawn_route(graph, ego).expect("ego candidates have a spawn route");
        let mut chain: Vec<&Route> = Vec::new();
        let mut total = 0.0;
        let mut cur = ego;
        while total < HORIZON {
            match graph.primary_successor(cur) {
                Some(s) if s.id != ego.id && !chain.iter().any(|c| c.id == s.id) => {
                    total += s.length;
                    chain.push(s);
                    cur = s;
                }
                _ => break,
            }
        }
        let exit = chain.iter().position(|r| r.regions.iter().all(|id| !ego.regions.contains(id)));
        let start = if ego.regions.is_empty() { 0 } else { exit.unwrap_or(0) };
        let mut ids = vec![spawn.id.clone(), ego.id.clone()];
        let mut past = 0.0;
        for (k, r) in chain.iter().enumerate() {
            ids.push(r.id.clone());
            if k >= start {
                past += r.length;
            }
            if past >= self.config.destination_extension - 1e-9 {
                break;
            }
        }
        ids
    }

    fn assemble(
        &self,
        rep: &ScenarioRep,
        graph: &RouteGraph,
        rule_id: &str,
        ego_id: &str,
        plans: &[NpcPlan],
        env: &EnvironmentParams,
    ) -> Result<ConcreteScenario, GenError> {
        let ego_route = graph.get(ego_id)?;
        let ego_spec = self.actors.get(&rep.ego.actor_type)?;
        let path_routes = self.ego_path(graph, ego_route);
        let path = path_polyline(graph, &path_routes);
        let spawn_r = graph.get(&path_routes[0])?;
        let last = graph.get(path_routes.last().expect("non-empty"))?;
        let ego = EgoSetup {
            actor_type: rep.ego.actor_type.clone(),
            length: ego_spec.length,
            width: ego_spec.width,
            route_id: ego_id.to_string(),
            path_routes,
            path,
            spawn: Pose { position: spawn_r.start_pos, heading: spawn_r.direction.angle() },
            initial_speed: 0.0,
            destination: last.end_pos,
            destination_waypoint: last.end.clone(),
        };

        let mut npcs = Vec::new();
        for (i, (actor, plan)) in rep.npc_actors.iter().zip(plans).enumerate() {
            let spec = self.actors.get(&actor.actor_type)?;
            let path = path_polyline(graph, &plan.path_routes);
            let end = graph.get(plan.path_routes.last().expect("non-empty"))?;
            let program = if actor.behavior == "static" {
                NpcProgram::Static
            } else {
                let start = match plan.conflict_point {
                    Some(point) => StartTrigger::EgoWithin { point, radius: self.config.npc_trigger_radius },
                    None => StartTrigger::Immediately,
                };
                NpcProgram::FollowPath { speed: spec.speed, start }
            };
            npcs.push(NpcScript {
                id: format!("npc{i}"),
                actor_type: actor.actor_type.clone(),
                behavior: actor.behavior.clone(),
                length: spec.length,
                width: spec.width,
                route_id: plan.route_id.clone(),
                path_routes: plan.path_routes.clone(),
                destination: if actor.behavior == "static" { plan.spawn.position } else { end.end_pos },
                path,
                spawn: plan.spawn,
                program,
            });
        }

        let anchors = self.anchors(graph, ego_route, &ego, &npcs, plans, env);
        let checks = resolve_oracles(&rep.oracle, &anchors)?;
        let scenario_id = format!("{rule_id}@{}@{ego_id}", graph.map_id());
        let monitor = MonitorConfig {
            scenario_id: scenario_id.clone(),
            rule_id: rule_id.to_string(),
            map_id: graph.map_id().to_string(),
            ego_id: "ego".into(),
            ego_path: ego.path.clone(),
            checks,
            time_limit: self.config.time_limit,
            collision_enabled: true,
            thresholds: self.thresholds.clone(),
        };
        Ok(ConcreteScenario {
            schema: SCENARIO_SCHEMA.into(),
            scenario_id,
            rule_id: rule_id.to_string(),
            map_id: graph.map_id().to_string(),
            environment: env.clone(),
            ego,
            npcs,
            monitor,
            generator: self.config.clone(),
        })
    }

    /// The region the ego route lies in, preferring junction-like regions,
    /// otherwise the first junction-like region along the ego path.
    fn scenario_region(&self, graph: &RouteGraph, ego_route: &Route, path: &Polyline) -> Option<Polygon> {
        let map = graph.map();
        let is_conflict = |tags: &[String]| tags.iter().any(|t| self.config.conflict_tags.contains(t));
        let own: Vec<_> = map.regions.iter().filter(|r| ego_route.regions.contains(&r.id)).collect();
        if let Some(r) = own.iter().find(|r| is_conflict(&r.tags)).or(own.first()) {
            return Some(r.polygon());
        }
        map.regions
            .iter()
            .filter(|r| is_conflict(&r.tags))
            .filter_map(|r| region_span(path, &r.polygon()).map(|(s, _)| (s, r)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, r)| r.polygon())
    }

    fn anchors(
        &self,
        graph: &RouteGraph,
        ego_route: &Route,
        ego: &EgoSetup,
        npcs: &[NpcScript],
        plans: &[NpcPlan],
        env: &EnvironmentParams,
    ) -> Anchors {
        let map = graph.map();
        let path = &ego.path;
        let routes: Vec<&Route> = ego.path_routes.iter().filter_map(|id| graph.route(id)).collect();
        let mut cum = Vec::with_capacity(routes.len());
        let mut acc = 0.0;
        for r in &routes {
            acc += r.length;
            cum.push(acc);
        }
        let region = self.scenario_region(graph, ego_route, path);
        let region_span = region.as_ref().and_then(|p| region_span(path, p));

        let stop_line_s = routes
            .iter()
            .position(|r| r.has_sign("stop sign"))
            .map(|k| cum[k])
            .or_else(|| region_span.filter(|(entry, _)| *entry > 0.0).map(|(entry, _)| entry));

        let privileged: Vec<String> =
            npcs.iter().zip(plans).filter(|(_, p)| p.conflict_point.is_some()).map(|(n, _)| n.id.clone()).collect();
        let conflict_region = region.clone().or_else(|| {
            plans.iter().find_map(|p| p.conflict_point).map(|c| {
                let h = ego_route.lane_width;
                Polygon::new(vec![c + Vec2::new(-h, -h), c + Vec2::new(h, -h), c + Vec2::new(h, h), c + Vec2::new(-h, h)])
            })
        });

        let decelerate_zone = region_span.map(|(entry, exit)| ((entry - self.thresholds.decelerate_lead_in).max(0.0), exit));

        let half = ego_route.lane_width / 2.0;
        let lead = npcs
            .iter()
            .find(|n| {
                let proj = path.project(n.spawn.position);
                let (_, heading) = path.sample(proj.s);
                proj.s > 1e-6
                    && proj.offset.abs() < half
                    && Vec2::from_angle(n.spawn.heading).dot(Vec2::from_angle(heading)) > self.config.aligned_dot
            })
            .map(|n| n.id.clone());

        let lane_pair = |left: bool| -> Option<(String, String)> {
            let origin = ego_route.lane_id.clone();
            if ego_route.kind == RouteKind::LaneChange {
                let target = map.waypoints[&ego_route.end].lane_id.clone();
                let lane = &map.lanes[&origin];
                let n = if left { &lane.left_neighbor } else { &lane.right_neighbor };
                return (n.as_deref() == Some(target.as_str())).then_some((origin, target));
            }
            let lane = &map.lanes[&origin];
            let n = if left { &lane.left_neighbor } else { &lane.right_neighbor };
            n.clone().map(|t| (origin, t))
        };

        let upstream_of_spawn: Vec<&Route> = routes[0]
            .predecessors
            .iter()
            .filter_map(|id| graph.route(id))
            .flat_map(|p| std::iter::once(p).chain(p.predecessors.iter().filter_map(|id| graph.route(id))))
            .collect();
        let speed_limit = routes
            .iter()
            .flat_map(|r| r.signs.iter())
            .find(|s| s.token == "speed limit sign" && s.value.is_some())
            .map(|s| (s.value.unwrap_or_default(), path.project(s.position).s))
            .or_else(|| {
                upstream_of_spawn
                    .iter()
                    .flat_map(|r| r.signs.iter())
                    .find(|s| s.token == "speed limit sign" && s.value.is_some())
                    .map(|s| (s.value.unwrap_or_default(), 0.0))
            })
            .map(|(limit, start)| (limit, start, path.length()));

        Anchors {
            stop_line_s,
            conflict_region,
            privileged,
            decelerate_zone,
            lead,
            weather_multiplier: env.following_multiplier,
            lane_width: Some(ego_route.lane_width),
            lane_change_left: lane_pair(true),
            lane_change_right: lane_pair(false),
            speed_limit,
        }
    }
}
