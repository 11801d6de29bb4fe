//! Fixed-step kinematic simulation of a concrete scenario.

mod agents;
pub mod trace;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{Polygon, Polyline, Vec2};
use crate::map::RouteGraph;
use crate::scenario::{ConcreteScenario, NpcProgram, NpcScript, StartTrigger};
pub use trace::{ActorState, Frame, TerminalStatus, TraceHeader, TraceLog, TRACE_SCHEMA};

pub use agents::{
    agent_from_spec, compliant_ads, violator_ads, AgentParams, ReferenceAgent, StaticAgent, StdioAgent, VIOLATION_TOKENS,
};
pub use trace::{read_trace, write_trace, TraceError};

pub const TIMESTEP: f64 = 0.05;
pub const ACCEL_BOUNDS: (f64, f64) = (-8.0, 4.0);
pub const CURVATURE_BOUND: f64 = 0.3;
/// Signs farther ahead than this are not observed.
pub const SIGN_HORIZON: f64 = 50.0;

/// Ego command for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    /// m/s², clamped to [-8, 4].
    pub acceleration: f64,
    /// 1/m, clamped to [-0.3, 0.3].
    pub curvature: f64,
}

impl Control {
    pub fn clamped(self) -> Self {
        let fix = |v: f64, lo: f64, hi: f64| if v.is_finite() { v.clamp(lo, hi) } else { 0.0 };
        Control {
            acceleration: fix(self.acceleration, ACCEL_BOUNDS.0, ACCEL_BOUNDS.1),
            curvature: fix(self.curvature, -CURVATURE_BOUND, CURVATURE_BOUND),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignAhead {
    pub id: String,
    pub token: String,
    /// Distance along the ego path to the sign.
    pub distance: f64,
    /// Distance to the end of the route the sign governs (the stop line for stop signs).
    pub line_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAhead {
    pub id: String,
    pub tags: Vec<String>,
    /// Along-path distance to the region entry; negative once inside.
    pub entry_distance: f64,
    pub exit_distance: f64,
    pub polygon: Polygon,
}

/// Ground-truth view handed to the agent every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub ego: ActorState,
    /// Remaining path: the ego's foot point followed by the path vertices ahead.
    pub route_ahead: Vec<Vec2>,
    pub path_progress: f64,
    pub path_length: f64,
    /// Signed lateral offset from the path (left positive).
    pub path_offset: f64,
    pub lane_id: Option<String>,
    pub lane_offset: Option<f64>,
    pub lane_width: f64,
    pub signs_ahead: Vec<SignAhead>,
    /// Value of the most recent speed-limit sign passed.
    pub speed_limit: Option<f64>,
    pub regions_ahead: Vec<RegionAhead>,
    pub others: Vec<ActorState>,
    pub destination: Vec2,
    pub following_multiplier: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("unknown violation token `{0}`")]
    UnknownViolationToken(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("agent failed: {0}")]
    Failed(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario targets map `{expected}` but map `{found}` is loaded")]
    MapMismatch { expected: String, found: String },
    #[error("scenario references unknown route `{0}`")]
    UnknownRoute(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Ego controller plug-in. Called once per frame, strictly in order.
pub trait Agent {
    fn name(&self) -> String;
    fn reset(&mut self, _scenario: &ConcreteScenario) -> Result<(), AgentError> {
        Ok(())
    }
    fn control(&mut self, obs: &Observation) -> Result<Control, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub timestep: f64,
    pub time_limit: f64,
    /// The ego has arrived when its center is this close to the destination.
    pub reach_radius: f64,
    /// Seconds simulated after the first collision.
    pub collision_grace: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { timestep: TIMESTEP, time_limit: 60.0, reach_radius: 3.0, collision_grace: 1.0 }
    }
}

struct NpcRuntime<'a> {
    script: &'a NpcScript,
    s: f64,
    started: bool,
    speed: f64,
    position: Vec2,
    heading: f64,
}

struct PathSign {
    id: String,
    token: String,
    s: f64,
    line_s: f64,
    value: Option<f64>,
}

const NPC_MIN_GAP: f64 = 2.0;
const NPC_SLOW_GAP: f64 = 10.0;

impl NpcRuntime<'_> {
    fn target_speed(&self) -> f64 {
        match self.script.program {
            NpcProgram::Static => 0.0,
            NpcProgram::FollowPath { speed, .. } if self.started => speed,
            NpcProgram::FollowPath { .. } => 0.0,
        }
    }

    fn state(&self, graph: &RouteGraph) -> ActorState {
        ActorState {
            id: self.script.id.clone(),
            x: self.position.x,
            y: self.position.y,
            heading: self.heading,
            speed: self.speed,
            length: self.script.length,
            width: self.script.width,
            lane_id: graph.map().locate_lane(self.position, self.heading).map(|(l, _)| l),
        }
    }
}

/// Gap-limited speed for an NPC following its path behind other actors.
fn npc_gap_speed(npc: &NpcRuntime, desired: f64, others: &[ActorState]) -> f64 {
    let path = &npc.script.path;
    let mut v = desired;
    for o in others {
        if o.id == npc.script.id {
            continue;
        }
        let p = path.project(o.position());
        let lateral = (npc.script.width + o.width) / 2.0 + 0.5;
        if p.offset.abs() > lateral || p.s <= npc.s {
            continue;
        }
        let gap = p.s - npc.s - (npc.script.length + o.length) / 2.0;
        if gap < NPC_SLOW_GAP {
            v = v.min(desired * ((gap - NPC_MIN_GAP) / (NPC_SLOW_GAP - NPC_MIN_GAP)).clamp(0.0, 1.0));
        }
    }
    v
}

/// Runs the scenario until arrival, timeout, agent failure or shortly after a collision.
pub fn run(scn: &ConcreteScenario, graph: &RouteGraph, agent: &mut dyn Agent, cfg: &SimConfig) -> Result<TraceLog, SimError> {
    if scn.map_id != graph.map_id() {
        return Err(SimError::MapMismatch { expected: scn.map_id.clone(), found: graph.map_id().to_string() });
    }
    let all_routes = scn.ego.path_routes.iter().chain(scn.npcs.iter().flat_map(|n| n.path_routes.iter()));
    for id in all_routes {
        if graph.route(id).is_none() {
            return Err(SimError::UnknownRoute(id.clone()));
        }
    }
    agent.reset(scn)?;
    let dt = cfg.timestep;
    let path: &Polyline = &scn.ego.path;
    let ego_id = scn.monitor.ego_id.clone();

    let mut signs = Vec::new();
    let mut cum = 0.0;
    for id in &scn.ego.path_routes {
        let r = graph.route(id).expect("checked above");
        cum += r.length;
        for s in &r.signs {
            signs.push(PathSign {
                id: s.sign_id.clone(),
                token: s.token.clone(),
                s: path.project(s.position).s,
                line_s: cum,
                value: s.value,
            });
        }
    }
    let conflict_tags: &BTreeSet<String> = &scn.generator.conflict_tags;
    let regions: Vec<(String, Vec<String>, Polygon, f64, f64)> = graph
        .map()
        .regions
        .iter()
        .filter(|r| r.tags.iter().any(|t| conflict_tags.contains(t)))
        .filter_map(|r| {
            let poly = r.polygon();
            region_span(path, &poly).map(|(a, b)| (r.id.clone(), r.tags.clone(), poly, a, b))
        })
        .collect();
    let lane_width = graph.route(&scn.ego.route_id).map_or(3.5, |r| r.lane_width);

    let mut ego_pos = scn.ego.spawn.position;
    let mut ego_heading = scn.ego.spawn.heading;
    let mut ego_speed = scn.ego.initial_speed.max(0.0);
    let mut npcs: Vec<NpcRuntime> = scn
        .npcs
        .iter()
        .map(|n| NpcRuntime {
            script: n,
            s: 0.0,
            started: false,
            speed: 0.0,
            position: n.spawn.position,
            heading: n.spawn.heading,
        })
        .collect();

    let mut frames = Vec::new();
    let mut first_collision: Option<f64> = None;
    let mut failure = None;
    let limit_frames = (cfg.time_limit / dt).round() as usize;
    let (status, end_time) = {
        let mut k = 0usize;
        loop {
            let t = k as f64 * dt;
            for n in npcs.iter_mut() {
                if let NpcProgram::FollowPath { start, .. } = &n.script.program {
                    n.started |= match start {
                        StartTrigger::Immediately => true,
                        StartTrigger::EgoWithin { point, radius } => ego_pos.distance(*point) <= *radius,
                    };
                }
            }
            let ego_state = ActorState {
                id: ego_id.clone(),
                x: ego_pos.x,
                y: ego_pos.y,
                heading: ego_heading,
                speed: ego_speed,
                length: scn.ego.length,
                width: scn.ego.width,
                lane_id: graph.map().locate_lane(ego_pos, ego_heading).map(|(l, _)| l),
            };
            let mut actors = vec![ego_state.clone()];
            actors.extend(npcs.iter().map(|n| n.state(graph)));

            let eb = ego_state.obb();
            if first_collision.is_none() && actors[1..].iter().any(|o| eb.penetration(&o.obb()).is_some()) {
                first_collision = Some(t);
            }
            let terminal = if ego_pos.distance(scn.ego.destination) <= cfg.reach_radius {
                Some(TerminalStatus::Reached)
            } else if first_collision.is_some_and(|t0| t - t0 >= cfg.collision_grace - 1e-9) {
                Some(TerminalStatus::CollisionStop)
            } else {
                None
            };
            if let Some(st) = terminal {
                frames.push(Frame { index: k, time: t, actors, control: None });
                break (st, t);
            }
            if k >= limit_frames {
                frames.push(Frame { index: k, time: t, actors, control: None });
                break (TerminalStatus::Timeout, t);
            }

            let proj = path.project(ego_pos);
            let mut route_ahead = vec![path.sample(proj.s).0];
            let mut acc = 0.0;
            for (i, w) in path.points().windows(2).enumerate() {
                acc += w[0].distance(w[1]);
                if i >= proj.segment && acc > proj.s + 1e-9 {
                    route_ahead.push(w[1]);
                }
            }
            let obs = Observation {
                time: t,
                ego: ego_state.clone(),
                route_ahead,
                path_progress: proj.s,
                path_length: path.length(),
                path_offset: proj.offset,
                lane_id: ego_state.lane_id.clone(),
                lane_offset: graph.map().locate_lane(ego_pos, ego_heading).map(|(_, o)| o),
                lane_width,
                signs_ahead: signs
                    .iter()
                    .filter(|s| s.s - proj.s <= SIGN_HORIZON && s.line_s - proj.s > -1e-9)
                    .map(|s| SignAhead {
                        id: s.id.clone(),
                        token: s.token.clone(),
                        distance: s.s - proj.s,
                        line_distance: s.line_s - proj.s,
                        value: s.value,
                    })
                    .collect(),
                speed_limit: signs.iter().rev().filter(|s| s.token == "speed limit sign" && s.s <= proj.s).find_map(|s| s.value),
                regions_ahead: regions
                    .iter()
                    .filter(|r| r.4 > proj.s)
                    .map(|r| RegionAhead {
                        id: r.0.clone(),
                        tags: r.1.clone(),
                        entry_distance: r.3 - proj.s,
                        exit_distance: r.4 - proj.s,
                        polygon: r.2.clone(),
                    })
                    .collect(),
                others: actors[1..].to_vec(),
                destination: scn.ego.destination,
                following_multiplier: scn.environment.following_multiplier,
            };
            let control = match agent.control(&obs) {
                Ok(c) => c.clamped(),
                Err(e) => {
                    failure = Some(e.to_string());
                    frames.push(Frame { index: k, time: t, actors, control: None });
                    break (TerminalStatus::AgentFailure, t);
                }
            };

            // NPCs move on the states logged for this frame.
            let snapshot = actors.clone();
            frames.push(Frame { index: k, time: t, actors, control: Some(control) });

            ego_heading = crate::geometry::wrap_angle(ego_heading + ego_speed * control.curvature * dt);
            ego_pos = ego_pos + Vec2::from_angle(ego_heading) * (ego_speed * dt);
            ego_speed = (ego_speed + control.acceleration * dt).max(0.0);

            for n in npcs.iter_mut() {
                let desired = n.target_speed();
                if desired <= 0.0 {
                    n.speed = 0.0;
                    continue;
                }
                let v = npc_gap_speed(n, desired, &snapshot);
                let len = n.script.path.length();
                let next = (n.s + v * dt).min(len);
                n.speed = (next - n.s) / dt;
                n.s = next;
                let (p, h) = n.script.path.sample(n.s);
                n.position = p;
                n.heading = h;
            }
            k += 1;
        }
    };

    Ok(TraceLog {
        header: TraceHeader {
            schema: TRACE_SCHEMA.into(),
            scenario_id: scn.scenario_id.clone(),
            map_id: scn.map_id.clone(),
            agent: agent.name(),
            ego_id,
            timestep: dt,
            time_limit: cfg.time_limit,
            status,
            end_time,
            failure,
        },
        frames,
    })
}

/// First contiguous span of the path inside the polygon, sampled at 0.1 m.
pub(crate) fn region_span(path: &Polyline, poly: &Polygon) -> Option<(f64, f64)> {
    const STEP: f64 = 0.1;
    let n = (path.length() / STEP).ceil() as usize;
    let mut entry = None;
    for k in 0..=n {
        let s = (k as f64 * STEP).min(path.length());
        let inside = poly.contains(path.sample(s).0);
        match (entry, inside) {
            (None, true) => entry = Some(s),
            (Some(e), false) => return Some((e, s)),
            _ => {}
        }
    }
    entry.map(|e| (e, path.length()))
}
