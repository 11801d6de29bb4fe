//! Compiling a scenario representation onto a route graph.

mod generate;
mod kv;
mod oracles;
mod search;
mod tables;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{Polyline, Vec2};
use crate::map::MapError;
use crate::monitor::MonitorConfig;

pub use generate::{generate, Generator};
pub use kv::{from_kv, to_kv, KvDict, KvError, KvValue};
pub use oracles::{resolve_oracles, Anchors};
pub use search::{
    behavior_matches, filter_routes, find_ego_routes, find_npc_assignment, npc_plan, position_matches, NpcPlan, Reference,
    SIGN_LOOKBACK,
};
pub use tables::{resolve_environment, ActorSpec, ActorTable, EnvironmentParams, EnvironmentTable};

pub const SCENARIO_SCHEMA: &str = "target.scenario.v1";

/// Tunables for route search and placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Radius of the "nearby" predicate for NPC routes, meters.
    pub nearby_radius: f64,
    /// Maximum absolute heading change of a straight-through route, degrees.
    pub straight_max_deg: f64,
    pub turn_min_deg: f64,
    pub turn_max_deg: f64,
    /// Direction dot product above which two routes count as aligned.
    pub aligned_dot: f64,
    /// Direction dot product below which two routes count as opposed.
    pub opposite_dot: f64,
    /// Distance the ego destination lies past the scenario region, meters.
    pub destination_extension: f64,
    /// Distance NPC paths continue past their assigned route, meters.
    pub npc_extension: f64,
    /// Upstream run-up for NPCs whose route conflicts with the ego route, meters.
    pub npc_lead_in: f64,
    /// Conflicting NPCs start once the ego is this close to the conflict point, meters.
    pub npc_trigger_radius: f64,
    /// Minimum spawn separation as a multiple of the longer vehicle length.
    pub spawn_clearance: f64,
    /// Region tags that mark junction-like areas where right of way applies.
    pub conflict_tags: BTreeSet<String>,
    pub time_limit: f64,
    /// Shuffle candidate order instead of lowest-id tie-breaking.
    pub random_tie_break: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            nearby_radius: 30.0,
            straight_max_deg: 30.0,
            turn_min_deg: 30.0,
            turn_max_deg: 150.0,
            aligned_dot: 0.7,
            opposite_dot: -0.7,
            destination_extension: 40.0,
            npc_extension: 60.0,
            npc_lead_in: 15.0,
            npc_trigger_radius: 30.0,
            spawn_clearance: 2.0,
            conflict_tags: ["intersection", "t-intersection", "roundabout", "crosswalk", "railway crossing"]
                .into_iter()
                .map(String::from)
                .collect(),
            time_limit: 60.0,
            random_tie_break: false,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("no table entry for {subcomponent} `{token}`")]
    UnmappedToken { subcomponent: String, token: String },
    #[error("oracle `{0}` needs a map anchor this scenario does not provide")]
    MissingAnchor(String),
    #[error("no check implements oracle `{0}`")]
    UnsupportedOracle(String),
    #[error("the scenario cannot be generated on map `{map_id}`")]
    ScenarioUnsupportedOnMap { map_id: String },
    #[error("data table: {0}")]
    Table(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSetup {
    pub actor_type: String,
    pub length: f64,
    pub width: f64,
    pub route_id: String,
    /// Spawn predecessor, ego route, then the successor chain to the destination.
    pub path_routes: Vec<String>,
    pub path: Polyline,
    pub spawn: Pose,
    pub initial_speed: f64,
    pub destination: Vec2,
    pub destination_waypoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "when", rename_all = "snake_case")]
pub enum StartTrigger {
    Immediately,
    /// Start once the ego center is within `radius` of `point`.
    EgoWithin {
        point: Vec2,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "program", rename_all = "snake_case")]
pub enum NpcProgram {
    Static,
    FollowPath { speed: f64, start: StartTrigger },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcScript {
    pub id: String,
    pub actor_type: String,
    pub behavior: String,
    pub length: f64,
    pub width: f64,
    pub route_id: String,
    pub path_routes: Vec<String>,
    pub path: Polyline,
    pub spawn: Pose,
    pub destination: Vec2,
    pub program: NpcProgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteScenario {
    pub schema: String,
    pub scenario_id: String,
    pub rule_id: String,
    pub map_id: String,
    pub environment: EnvironmentParams,
    pub ego: EgoSetup,
    pub npcs: Vec<NpcScript>,
    pub monitor: MonitorConfig,
    pub generator: GeneratorConfig,
}

impl ConcreteScenario {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let scn: ConcreteScenario = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if scn.schema != SCENARIO_SCHEMA {
            return Err(format!("unsupported scenario schema `{}`", scn.schema));
        }
        Ok(scn)
    }
}
