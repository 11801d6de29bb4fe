//! The functional-scenario DSL: typed representation, element catalog,
//! document grammar, validation and structural comparison.

mod catalog;
mod diff;
mod document;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use catalog::{normalize_token, CatalogError, ElementCatalog};
pub use diff::{diff_scenarios, diff_scenarios_with, MatchVector};
pub use document::{parse_scenario_text, serialize_scenario, DslError};
pub use validate::{validate_scenario, TokenStatus, ValidationEntry, ValidationReport};

/// Sentinel element meaning "not specified by the rule".
pub const NONE: &str = "none";
/// Position reference that points at the ego vehicle.
pub const EGO_VEHICLE: &str = "ego vehicle";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioRep {
    pub environment: Environment,
    pub road_network: RoadNetwork,
    pub ego: Actor,
    pub npc_actors: Vec<Actor>,
    pub oracle: Oracle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Environment {
    pub weather: String,
    pub time: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub road_type: String,
    pub road_marker: String,
    pub traffic_signs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Ego,
    Npc,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Actor {
    pub kind: ActorKind,
    pub actor_type: String,
    pub behavior: String,
    pub position_reference: String,
    pub position_relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Oracle {
    pub longitudinal: Vec<String>,
    pub lateral: Vec<String>,
}

impl Oracle {
    pub fn is_empty(&self) -> bool {
        self.longitudinal.is_empty() && self.lateral.is_empty()
    }
}

impl Actor {
    pub fn new(kind: ActorKind, actor_type: &str, behavior: &str, reference: &str, relation: &str) -> Self {
        Self {
            kind,
            actor_type: actor_type.to_string(),
            behavior: behavior.to_string(),
            position_reference: reference.to_string(),
            position_relation: relation.to_string(),
        }
    }

    pub fn field(&self, f: ActorField) -> &str {
        match f {
            ActorField::Type => &self.actor_type,
            ActorField::Behavior => &self.behavior,
            ActorField::Reference => &self.position_reference,
            ActorField::Relation => &self.position_relation,
        }
    }

    fn field_mut(&mut self, f: ActorField) -> &mut String {
        match f {
            ActorField::Type => &mut self.actor_type,
            ActorField::Behavior => &mut self.behavior,
            ActorField::Reference => &mut self.position_reference,
            ActorField::Relation => &mut self.position_relation,
        }
    }
}

/// The eleven DSL subcomponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcomponent {
    Weather,
    Time,
    RoadType,
    RoadMarker,
    TrafficSign,
    ActorType,
    Behavior,
    PositionReference,
    PositionRelation,
    LongitudinalOracle,
    LateralOracle,
}

impl Subcomponent {
    pub const ALL: [Subcomponent; 11] = [
        Subcomponent::Weather,
        Subcomponent::Time,
        Subcomponent::RoadType,
        Subcomponent::RoadMarker,
        Subcomponent::TrafficSign,
        Subcomponent::ActorType,
        Subcomponent::Behavior,
        Subcomponent::PositionReference,
        Subcomponent::PositionRelation,
        Subcomponent::LongitudinalOracle,
        Subcomponent::LateralOracle,
    ];

    /// Machine key, as used in catalog section headers.
    pub fn key(self) -> &'static str {
        match self {
            Subcomponent::Weather => "weather",
            Subcomponent::Time => "time",
            Subcomponent::RoadType => "road_type",
            Subcomponent::RoadMarker => "road_marker",
            Subcomponent::TrafficSign => "traffic_sign",
            Subcomponent::ActorType => "actor_type",
            Subcomponent::Behavior => "behavior",
            Subcomponent::PositionReference => "position_reference",
            Subcomponent::PositionRelation => "position_relation",
            Subcomponent::LongitudinalOracle => "longitudinal_oracle",
            Subcomponent::LateralOracle => "lateral_oracle",
        }
    }

    /// Human-readable name, as used in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Subcomponent::Weather => "weather",
            Subcomponent::Time => "time",
            Subcomponent::RoadType => "road type",
            Subcomponent::RoadMarker => "road marker",
            Subcomponent::TrafficSign => "traffic sign",
            Subcomponent::ActorType => "type",
            Subcomponent::Behavior => "behavior",
            Subcomponent::PositionReference => "position reference",
            Subcomponent::PositionRelation => "position relation",
            Subcomponent::LongitudinalOracle => "longitudinal oracle",
            Subcomponent::LateralOracle => "lateral oracle",
        }
    }
}

impl fmt::Display for Subcomponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown subcomponent `{0}`")]
pub struct UnknownSubcomponent(pub String);

impl FromStr for Subcomponent {
    type Err = UnknownSubcomponent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let key = match key.as_str() {
            "type" => "actor_type",
            "traffic_signs" => "traffic_sign",
            "longitudinal" => "longitudinal_oracle",
            "lateral" => "lateral_oracle",
            other => other,
        };
        Subcomponent::ALL.into_iter().find(|c| c.key() == key).ok_or_else(|| UnknownSubcomponent(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActorSlot {
    Ego,
    Npc(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActorField {
    Type,
    Behavior,
    Reference,
    Relation,
}

impl ActorField {
    pub const ALL: [ActorField; 4] = [ActorField::Type, ActorField::Behavior, ActorField::Reference, ActorField::Relation];

    pub fn subcomponent(self) -> Subcomponent {
        match self {
            ActorField::Type => Subcomponent::ActorType,
            ActorField::Behavior => Subcomponent::Behavior,
            ActorField::Reference => Subcomponent::PositionReference,
            ActorField::Relation => Subcomponent::PositionRelation,
        }
    }

    fn path(self) -> &'static str {
        match self {
            ActorField::Type => "type",
            ActorField::Behavior => "behavior",
            ActorField::Reference => "position.reference",
            ActorField::Relation => "position.relation",
        }
    }
}

/// One field of a [`ScenarioRep`]; list-valued fields are a single slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Weather,
    Time,
    RoadType,
    RoadMarker,
    TrafficSigns,
    Actor(ActorSlot, ActorField),
    Longitudinal,
    Lateral,
}

impl Slot {
    pub fn subcomponent(self) -> Subcomponent {
        match self {
            Slot::Weather => Subcomponent::Weather,
            Slot::Time => Subcomponent::Time,
            Slot::RoadType => Subcomponent::RoadType,
            Slot::RoadMarker => Subcomponent::RoadMarker,
            Slot::TrafficSigns => Subcomponent::TrafficSign,
            Slot::Actor(_, f) => f.subcomponent(),
            Slot::Longitudinal => Subcomponent::LongitudinalOracle,
            Slot::Lateral => Subcomponent::LateralOracle,
        }
    }

    pub fn is_list(self) -> bool {
        matches!(self, Slot::TrafficSigns | Slot::Longitudinal | Slot::Lateral)
    }

    /// All slots of a representation with `npc_count` NPCs, in document order.
    pub fn all(npc_count: usize) -> Vec<Slot> {
        let mut v = vec![Slot::Weather, Slot::Time, Slot::RoadType, Slot::RoadMarker, Slot::TrafficSigns];
        let actors = std::iter::once(ActorSlot::Ego).chain((0..npc_count).map(ActorSlot::Npc));
        for a in actors {
            v.extend(ActorField::ALL.iter().map(|f| Slot::Actor(a, *f)));
        }
        v.push(Slot::Longitudinal);
        v.push(Slot::Lateral);
        v
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Weather => f.write_str("environment.weather"),
            Slot::Time => f.write_str("environment.time"),
            Slot::RoadType => f.write_str("road_network.road_type"),
            Slot::RoadMarker => f.write_str("road_network.road_marker"),
            Slot::TrafficSigns => f.write_str("road_network.traffic_signs"),
            Slot::Actor(ActorSlot::Ego, field) => write!(f, "actors.ego.{}", field.path()),
            Slot::Actor(ActorSlot::Npc(i), field) => write!(f, "actors.npc_actors[{i}].{}", field.path()),
            Slot::Longitudinal => f.write_str("oracle.longitudinal"),
            Slot::Lateral => f.write_str("oracle.lateral"),
        }
    }
}

/// Address of a single token: a slot plus an index for list-valued slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenPath {
    pub slot: Slot,
    pub index: Option<usize>,
}

impl fmt::Display for TokenPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{i}]", self.slot),
            None => write!(f, "{}", self.slot),
        }
    }
}

impl ScenarioRep {
    pub fn actor(&self, slot: ActorSlot) -> Option<&Actor> {
        match slot {
            ActorSlot::Ego => Some(&self.ego),
            ActorSlot::Npc(i) => self.npc_actors.get(i),
        }
    }

    /// Scalar value of a slot, or the list for list-valued slots.
    pub fn slot_tokens(&self, slot: Slot) -> Vec<&str> {
        match slot {
            Slot::Weather => vec![&self.environment.weather],
            Slot::Time => vec![&self.environment.time],
            Slot::RoadType => vec![&self.road_network.road_type],
            Slot::RoadMarker => vec![&self.road_network.road_marker],
            Slot::TrafficSigns => self.road_network.traffic_signs.iter().map(String::as_str).collect(),
            Slot::Actor(a, f) => self.actor(a).map(|x| vec![x.field(f)]).unwrap_or_default(),
            Slot::Longitudinal => self.oracle.longitudinal.iter().map(String::as_str).collect(),
            Slot::Lateral => self.oracle.lateral.iter().map(String::as_str).collect(),
        }
    }

    /// Every token in document order with its path.
    pub fn tokens(&self) -> Vec<(TokenPath, &str)> {
        let mut out = Vec::new();
        for slot in Slot::all(self.npc_actors.len()) {
            let toks = self.slot_tokens(slot);
            if slot.is_list() {
                out.extend(toks.into_iter().enumerate().map(|(i, t)| (TokenPath { slot, index: Some(i) }, t)));
            } else {
                out.extend(toks.into_iter().map(|t| (TokenPath { slot, index: None }, t)));
            }
        }
        out
    }

    pub fn token(&self, path: TokenPath) -> Option<&str> {
        let toks = self.slot_tokens(path.slot);
        toks.get(path.index.unwrap_or(0)).copied()
    }

    /// Replaces one token. List slots are re-deduplicated afterwards.
    pub fn set_token(&mut self, path: TokenPath, value: &str) -> bool {
        let value = value.to_string();
        let slot: &mut String = match path.slot {
            Slot::Weather => &mut self.environment.weather,
            Slot::Time => &mut self.environment.time,
            Slot::RoadType => &mut self.road_network.road_type,
            Slot::RoadMarker => &mut self.road_network.road_marker,
            Slot::Actor(ActorSlot::Ego, f) => self.ego.field_mut(f),
            Slot::Actor(ActorSlot::Npc(i), f) => match self.npc_actors.get_mut(i) {
                Some(a) => a.field_mut(f),
                None => return false,
            },
            Slot::TrafficSigns | Slot::Longitudinal | Slot::Lateral => {
                let list = match path.slot {
                    Slot::TrafficSigns => &mut self.road_network.traffic_signs,
                    Slot::Longitudinal => &mut self.oracle.longitudinal,
                    _ => &mut self.oracle.lateral,
                };
                let Some(item) = list.get_mut(path.index.unwrap_or(0)) else {
                    return false;
                };
                *item = value;
                dedup_in_place(list);
                return true;
            }
        };
        *slot = value;
        true
    }
}

pub(crate) fn dedup_in_place(list: &mut Vec<String>) {
    let mut seen = std::collections::HashSet::new();
    list.retain(|t| seen.insert(t.clone()));
}
