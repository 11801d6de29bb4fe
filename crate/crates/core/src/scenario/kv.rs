//! Flat key/value view of a scenario representation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dsl::{Actor, ActorKind, Environment, Oracle, RoadNetwork, ScenarioRep};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KvValue {
    Token(String),
    List(Vec<String>),
}

pub type KvDict = BTreeMap<String, KvValue>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KvError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{0}` has the wrong value shape")]
    WrongShape(String),
    #[error("unexpected key `{0}`")]
    UnexpectedKey(String),
}

const ACTOR_FIELDS: [&str; 4] = ["type", "behavior", "position_reference", "position_relation"];

fn actor_keys(prefix: &str, a: &Actor, out: &mut KvDict) {
    let vals = [&a.actor_type, &a.behavior, &a.position_reference, &a.position_relation];
    for (f, v) in ACTOR_FIELDS.iter().zip(vals) {
        out.insert(format!("{prefix}.{f}"), KvValue::Token(v.clone()));
    }
}

pub fn to_kv(rep: &ScenarioRep) -> KvDict {
    let mut kv = KvDict::new();
    let tok = |s: &str| KvValue::Token(s.to_string());
    kv.insert("weather".into(), tok(&rep.environment.weather));
    kv.insert("time".into(), tok(&rep.environment.time));
    kv.insert("road_type".into(), tok(&rep.road_network.road_type));
    kv.insert("road_marker".into(), tok(&rep.road_network.road_marker));
    kv.insert("traffic_signs".into(), KvValue::List(rep.road_network.traffic_signs.clone()));
    actor_keys("ego", &rep.ego, &mut kv);
    for (i, npc) in rep.npc_actors.iter().enumerate() {
        actor_keys(&format!("npc[{i}]"), npc, &mut kv);
    }
    kv.insert("longitudinal_oracle".into(), KvValue::List(rep.oracle.longitudinal.clone()));
    kv.insert("lateral_oracle".into(), KvValue::List(rep.oracle.lateral.clone()));
    kv
}

pub fn from_kv(kv: &KvDict) -> Result<ScenarioRep, KvError> {
    let token = |k: &str| -> Result<String, KvError> {
        match kv.get(k) {
            Some(KvValue::Token(t)) => Ok(t.clone()),
            Some(_) => Err(KvError::WrongShape(k.into())),
            None => Err(KvError::MissingKey(k.into())),
        }
    };
    let environment = Environment { weather: token("weather")?, time: token("time")? };
    let road_type = token("road_type")?;
    let road_marker = token("road_marker")?;
    let actor = |prefix: &str, kind: ActorKind| -> Result<Actor, KvError> {
        let v: Vec<String> = ACTOR_FIELDS.iter().map(|f| token(&format!("{prefix}.{f}"))).collect::<Result<_, _>>()?;
        Ok(Actor::new(kind, &v[0], &v[1], &v[2], &v[3]))
    };
    let ego = actor("ego", ActorKind::Ego)?;
    let mut npc_actors = Vec::new();
    while kv.contains_key(&format!("npc[{}].type", npc_actors.len())) {
        npc_actors.push(actor(&format!("npc[{}]", npc_actors.len()), ActorKind::Npc)?);
    }
    let list = |k: &str| -> Result<Vec<String>, KvError> {
        match kv.get(k) {
            Some(KvValue::List(l)) => Ok(l.clone()),
            Some(_) => Err(KvError::WrongShape(k.into())),
            None => Err(KvError::MissingKey(k.into())),
        }
    };
    let rep = ScenarioRep {
        environment,
        road_network: RoadNetwork { road_type, road_marker, traffic_signs: list("traffic_signs")? },
        ego,
        oracle: Oracle { longitudinal: list("longitudinal_oracle")?, lateral: list("lateral_oracle")? },
        npc_actors,
    };
    let expected = 5 + 4 * (1 + rep.npc_actors.len()) + 2;
    if kv.len() != expected {
        let extra = kv.keys().find(|k| !to_kv(&rep).contains_key(*k)).cloned().unwrap_or_default();
        return Err(KvError::UnexpectedKey(extra));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(npcs: usize) -> ScenarioRep {
        ScenarioRep {
            environment: Environment { weather: "foggy".into(), time: "daytime".into() },
            road_network: RoadNetwork {
                road_type: "intersection".into(),
                road_marker: "none".into(),
                traffic_signs: vec!["stop sign".into()],
            },
            ego: Actor::new(ActorKind::Ego, "car", "go forward", "intersection", "behind"),
            npc_actors: (0..npcs)
                .map(|i| Actor::new(ActorKind::Npc, "car", if i == 0 { "turn left" } else { "static" }, "ego vehicle", "front"))
                .collect(),
            oracle: Oracle::default(),
        }
    }

    #[test]
    fn round_trip() {
        for n in 0..3 {
            let r = rep(n);
            assert_eq!(from_kv(&to_kv(&r)).unwrap(), r);
        }
    }

    #[test]
    fn npc_keys_are_indexed() {
        let kv = to_kv(&rep(2));
        assert_eq!(kv["npc[0].behavior"], KvValue::Token("turn left".into()));
        assert_eq!(kv["npc[1].behavior"], KvValue::Token("static".into()));
    }

    #[test]
    fn empty_oracles_present() {
        let kv = to_kv(&rep(0));
        assert_eq!(kv["longitudinal_oracle"], KvValue::List(vec![]));
        assert_eq!(kv["lateral_oracle"], KvValue::List(vec![]));
    }

    #[test]
    fn stray_key_rejected() {
        let mut kv = to_kv(&rep(0));
        kv.insert("npc[3].type".into(), KvValue::Token("car".into()));
        assert_eq!(from_kv(&kv), Err(KvError::UnexpectedKey("npc[3].type".into())));
    }
}
