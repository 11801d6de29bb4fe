//! Committed data tables: environment parameters and actor dimensions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GenError;
use crate::dsl::{Environment, NONE};

const FOLLOWING_KEY: &str = "following";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentTable {
    pub weather: BTreeMap<String, BTreeMap<String, f64>>,
    pub time: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Resolved simulator parameters for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    pub weather: String,
    pub time: String,
    pub weather_params: BTreeMap<String, f64>,
    pub time_params: BTreeMap<String, f64>,
    /// Headway multiplier for the safe-distance oracle and the reference agents.
    pub following_multiplier: f64,
}

impl EnvironmentTable {
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/environment.toml")).expect("builtin environment table is valid")
    }

    pub fn parse(text: &str) -> Result<Self, GenError> {
        toml::from_str(text).map_err(|e| GenError::Table(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path).map_err(|e| GenError::Table(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Maps the weather and time tokens through the table.
pub fn resolve_environment(env: &Environment, table: &EnvironmentTable) -> Result<EnvironmentParams, GenError> {
    let lookup = |map: &BTreeMap<String, BTreeMap<String, f64>>, sub: &str, token: &str| {
        if token == NONE {
            return Ok(BTreeMap::new());
        }
        map.get(token).cloned().ok_or_else(|| GenError::UnmappedToken { subcomponent: sub.into(), token: token.into() })
    };
    let mut weather_params = lookup(&table.weather, "weather", &env.weather)?;
    let following_multiplier = weather_params.remove(FOLLOWING_KEY).unwrap_or(1.0);
    let time_params = lookup(&table.time, "time", &env.time)?;
    Ok(EnvironmentParams {
        weather: env.weather.clone(),
        time: env.time.clone(),
        weather_params,
        time_params,
        following_multiplier,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub length: f64,
    pub width: f64,
    /// Scripted cruise speed, m/s.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorTable(pub BTreeMap<String, ActorSpec>);

impl ActorTable {
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/actors.toml")).expect("builtin actor table is valid")
    }

    pub fn parse(text: &str) -> Result<Self, GenError> {
        toml::from_str(text).map_err(|e| GenError::Table(e.to_string()))
    }

    /// `none` stands for a passenger car.
    pub fn get(&self, actor_type: &str) -> Result<ActorSpec, GenError> {
        let key = if actor_type == NONE { "car" } else { actor_type };
        self.0.get(key).copied().ok_or_else(|| GenError::UnmappedToken { subcomponent: "type".into(), token: actor_type.into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(w: &str, t: &str) -> Environment {
        Environment { weather: w.into(), time: t.into() }
    }

    #[test]
    fn foggy_daytime() {
        let p = resolve_environment(&env("foggy", "daytime"), &EnvironmentTable::builtin()).unwrap();
        assert_eq!(p.weather_params, BTreeMap::from([("fog_density".to_string(), 0.5)]));
        assert_eq!(p.time_params, BTreeMap::from([("sun_altitude_deg".to_string(), 60.0)]));
        assert_eq!(p.following_multiplier, 1.5);
    }

    #[test]
    fn sentinel_and_dry() {
        let p = resolve_environment(&env("none", "none"), &EnvironmentTable::builtin()).unwrap();
        assert!(p.weather_params.is_empty() && p.time_params.is_empty());
        assert_eq!(p.following_multiplier, 1.0);
        let p = resolve_environment(&env("sunny", "nighttime"), &EnvironmentTable::builtin()).unwrap();
        assert_eq!(p.following_multiplier, 1.0);
    }

    #[test]
    fn unmapped_weather() {
        let e = resolve_environment(&env("plasma storm", "daytime"), &EnvironmentTable::builtin()).unwrap_err();
        assert!(matches!(e, GenError::UnmappedToken { ref token, .. } if token == "plasma storm"));
    }

    #[test]
    fn actor_table() {
        let t = ActorTable::builtin();
        assert_eq!(t.get("car").unwrap().length, 4.5);
        assert_eq!(t.get("none").unwrap(), t.get("car").unwrap());
        assert!(t.get("hovercraft").is_err());
    }
}
