use serde::{Deserialize, Serialize};

use super::GenError;
use crate::dsl::Oracle;
use crate::geometry::Polygon;
use crate::monitor::{Check, CheckSpec, OracleKind, Side};

/// Map geometry available to the oracle checks of one scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Anchors {
    /// Stop line as arc length along the ego path.
    pub stop_line_s: Option<f64>,
    pub conflict_region: Option<Polygon>,
    pub privileged: Vec<String>,
    /// Deceleration window `(trigger_s, exit_s)` along the ego path.
    pub decelerate_zone: Option<(f64, f64)>,
    pub lead: Option<String>,
    pub weather_multiplier: f64,
    pub lane_width: Option<f64>,
    /// `(origin lane, target lane)` for a change to the left.
    pub lane_change_left: Option<(String, String)>,
    pub lane_change_right: Option<(String, String)>,
    /// `(limit m/s, start_s, end_s)`.
    pub speed_limit: Option<(f64, f64, f64)>,
}

fn check_for(token: &str, a: &Anchors) -> Result<Check, GenError> {
    let missing = || GenError::MissingAnchor(token.to_string());
    Ok(match token {
        "stop" => Check::Stop { line_s: a.stop_line_s.ok_or_else(missing)? },
        "yield" => Check::Yield { region: a.conflict_region.clone().ok_or_else(missing)?, privileged: a.privileged.clone() },
        "decelerate" => {
            let (trigger_s, exit_s) = a.decelerate_zone.ok_or_else(missing)?;
            Check::Decelerate { trigger_s, exit_s }
        }
        "keep safe distance" => Check::SafeDistance { lead: a.lead.clone(), weather_multiplier: a.weather_multiplier },
        "speed limit" => {
            let (limit, start_s, end_s) = a.speed_limit.ok_or_else(missing)?;
            Check::SpeedLimit { limit, start_s, end_s }
        }
        "keep lane" => Check::KeepLane { lane_width: a.lane_width.ok_or_else(missing)? },
        "change lane to left" | "change lane to right" => {
            let (direction, pair) =
                if token.ends_with("left") { (Side::Left, &a.lane_change_left) } else { (Side::Right, &a.lane_change_right) };
            let (origin_lane, target_lane) = pair.clone().ok_or_else(missing)?;
            Check::LaneChange { direction, origin_lane, target_lane }
        }
        other => return Err(GenError::UnsupportedOracle(other.to_string())),
    })
}

/// One check per oracle token, longitudinal first.
pub fn resolve_oracles(oracle: &Oracle, anchors: &Anchors) -> Result<Vec<CheckSpec>, GenError> {
    let lon = oracle.longitudinal.iter().map(|t| (t, OracleKind::Longitudinal));
    let lat = oracle.lateral.iter().map(|t| (t, OracleKind::Lateral));
    lon.chain(lat).map(|(token, kind)| Ok(CheckSpec { token: token.clone(), kind, check: check_for(token, anchors)? })).collect()
}
