//! Reference ego agents: a rule-abiding driver, its selectively
//! rule-breaking variant, a parked agent and an external-process bridge.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, Control, Observation};
use crate::geometry::{wrap_angle, Polyline, Vec2};

/// Behaviors a violator agent can be told to break.
pub const VIOLATION_TOKENS: [&str; 8] = [
    "stop",
    "yield",
    "decelerate",
    "keep safe distance",
    "speed limit",
    "keep lane",
    "change lane to left",
    "change lane to right",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub cruise_speed: f64,
    pub max_accel: f64,
    pub max_brake: f64,
    /// Deceleration used to plan stops, m/s².
    pub planning_decel: f64,
    pub speed_gain: f64,
    pub stop_offset: f64,
    pub stop_dwell: f64,
    /// Other traffic reaching a junction within this many seconds has priority.
    pub yield_horizon: f64,
    pub headway: f64,
    pub min_gap: f64,
    pub gap_margin: f64,
    pub junction_speed: f64,
    pub lookahead_min: f64,
    pub lookahead_gain: f64,
    pub swerve_offset: f64,
    pub tailgate_gap: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            cruise_speed: 8.0,
            max_accel: 2.0,
            max_brake: 6.0,
            planning_decel: 2.5,
            speed_gain: 3.0,
            stop_offset: 1.5,
            stop_dwell: 1.0,
            yield_horizon: 6.0,
            headway: 2.0,
            min_gap: 5.0,
            gap_margin: 2.0,
            junction_speed: 5.0,
            lookahead_min: 4.0,
            lookahead_gain: 0.8,
            swerve_offset: 2.5,
            tailgate_gap: 2.5,
        }
    }
}

/// Pure-pursuit driver obeying stop signs, right of way, headway, speed
/// limits and lanes, except for the behaviors listed in `violations`.
#[derive(Debug, Clone)]
pub struct ReferenceAgent {
    pub params: AgentParams,
    violations: BTreeSet<String>,
    served_stops: BTreeSet<String>,
    dwell_since: Option<(String, f64)>,
    start_progress: Option<f64>,
}

pub fn compliant_ads() -> ReferenceAgent {
    ReferenceAgent::new(AgentParams::default(), BTreeSet::new())
}

pub fn violator_ads<S: AsRef<str>>(tokens: &[S]) -> Result<ReferenceAgent, AgentError> {
    let mut set = BTreeSet::new();
    for t in tokens {
        let t = t.as_ref().trim();
        if !VIOLATION_TOKENS.contains(&t) {
            return Err(AgentError::UnknownViolationToken(t.to_string()));
        }
        set.insert(t.to_string());
    }
    Ok(ReferenceAgent::new(AgentParams::default(), set))
}

impl ReferenceAgent {
    pub fn new(params: AgentParams, violations: BTreeSet<String>) -> Self {
        ReferenceAgent { params, violations, served_stops: BTreeSet::new(), dwell_since: None, start_progress: None }
    }

    fn breaks(&self, token: &str) -> bool {
        self.violations.contains(token)
    }

    /// Highest speed from which the ego can still halt within `d` meters.
    fn stopping_speed(&self, d: f64) -> f64 {
        (2.0 * self.params.planning_decel * d.max(0.0)).sqrt()
    }

    fn stop_target(&mut self, obs: &Observation) -> f64 {
        let v = obs.ego.speed;
        let next = obs
            .signs_ahead
            .iter()
            .filter(|s| s.token == "stop sign" && !self.served_stops.contains(&s.id))
            .min_by(|a, b| a.line_distance.total_cmp(&b.line_distance));
        let Some(sign) = next else { return f64::INFINITY };
        let d = sign.line_distance - self.params.stop_offset;
        if d <= 0.3 {
            if v < 0.05 {
                let since = match &self.dwell_since {
                    Some((id, t0)) if *id == sign.id => *t0,
                    _ => {
                        self.dwell_since = Some((sign.id.clone(), obs.time));
                        obs.time
                    }
                };
                if obs.time - since >= self.params.stop_dwell - 1e-9 {
                    self.served_stops.insert(sign.id.clone());
                    self.dwell_since = None;
                    return f64::INFINITY;
                }
            }
            return 0.0;
        }
        self.stopping_speed(d)
    }

    fn junction_blocked(&self, obs: &Observation, region: &super::RegionAhead) -> bool {
        obs.others.iter().any(|o| {
            let p = o.position();
            if region.polygon.contains(p) {
                return true;
            }
            if o.speed < 0.1 {
                return false;
            }
            region.polygon.ray_entry(p, Vec2::from_angle(o.heading)).is_some_and(|d| d / o.speed <= self.params.yield_horizon)
        })
    }

    fn target_speed(&mut self, obs: &Observation, ahead: &Polyline) -> f64 {
        let p = self.params.clone();
        let half_len = obs.ego.length / 2.0;
        let mut target = if self.breaks("keep safe distance") { 1.5 * p.cruise_speed } else { p.cruise_speed };

        if !self.breaks("speed limit") {
            if let Some(l) = obs.speed_limit {
                target = target.min(l);
            }
            for s in obs.signs_ahead.iter().filter(|s| s.token == "speed limit sign") {
                if let Some(l) = s.value {
                    target = target.min(l);
                }
            }
        }
        if !self.breaks("stop") {
            target = target.min(self.stop_target(obs));
        }
        for r in &obs.regions_ahead {
            // Once the nose is in and rolling, clearing the junction beats stopping in it.
            let committed = r.entry_distance <= half_len && obs.ego.speed > 0.5;
            if !self.breaks("yield") && !committed && self.junction_blocked(obs, r) {
                target = target.min(self.stopping_speed(r.entry_distance - half_len - 1.0));
            }
            if !self.breaks("decelerate") {
                let v_j = p.junction_speed;
                target = target.min((v_j * v_j + 2.0 * 1.0 * r.entry_distance.max(0.0)).sqrt());
            }
        }
        let mult = obs.following_multiplier.max(1.0);
        for o in &obs.others {
            let proj = ahead.project(o.position());
            if proj.s <= 1e-6 || proj.offset.abs() > obs.lane_width / 2.0 {
                continue;
            }
            let gap = proj.s - (obs.ego.length + o.length) / 2.0;
            let v_follow = if self.breaks("keep safe distance") {
                o.speed + 0.8 * (gap - p.tailgate_gap)
            } else {
                let room = (gap - p.min_gap - p.gap_margin).max(0.0);
                (room / (p.headway * mult * 1.2)).min(self.stopping_speed(room))
            };
            target = target.min(v_follow.max(0.0));
        }
        target.max(0.0)
    }

    fn curvature(&mut self, obs: &Observation, ahead: &Polyline) -> f64 {
        let p = self.params.clone();
        let pos = obs.ego.position();
        let v = obs.ego.speed;
        let lookahead = (p.lookahead_gain * v + 2.0).max(p.lookahead_min);
        let lane_hold = self.breaks("change lane to left") || self.breaks("change lane to right");
        let target = if lane_hold && obs.lane_offset.is_some() {
            let heading = Vec2::from_angle(obs.ego.heading);
            pos + heading * lookahead - heading.perp() * obs.lane_offset.unwrap_or(0.0)
        } else {
            let (mut t, heading) = ahead.sample(lookahead);
            if self.breaks("keep lane") {
                let start = *self.start_progress.get_or_insert(obs.path_progress);
                let s = obs.path_progress + lookahead - start - 10.0;
                if (0.0..=30.0).contains(&s) {
                    let off = 0.5 * p.swerve_offset * (1.0 - (2.0 * std::f64::consts::PI * s / 30.0).cos());
                    t = t + Vec2::from_angle(heading).perp() * off;
                }
            }
            t
        };
        let to = target - pos;
        let dist = to.norm().max(1e-3);
        let alpha = wrap_angle(to.angle() - obs.ego.heading);
        2.0 * alpha.sin() / dist
    }
}

impl Agent for ReferenceAgent {
    fn name(&self) -> String {
        if self.violations.is_empty() {
            "compliant".into()
        } else {
            format!("violator:{}", self.violations.iter().cloned().collect::<Vec<_>>().join(","))
        }
    }

    fn reset(&mut self, _scenario: &crate::scenario::ConcreteScenario) -> Result<(), AgentError> {
        self.served_stops.clear();
        self.dwell_since = None;
        self.start_progress = None;
        Ok(())
    }

    fn control(&mut self, obs: &Observation) -> Result<Control, AgentError> {
        let ahead = Polyline::new(obs.route_ahead.clone());
        let target = self.target_speed(obs, &ahead);
        let v = obs.ego.speed;
        let p = &self.params;
        let accel =
            if target <= 1e-6 && v < 0.3 { -p.max_brake } else { (p.speed_gain * (target - v)).clamp(-p.max_brake, p.max_accel) };
        let curvature = self.curvature(obs, &ahead);
        Ok(Control { acceleration: accel, curvature })
    }
}

/// Never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticAgent;

impl Agent for StaticAgent {
    fn name(&self) -> String {
        "static".into()
    }

    fn control(&mut self, obs: &Observation) -> Result<Control, AgentError> {
        let brake = if obs.ego.speed > 0.0 { -8.0 } else { 0.0 };
        Ok(Control { acceleration: brake, curvature: 0.0 })
    }
}

/// External agent speaking line-delimited JSON: one observation per line
/// to its stdin, one control per line back on its stdout.
pub struct StdioAgent {
    command: String,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl StdioAgent {
    pub fn spawn(command: &str) -> Result<Self, AgentError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| AgentError::Failed(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| AgentError::Failed("no stdin".into()))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| AgentError::Failed("no stdout".into()))?);
        Ok(StdioAgent { command: command.to_string(), child, stdin, stdout })
    }
}

impl Agent for StdioAgent {
    fn name(&self) -> String {
        format!("stdio:{}", self.command)
    }

    fn control(&mut self, obs: &Observation) -> Result<Control, AgentError> {
        let line = serde_json::to_string(obs).map_err(|e| AgentError::Failed(e.to_string()))?;
        writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()).map_err(|e| AgentError::Failed(e.to_string()))?;
        let mut reply = String::new();
        let n = self.stdout.read_line(&mut reply).map_err(|e| AgentError::Failed(e.to_string()))?;
        if n == 0 {
            return Err(AgentError::Failed("agent closed its output".into()));
        }
        serde_json::from_str(reply.trim()).map_err(|e| AgentError::Failed(format!("bad control `{}`: {e}", reply.trim())))
    }
}

impl Drop for StdioAgent {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Builds an agent from `compliant`, `static`, `violator:<t1>,<t2>` or `stdio:<command>`.
pub fn agent_from_spec(spec: &str) -> Result<Box<dyn Agent>, AgentError> {
    if spec == "compliant" {
        return Ok(Box::new(compliant_ads()));
    }
    if spec == "static" {
        return Ok(Box::new(StaticAgent));
    }
    if let Some(tokens) = spec.strip_prefix("violator:") {
        let list: Vec<&str> = tokens.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        return Ok(Box::new(violator_ads(&list)?));
    }
    if let Some(cmd) = spec.strip_prefix("stdio:") {
        return Ok(Box::new(StdioAgent::spawn(cmd)?));
    }
    Err(AgentError::UnknownAgent(spec.to_string()))
}
