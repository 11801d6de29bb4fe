//! Trace evaluation: per-oracle checks, collision detection and the
//! three-verdict test report.

mod checks;

use serde::{Deserialize, Serialize};

use crate::geometry::{Polygon, Polyline};
use crate::sim::trace::{TerminalStatus, TraceLog};

pub use checks::{
    check_decelerate, check_keep_lane, check_lane_change, check_safe_distance, check_speed_limit, check_stop, check_yield,
    detect_collisions, CheckOutcome,
};

pub const REPORT_SCHEMA: &str = "target.report.v1";

/// Numeric thresholds shared by all checks. Echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub stop_speed: f64,
    pub stop_dwell: f64,
    pub stop_zone: f64,
    pub yield_horizon: f64,
    pub headway: f64,
    pub min_gap: f64,
    pub lane_margin: f64,
    pub speed_tolerance: f64,
    pub debounce_frames: usize,
    pub wet_multiplier: f64,
    pub decelerate_delta: f64,
    pub decelerate_lead_in: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            stop_speed: 0.1,
            stop_dwell: 0.5,
            stop_zone: 3.0,
            yield_horizon: 3.0,
            headway: 2.0,
            min_gap: 5.0,
            lane_margin: 0.3,
            speed_tolerance: 0.5,
            debounce_frames: 2,
            wet_multiplier: 1.5,
            decelerate_delta: 2.0,
            decelerate_lead_in: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Geometry a single oracle needs. Distances along the ego path are arc lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    Stop { line_s: f64 },
    Yield { region: Polygon, privileged: Vec<String> },
    Decelerate { trigger_s: f64, exit_s: f64 },
    SafeDistance { lead: Option<String>, weather_multiplier: f64 },
    KeepLane { lane_width: f64 },
    LaneChange { direction: Side, origin_lane: String, target_lane: String },
    SpeedLimit { limit: f64, start_s: f64, end_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Longitudinal,
    Lateral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub token: String,
    pub kind: OracleKind,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub scenario_id: String,
    pub rule_id: String,
    pub map_id: String,
    pub ego_id: String,
    /// Centerline the ego is expected to follow, spawn to destination.
    pub ego_path: Polyline,
    pub checks: Vec<CheckSpec>,
    pub time_limit: f64,
    pub collision_enabled: bool,
    pub thresholds: Thresholds,
}

impl MonitorConfig {
    pub fn longitudinal(&self) -> impl Iterator<Item = &CheckSpec> {
        self.checks.iter().filter(|c| c.kind == OracleKind::Longitudinal)
    }

    pub fn lateral(&self) -> impl Iterator<Item = &CheckSpec> {
        self.checks.iter().filter(|c| c.kind == OracleKind::Lateral)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub token: String,
    pub first_frame: usize,
    pub last_frame: usize,
    pub measured: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub actors: [String; 2],
    pub first_frame: usize,
    pub last_frame: usize,
    pub time: f64,
    pub max_penetration: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub violations: usize,
    pub collisions: usize,
    pub timeout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clean,
    Timeout,
    Violation,
    Collision,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Clean => 0,
            Verdict::Violation => 4,
            Verdict::Collision => 5,
            Verdict::Timeout => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: String,
    pub scenario_id: String,
    pub rule_id: String,
    pub map_id: String,
    pub agent: String,
    pub status: TerminalStatus,
    pub end_time: f64,
    pub rule_violations: Vec<Violation>,
    pub collisions: Vec<CollisionEvent>,
    pub timeout: bool,
    /// Checks whose trigger was never reached; satisfied only vacuously.
    pub check_not_exercised: Vec<String>,
    pub summary: Summary,
    pub thresholds: Thresholds,
}

impl TestReport {
    /// Highest-severity verdict: collision > violation > timeout.
    pub fn verdict(&self) -> Verdict {
        if !self.collisions.is_empty() {
            Verdict::Collision
        } else if !self.rule_violations.is_empty() {
            Verdict::Violation
        } else if self.timeout {
            Verdict::Timeout
        } else {
            Verdict::Clean
        }
    }

    /// Plain-text table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "scenario {}  rule {}  map {}  agent {}\nstatus {:?} at {:.2} s\n",
            self.scenario_id, self.rule_id, self.map_id, self.agent, self.status, self.end_time
        );
        out.push_str(&format!("{:<22} {:>8} {:>8}  detail\n", "item", "first", "last"));
        for v in &self.rule_violations {
            out.push_str(&format!("{:<22} {:>8} {:>8}  {}\n", v.token, v.first_frame, v.last_frame, v.message));
        }
        for c in &self.collisions {
            out.push_str(&format!(
                "{:<22} {:>8} {:>8}  {} vs {}, depth {:.3} m\n",
                "collision", c.first_frame, c.last_frame, c.actors[0], c.actors[1], c.max_penetration
            ));
        }
        for t in &self.check_not_exercised {
            out.push_str(&format!("{:<22} {:>8} {:>8}  not exercised\n", t, "-", "-"));
        }
        out.push_str(&format!(
            "violations {}  collisions {}  timeout {}  verdict {:?}\n",
            self.summary.violations,
            self.summary.collisions,
            self.summary.timeout,
            self.verdict()
        ));
        out
    }
}

/// Runs one configured check.
pub fn evaluate_check(trace: &TraceLog, cfg: &MonitorConfig, spec: &CheckSpec) -> CheckOutcome {
    let th = &cfg.thresholds;
    let path = &cfg.ego_path;
    let mut out = match &spec.check {
        Check::Stop { line_s } => check_stop(trace, path, *line_s, th),
        Check::Yield { region, privileged } => check_yield(trace, region, privileged, th),
        Check::Decelerate { trigger_s, exit_s } => check_decelerate(trace, path, *trigger_s, *exit_s, th),
        Check::SafeDistance { lead, weather_multiplier } => check_safe_distance(trace, lead.as_deref(), *weather_multiplier, th),
        Check::KeepLane { lane_width } => check_keep_lane(trace, path, *lane_width, th),
        Check::LaneChange { direction, origin_lane, target_lane } => {
            check_lane_change(trace, *direction, origin_lane, target_lane)
        }
        Check::SpeedLimit { limit, start_s, end_s } => check_speed_limit(trace, path, *limit, *start_s, *end_s, th),
    };
    if let Some(v) = out.violation.as_mut() {
        v.token = spec.token.clone();
    }
    out
}

pub fn make_report(trace: &TraceLog, cfg: &MonitorConfig) -> TestReport {
    let mut rule_violations = Vec::new();
    let mut not_exercised = Vec::new();
    for spec in &cfg.checks {
        let out = evaluate_check(trace, cfg, spec);
        if !out.exercised {
            not_exercised.push(spec.token.clone());
        }
        rule_violations.extend(out.violation);
    }
    let collisions = if cfg.collision_enabled { detect_collisions(trace) } else { Vec::new() };
    let timeout = trace.header.status == TerminalStatus::Timeout;
    TestReport {
        schema: REPORT_SCHEMA.into(),
        scenario_id: cfg.scenario_id.clone(),
        rule_id: cfg.rule_id.clone(),
        map_id: cfg.map_id.clone(),
        agent: trace.header.agent.clone(),
        status: trace.header.status,
        end_time: trace.header.end_time,
        summary: Summary { violations: rule_violations.len(), collisions: collisions.len(), timeout },
        rule_violations,
        collisions,
        timeout,
        check_not_exercised: not_exercised,
        thresholds: cfg.thresholds.clone(),
    }
}
