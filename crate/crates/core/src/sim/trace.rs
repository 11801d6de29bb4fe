//! Per-frame trace logs and their JSONL persistence.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Control;
use crate::geometry::{Obb, Vec2};

pub const TRACE_SCHEMA: &str = "target.trace.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_id: Option<String>,
}

impl ActorState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn obb(&self) -> Obb {
        Obb { center: self.position(), heading: self.heading, length: self.length, width: self.width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub index: usize,
    pub time: f64,
    pub actors: Vec<ActorState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Control>,
}

impl Frame {
    pub fn actor(&self, id: &str) -> Option<&ActorState> {
        self.actors.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalStatus {
    Reached,
    Timeout,
    CollisionStop,
    AgentFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub scenario_id: String,
    pub map_id: String,
    pub agent: String,
    pub ego_id: String,
    pub timestep: f64,
    pub time_limit: f64,
    pub status: TerminalStatus,
    /// Simulated time at termination.
    pub end_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub header: TraceHeader,
    pub frames: Vec<Frame>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no frames")]
    Empty,
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
}

impl TraceLog {
    pub fn ego_id(&self) -> &str {
        &self.header.ego_id
    }

    pub fn timestep(&self) -> f64 {
        self.header.timestep
    }

    pub fn ego(&self, frame: usize) -> Option<&ActorState> {
        self.frames.get(frame).and_then(|f| f.actor(&self.header.ego_id))
    }

    /// JSONL: a header line followed by one frame per line.
    pub fn to_jsonl(&self) -> Result<String, TraceError> {
        if self.frames.is_empty() {
            return Err(TraceError::Empty);
        }
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for f in &self.frames {
            out.push_str(&serde_json::to_string(f).expect("frame serializes"));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, TraceError> {
        let mut header: Option<TraceHeader> = None;
        let mut frames = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| TraceError::Parse { line: line_no, message: e.to_string() };
            if header.is_none() {
                let h: TraceHeader = serde_json::from_str(&line).map_err(parse_err)?;
                if h.schema != TRACE_SCHEMA {
                    return Err(TraceError::Parse { line: line_no, message: format!("unsupported schema `{}`", h.schema) });
                }
                header = Some(h);
            } else {
                frames.push(serde_json::from_str::<Frame>(&line).map_err(parse_err)?);
            }
        }
        let header = header.ok_or(TraceError::Empty)?;
        if frames.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(TraceLog { header, frames })
    }
}

pub fn write_trace(log: &TraceLog, path: &Path) -> Result<(), TraceError> {
    let text = log.to_jsonl()?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceLog, TraceError> {
    let f = std::fs::File::open(path)?;
    TraceLog::from_jsonl(std::io::BufReader::new(f))
}
