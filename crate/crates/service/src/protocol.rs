//! Wire messages and framing: each message is a 4-byte big-endian length
//! followed by that many bytes of UTF-8 JSON. Every JSON object may carry
//! `"v": 1`; other versions are refused.

use std::io::{self, Read, Write};

use devnet::io::{HandleEntry, NetFile};
use devnet::net::GridEdge;
use devnet::solver::SolverReport;
use devnet::VertexId;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u64 = 1;
/// Frames larger than this are skipped and answered with a protocol error.
pub const MAX_FRAME: usize = 64 << 20;

/// Client requests. All but `subscribe` name the revision they were written
/// against and are refused when it is not the session's current one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Load { revision: u64, net: NetFile },
    SetHandles { revision: u64, handles: Vec<HandleEntry> },
    MoveHandle { revision: u64, id: VertexId, target: [f64; 3] },
    Glue { revision: u64, pairs: Vec<[VertexId; 2]> },
    Cut { revision: u64, seam: Vec<GridEdge> },
    Solve {
        revision: u64,
        #[serde(default)]
        params: SolveParams,
    },
    Subscribe { channels: Vec<Channel> },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Load { .. } => "load",
            Command::SetHandles { .. } => "set_handles",
            Command::MoveHandle { .. } => "move_handle",
            Command::Glue { .. } => "glue",
            Command::Cut { .. } => "cut",
            Command::Solve { .. } => "solve",
            Command::Subscribe { .. } => "subscribe",
        }
    }

    /// The revision a state-changing command was written against.
    pub fn revision(&self) -> Option<u64> {
        match self {
            Command::Load { revision, .. }
            | Command::SetHandles { revision, .. }
            | Command::MoveHandle { revision, .. }
            | Command::Glue { revision, .. }
            | Command::Cut { revision, .. }
            | Command::Solve { revision, .. } => Some(*revision),
            Command::Subscribe { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Geometry,
    Diagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlay {
    Rulings,
    GaussMap,
}

/// Optional solve settings; missing fields keep the session's values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub w_iso: Option<f64>,
    pub w_pos: Option<f64>,
    pub w0: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_outer: Option<usize>,
    #[serde(default)]
    pub overlays: Vec<Overlay>,
    /// Run to completion and make the result the new base and frame net.
    #[serde(default)]
    pub commit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub converged: bool,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub constraint_norm: f64,
    pub energy: f64,
}

impl From<&SolverReport> for ReportSummary {
    fn from(r: &SolverReport) -> Self {
        ReportSummary {
            converged: r.converged,
            outer_iters: r.outer_iters,
            inner_iters_total: r.inner_iters_total,
            constraint_norm: r.final_constraint_norm,
            energy: r.final_energy,
        }
    }
}

/// Solved positions. `delta` lists every vertex that moved since the last
/// geometry message; with `full` set it lists all vertices and `cells`
/// carries the topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryUpdate {
    pub revision: u64,
    pub vertex_count: usize,
    pub full: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<Option<[VertexId; 4]>>>,
    pub delta: Vec<(VertexId, [f64; 3])>,
    pub report: ReportSummary,
    /// Ruling direction per vertex where one is defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rulings: Option<Vec<Option<[f64; 3]>>>,
    /// Unit normal per inner vertex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Option<[f64; 3]>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// The command was applied; `revision` is the new current revision.
    Ack { revision: u64, command: String },
    /// Stale revision; `revision` is the authoritative current one.
    Rejected { revision: u64, command: String, reason: String },
    /// The command was well formed but could not be applied.
    Error { revision: u64, command: String, message: String },
    /// The frame was not a valid message. The connection stays open.
    ProtocolError { message: String },
    Geometry(GeometryUpdate),
    Diagnostics { revision: u64, message: String, report: ReportSummary },
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("message is not valid JSON: {0}")]
    Json(String),
    #[error("unsupported protocol version {0}")]
    Version(Value),
    #[error("{0}")]
    Schema(String),
}

/// Parses one client message, checking and stripping the version field.
pub fn decode_command(bytes: &[u8]) -> Result<Command, DecodeError> {
    let mut value: Value = serde_json::from_slice(bytes).map_err(|e| DecodeError::Json(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        if let Some(v) = obj.remove("v") {
            if v.as_u64() != Some(PROTOCOL_VERSION) {
                return Err(DecodeError::Version(v));
            }
        }
    }
    serde_json::from_value(value).map_err(|e| DecodeError::Schema(e.to_string()))
}

/// Serializes `msg` with the version field added.
pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    let mut value = serde_json::to_value(msg).expect("protocol messages serialize");
    if let Some(obj) = value.as_object_mut() {
        obj.insert("v".into(), Value::from(PROTOCOL_VERSION));
    }
    serde_json::to_vec(&value).expect("protocol messages serialize")
}

pub fn decode_server_message(bytes: &[u8]) -> Result<ServerMessage, DecodeError> {
    let mut value: Value = serde_json::from_slice(bytes).map_err(|e| DecodeError::Json(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("v");
    }
    serde_json::from_value(value).map_err(|e| DecodeError::Schema(e.to_string()))
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// What [`read_frame`] found on the stream.
#[derive(Debug, PartialEq)]
pub enum Frame {
    Message(Vec<u8>),
    /// A frame over [`MAX_FRAME`] bytes, already skipped.
    Oversized(usize),
    Closed,
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Frame> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(Frame::Closed),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        io::copy(&mut r.take(len as u64), &mut io::sink())?;
        return Ok(Frame::Oversized(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Frame::Message(buf))
}
