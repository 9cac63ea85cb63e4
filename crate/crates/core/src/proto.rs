//! Southbound wire protocol between the controller and switches.
//!
//! Every frame is a 4-byte big-endian length followed by a UTF-8 JSON object
//! with an `"xid"` correlation id and a `"type"` discriminator. Replies echo
//! the xid of the request they answer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataplane::PortStats;
use crate::flow::{FlowEntry, FlowMod};
use crate::topo::Dpid;

/// Largest accepted frame body (1 MiB).
pub const MAX_FRAME_LEN: usize = 1 << 20;

/// Length of the frame header.
pub const HEADER_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub xid: u32,
    #[serde(flatten)]
    pub body: Body,
}

impl Message {
    pub fn new(xid: u32, body: Body) -> Self {
        Message { xid, body }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Body {
    #[serde(rename = "hello")]
    Hello { dpid: Dpid, ports: Vec<u16> },
    #[serde(rename = "echo_req")]
    EchoRequest,
    #[serde(rename = "echo_rep")]
    EchoReply,
    #[serde(rename = "flow_mod")]
    FlowMod(FlowMod),
    #[serde(rename = "flow_mod_ack")]
    FlowModAck,
    #[serde(rename = "stats_req")]
    StatsRequest { kind: StatsKind },
    #[serde(rename = "stats_rep")]
    StatsReply(StatsReply),
    #[serde(rename = "error")]
    Error { code: ErrorCode, text: String },
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::Hello { .. } => "hello",
            Body::EchoRequest => "echo_req",
            Body::EchoReply => "echo_rep",
            Body::FlowMod(_) => "flow_mod",
            Body::FlowModAck => "flow_mod_ack",
            Body::StatsRequest { .. } => "stats_req",
            Body::StatsReply(_) => "stats_rep",
            Body::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsKind {
    Port,
    Flow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum StatsReply {
    Port(Vec<PortStats>),
    Flow(Vec<FlowEntry>),
}

impl StatsReply {
    pub fn kind(&self) -> StatsKind {
        match self {
            StatsReply::Port(_) => StatsKind::Port,
            StatsReply::Flow(_) => StatsKind::Flow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadOutPort,
    BadMatch,
    BadRequest,
    NotReady,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtoError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN} byte limit")]
    FrameTooLarge(usize),
    #[error("malformed message: {0}")]
    Malformed(String),
}

/// Encodes `message` as one length-prefixed frame.
pub fn encode_frame(message: &Message) -> Result<Vec<u8>, ProtoError> {
    let body = serde_json::to_vec(message).map_err(|e| ProtoError::Malformed(e.to_string()))?;
    if body.len() > MAX_FRAME_LEN {
        return Err(ProtoError::FrameTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Reads the body length from a frame header, rejecting oversized frames
/// before any body bytes are buffered.
pub fn frame_len(header: [u8; HEADER_LEN]) -> Result<usize, ProtoError> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(ProtoError::FrameTooLarge(len));
    }
    Ok(len)
}

/// Decodes a frame body (without its header).
pub fn decode_body(body: &[u8]) -> Result<Message, ProtoError> {
    serde_json::from_slice(body).map_err(|e| ProtoError::Malformed(e.to_string()))
}

/// Decodes the first frame in `buf`. Returns the message and the number of
/// bytes consumed, or `None` when `buf` does not yet hold a complete frame.
pub fn decode_frame(buf: &[u8]) -> Result<Option<(Message, usize)>, ProtoError> {
    let Some(header) = buf.get(..HEADER_LEN) else {
        return Ok(None);
    };
    let len = frame_len(header.try_into().expect("4-byte header"))?;
    let Some(body) = buf.get(HEADER_LEN..HEADER_LEN + len) else {
        return Ok(None);
    };
    Ok(Some((decode_body(body)?, HEADER_LEN + len)))
}
