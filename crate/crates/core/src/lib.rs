//! Core model for an intent-based networking controller.
//!
//! Everything in this crate is synchronous and free of I/O so it can be shared
//! between the controller, the simulated switches and the browser demo:
//!
//! - [`topo`]: topology documents, switches, links, city endpoints and paths.
//! - [`flow`]: flow entries and prioritized lookup tables.
//! - [`dataplane`]: switch state, port statistics and packet tracing.
//! - [`intent`]: intent requests, simple-path enumeration, path scoring and
//!   selection, and flow synthesis.
//! - [`dialogue`]: the transcript-driven slot-filling conversation machine and
//!   the webhook payloads it speaks.
//! - [`proto`]: the length-prefixed southbound message codec.
//! - [`oracle`]: an exhaustive reference for path selection.

pub mod dataplane;
pub mod dialogue;
pub mod fixtures;
pub mod flow;
#[cfg(feature = "gen")]
pub mod gen;
pub mod intent;
pub mod oracle;
pub mod proto;
pub mod text;
pub mod topo;

pub use flow::{Cookie, FlowEntry, FlowMatch, FlowMod, FlowTable};
pub use intent::{IntentError, IntentRequest, IntentType, PathScore};
pub use topo::{Dpid, Endpoint, Hop, LinkKey, Path, PortId, Topology, TopologyError};
