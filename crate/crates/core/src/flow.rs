//! Flow entries and flow tables.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Priority used for every intent flow.
pub const INTENT_PRIORITY: u16 = 100;

/// Opaque 64-bit tag grouping the flows of one intent.
///
/// Rendered as `0x` followed by 16 hex digits so JSON consumers without
/// 64-bit integers keep full precision.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cookie(pub u64);

impl fmt::Display for Cookie {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:016x}", self.0)
    }
}

impl fmt::Debug for Cookie {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cookie({self})")
    }
}

impl std::str::FromStr for Cookie {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s.strip_prefix("0x").unwrap_or(s);
        u64::from_str_radix(hex, 16).map(Cookie)
    }
}

impl Serialize for Cookie {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cookie {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Match fields; an absent field is a wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct FlowMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_port: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipv4_src: Option<Ipv4Net>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipv4_dst: Option<Ipv4Net>,
}

impl FlowMatch {
    /// At least one field must be present.
    pub fn is_valid(&self) -> bool {
        self.in_port.is_some() || self.ipv4_src.is_some() || self.ipv4_dst.is_some()
    }

    pub fn matches(&self, in_port: u16, src: Ipv4Addr, dst: Ipv4Addr) -> bool {
        self.in_port.is_none_or(|p| p == in_port)
            && self.ipv4_src.is_none_or(|n| n.contains(&src))
            && self.ipv4_dst.is_none_or(|n| n.contains(&dst))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowEntry {
    pub priority: u16,
    #[serde(rename = "match")]
    pub matcher: FlowMatch,
    pub action_out_port: u16,
    pub cookie: Cookie,
}

impl FlowEntry {
    /// Specificity rank used to break ties between equal-priority matches.
    ///
    /// Higher is preferred: priority, then dst prefix length, then src prefix
    /// length (an absent prefix ranks below `/0`), then the smaller cookie,
    /// then an exact in-port over a wildcard in-port.
    fn rank(&self) -> impl Ord {
        (
            self.priority,
            self.matcher.ipv4_dst.map(|n| n.prefix_len()),
            self.matcher.ipv4_src.map(|n| n.prefix_len()),
            Reverse(self.cookie),
            self.matcher.in_port.is_some(),
        )
    }

    /// Total order over entries: better entries compare greater. Falls back
    /// to structural order so the result is always deterministic.
    pub fn preference(&self, other: &FlowEntry) -> Ordering {
        self.rank()
            .cmp(&other.rank())
            .then_with(|| other.cmp(self))
    }
}

/// Flow-mod command carried on the southbound channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum FlowMod {
    /// Insert or overwrite the entry with equal (priority, match). A positive
    /// `reserve_mbps` books bandwidth for the entry's cookie on every port the
    /// cookie outputs to.
    Add {
        entry: FlowEntry,
        #[serde(default, skip_serializing_if = "is_zero")]
        reserve_mbps: f64,
    },
    /// Remove every entry tagged with `cookie`.
    Delete { cookie: Cookie },
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// A switch flow table. Entries are unique by (priority, match).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowTable {
    entries: BTreeMap<(u16, FlowMatch), FlowEntry>,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &FlowEntry> {
        self.entries.values()
    }

    /// Inserts `entry`, replacing any entry with the same (priority, match).
    pub fn insert(&mut self, entry: FlowEntry) -> Option<FlowEntry> {
        self.entries.insert((entry.priority, entry.matcher), entry)
    }

    /// Removes every entry tagged `cookie`; returns how many were removed.
    pub fn delete_cookie(&mut self, cookie: Cookie) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, e| e.cookie != cookie);
        before - self.entries.len()
    }

    /// Highest-preference entry matching the packet, or `None` on table miss.
    pub fn lookup(&self, in_port: u16, src: Ipv4Addr, dst: Ipv4Addr) -> Option<&FlowEntry> {
        self.entries
            .values()
            .filter(|e| e.matcher.matches(in_port, src, dst))
            .max_by(|a, b| a.preference(b))
    }

    pub fn with_cookie(&self, cookie: Cookie) -> impl Iterator<Item = &FlowEntry> {
        self.entries.values().filter(move |e| e.cookie == cookie)
    }
}

impl FromIterator<FlowEntry> for FlowTable {
    fn from_iter<T: IntoIterator<Item = FlowEntry>>(iter: T) -> Self {
        let mut t = FlowTable::new();
        for e in iter {
            t.insert(e);
        }
        t
    }
}
