//! Topology model: switches, links, city endpoints, paths.
//!
//! A [`Topology`] can only be obtained through validation, so holders of one
//! may rely on every referential invariant (ports used at most once, endpoints
//! attached to declared switches, non-overlapping prefixes, a connected switch
//! graph).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text::normalize_city;

/// Datapath identifier of a switch.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Dpid(pub u64);

impl fmt::Display for Dpid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = self.0.to_be_bytes();
        for (i, b) in bytes.iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Dpid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dpid({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid dpid {0:?}: expected 8 colon-separated hex byte pairs")]
pub struct ParseDpidError(pub String);

impl FromStr for Dpid {
    type Err = ParseDpidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDpidError(s.to_string());
        let hex: String = if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 8 || parts.iter().any(|p| p.len() != 2) {
                return Err(err());
            }
            parts.concat()
        } else {
            s.to_string()
        };
        if hex.len() != 16 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(err());
        }
        u64::from_str_radix(&hex, 16).map(Dpid).map_err(|_| err())
    }
}

impl Serialize for Dpid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Dpid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A port on a specific switch, identified by datapath id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortId {
    pub dpid: Dpid,
    pub port: u16,
}

/// Canonical (order-independent) identity of an undirected link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkKey {
    pub a: PortId,
    pub b: PortId,
}

impl LinkKey {
    pub fn new(x: PortId, y: PortId) -> Self {
        if x <= y {
            LinkKey { a: x, b: y }
        } else {
            LinkKey { a: y, b: x }
        }
    }
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}<->{}:{}",
            self.a.dpid, self.a.port, self.b.dpid, self.b.port
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Switch {
    pub dpid: Dpid,
    pub name: String,
    pub ports: BTreeSet<u16>,
}

/// One end of a link, by switch name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub switch: String,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: PortRef,
    pub b: PortRef,
    pub latency_ms: f64,
    pub capacity_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub city: String,
    pub switch: String,
    pub port: u16,
    pub prefix: Ipv4Net,
}

/// What a switch port is plugged into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    /// Index into [`Topology::links`], plus the far end of the link.
    Link { index: usize, peer: PortId },
    /// Index into [`Topology::endpoints`].
    Endpoint { index: usize },
}

/// A neighbor entry in the adjacency view.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub neighbor: Dpid,
    pub local_port: u16,
    pub remote_port: u16,
    pub latency_ms: f64,
    pub capacity_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported version {0}: expected 1")]
    UnsupportedVersion(u32),
    #[error("empty topology: at least one switch is required")]
    EmptyTopology,
    #[error("duplicate dpid {0}")]
    DuplicateDpid(Dpid),
    #[error("duplicate switch name {0:?}")]
    DuplicateSwitchName(String),
    #[error("empty switch name")]
    EmptySwitchName,
    #[error("unknown switch {0:?}")]
    UnknownSwitch(String),
    #[error("invalid port 0 on switch {0:?}: ports are positive")]
    ZeroPort(String),
    #[error("port {switch}:{port} used more than once")]
    PortInUse { switch: String, port: u16 },
    #[error("self link on switch {0:?}")]
    SelfLink(String),
    #[error("invalid latency {latency_ms} on link {link}: latency must be finite and non-negative")]
    InvalidLatency { link: String, latency_ms: f64 },
    #[error("invalid capacity {capacity_mbps} on link {link}: capacity must be finite and positive")]
    InvalidCapacity { link: String, capacity_mbps: f64 },
    #[error("empty city name")]
    EmptyCity,
    #[error("duplicate city {0:?}")]
    DuplicateCity(String),
    #[error("overlapping prefixes {0} and {1}")]
    OverlappingPrefix(Ipv4Net, Ipv4Net),
    #[error("disconnected topology: switch {0:?} is unreachable")]
    Disconnected(String),
}

impl TopologyError {
    /// Short stable name of the invariant that was violated.
    pub fn invariant(&self) -> &'static str {
        match self {
            TopologyError::Syntax { .. } => "syntax",
            TopologyError::UnsupportedVersion(_) => "version",
            TopologyError::EmptyTopology => "empty topology",
            TopologyError::DuplicateDpid(_) => "duplicate dpid",
            TopologyError::DuplicateSwitchName(_) => "duplicate switch name",
            TopologyError::EmptySwitchName => "empty switch name",
            TopologyError::UnknownSwitch(_) => "unknown switch",
            TopologyError::ZeroPort(_) => "positive port",
            TopologyError::PortInUse { .. } => "port in use",
            TopologyError::SelfLink(_) => "self link",
            TopologyError::InvalidLatency { .. } => "latency",
            TopologyError::InvalidCapacity { .. } => "capacity",
            TopologyError::EmptyCity => "empty city",
            TopologyError::DuplicateCity(_) => "duplicate city",
            TopologyError::OverlappingPrefix(..) => "overlapping prefix",
            TopologyError::Disconnected(_) => "connected",
        }
    }
}

/// The on-disk topology document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub version: u32,
    pub switches: Vec<SwitchDocument>,
    #[serde(default)]
    pub links: Vec<LinkDocument>,
    #[serde(default)]
    pub endpoints: Vec<Endpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchDocument {
    pub dpid: Dpid,
    pub name: String,
    /// Extra ports beyond those used by links and endpoints.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ports: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDocument {
    pub a: String,
    pub a_port: u16,
    pub b: String,
    pub b_port: u16,
    pub latency_ms: f64,
    pub capacity_mbps: f64,
}

/// A validated network topology.
#[derive(Debug, Clone)]
pub struct Topology {
    switches: Vec<Switch>,
    links: Vec<Link>,
    endpoints: Vec<Endpoint>,
    by_name: HashMap<String, usize>,
    by_dpid: HashMap<Dpid, usize>,
    attachments: HashMap<PortId, Attachment>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.switches == other.switches
            && self.links == other.links
            && self.endpoints == other.endpoints
    }
}

/// Parses and validates a topology document.
pub fn parse_topology(document: &[u8]) -> Result<Topology, TopologyError> {
    let doc: TopologyDocument =
        serde_json::from_slice(document).map_err(|e| TopologyError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    Topology::from_document(doc)
}

/// True iff `address` lies inside `prefix`.
pub fn prefix_contains(prefix: &Ipv4Net, address: Ipv4Addr) -> bool {
    prefix.contains(&address)
}

fn prefixes_overlap(x: &Ipv4Net, y: &Ipv4Net) -> bool {
    x.contains(&y.network()) || y.contains(&x.network())
}

impl Topology {
    pub fn from_document(doc: TopologyDocument) -> Result<Self, TopologyError> {
        if doc.version != 1 {
            return Err(TopologyError::UnsupportedVersion(doc.version));
        }
        if doc.switches.is_empty() {
            return Err(TopologyError::EmptyTopology);
        }

        let mut switches = Vec::with_capacity(doc.switches.len());
        let mut by_name = HashMap::new();
        let mut by_dpid = HashMap::new();
        for (i, sw) in doc.switches.iter().enumerate() {
            if sw.name.trim().is_empty() {
                return Err(TopologyError::EmptySwitchName);
            }
            if by_name.insert(sw.name.clone(), i).is_some() {
                return Err(TopologyError::DuplicateSwitchName(sw.name.clone()));
            }
            if by_dpid.insert(sw.dpid, i).is_some() {
                return Err(TopologyError::DuplicateDpid(sw.dpid));
            }
            let mut ports = BTreeSet::new();
            for &p in &sw.ports {
                if p == 0 {
                    return Err(TopologyError::ZeroPort(sw.name.clone()));
                }
                ports.insert(p);
            }
            switches.push(Switch {
                dpid: sw.dpid,
                name: sw.name.clone(),
                ports,
            });
        }

        let mut attachments: HashMap<PortId, Attachment> = HashMap::new();
        let claim = |switches: &mut Vec<Switch>,
                         switch: &str,
                         port: u16|
         -> Result<PortId, TopologyError> {
            let idx = *by_name
                .get(switch)
                .ok_or_else(|| TopologyError::UnknownSwitch(switch.to_string()))?;
            if port == 0 {
                return Err(TopologyError::ZeroPort(switch.to_string()));
            }
            let sw = &mut switches[idx];
            let id = PortId {
                dpid: sw.dpid,
                port,
            };
            sw.ports.insert(port);
            Ok(id)
        };

        let mut links = Vec::with_capacity(doc.links.len());
        for (index, l) in doc.links.iter().enumerate() {
            let name = format!("{}:{}-{}:{}", l.a, l.a_port, l.b, l.b_port);
            if l.a == l.b {
                return Err(TopologyError::SelfLink(l.a.clone()));
            }
            if !(l.latency_ms.is_finite() && l.latency_ms >= 0.0) {
                return Err(TopologyError::InvalidLatency {
                    link: name,
                    latency_ms: l.latency_ms,
                });
            }
            if !(l.capacity_mbps.is_finite() && l.capacity_mbps > 0.0) {
                return Err(TopologyError::InvalidCapacity {
                    link: name,
                    capacity_mbps: l.capacity_mbps,
                });
            }
            let a = claim(&mut switches, &l.a, l.a_port)?;
            let b = claim(&mut switches, &l.b, l.b_port)?;
            for (end, peer, sw_name) in [(a, b, &l.a), (b, a, &l.b)] {
                if attachments
                    .insert(end, Attachment::Link { index, peer })
                    .is_some()
                {
                    return Err(TopologyError::PortInUse {
                        switch: sw_name.clone(),
                        port: end.port,
                    });
                }
            }
            links.push(Link {
                a: PortRef {
                    switch: l.a.clone(),
                    port: l.a_port,
                },
                b: PortRef {
                    switch: l.b.clone(),
                    port: l.b_port,
                },
                latency_ms: l.latency_ms,
                capacity_mbps: l.capacity_mbps,
            });
        }

        let mut endpoints: Vec<Endpoint> = Vec::with_capacity(doc.endpoints.len());
        let mut cities = BTreeSet::new();
        for (index, ep) in doc.endpoints.iter().enumerate() {
            let city = normalize_city(&ep.city);
            if city.is_empty() {
                return Err(TopologyError::EmptyCity);
            }
            if !cities.insert(city.clone()) {
                return Err(TopologyError::DuplicateCity(city));
            }
            // Host bits are dropped so that prefixes compare structurally.
            let prefix = ep.prefix.trunc();
            if let Some(other) = endpoints
                .iter()
                .find(|o| prefixes_overlap(&o.prefix, &prefix))
            {
                return Err(TopologyError::OverlappingPrefix(other.prefix, prefix));
            }
            let id = claim(&mut switches, &ep.switch, ep.port)?;
            if attachments
                .insert(id, Attachment::Endpoint { index })
                .is_some()
            {
                return Err(TopologyError::PortInUse {
                    switch: ep.switch.clone(),
                    port: ep.port,
                });
            }
            endpoints.push(Endpoint {
                city,
                switch: ep.switch.clone(),
                port: ep.port,
                prefix,
            });
        }

        let topo = Topology {
            switches,
            links,
            endpoints,
            by_name,
            by_dpid,
            attachments,
        };
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let adj = self.adjacency();
        let start = self.switches[0].dpid;
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(d) = queue.pop_front() {
            for n in &adj[&d] {
                if seen.insert(n.neighbor) {
                    queue.push_back(n.neighbor);
                }
            }
        }
        match self.switches.iter().find(|s| !seen.contains(&s.dpid)) {
            Some(s) => Err(TopologyError::Disconnected(s.name.clone())),
            None => Ok(()),
        }
    }

    /// A what-if copy without the links rejected by `keep`. Unlike parsed
    /// topologies the result may be disconnected; every other invariant still
    /// holds.
    pub fn retain_links(&self, mut keep: impl FnMut(&Link) -> bool) -> Topology {
        let mut t = self.clone();
        t.links.retain(|l| keep(l));
        t.attachments
            .retain(|_, a| !matches!(a, Attachment::Link { .. }));
        for (index, l) in t.links.iter().enumerate() {
            let a = PortId {
                dpid: t.dpid_of(&l.a.switch).expect("validated link"),
                port: l.a.port,
            };
            let b = PortId {
                dpid: t.dpid_of(&l.b.switch).expect("validated link"),
                port: l.b.port,
            };
            t.attachments.insert(a, Attachment::Link { index, peer: b });
            t.attachments.insert(b, Attachment::Link { index, peer: a });
        }
        t
    }

    pub fn to_document(&self) -> TopologyDocument {
        let mut used: BTreeMap<&str, BTreeSet<u16>> = BTreeMap::new();
        for l in &self.links {
            used.entry(&l.a.switch).or_default().insert(l.a.port);
            used.entry(&l.b.switch).or_default().insert(l.b.port);
        }
        for e in &self.endpoints {
            used.entry(&e.switch).or_default().insert(e.port);
        }
        TopologyDocument {
            version: 1,
            switches: self
                .switches
                .iter()
                .map(|s| SwitchDocument {
                    dpid: s.dpid,
                    name: s.name.clone(),
                    ports: s
                        .ports
                        .iter()
                        .copied()
                        .filter(|p| !used.get(s.name.as_str()).is_some_and(|u| u.contains(p)))
                        .collect(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| LinkDocument {
                    a: l.a.switch.clone(),
                    a_port: l.a.port,
                    b: l.b.switch.clone(),
                    b_port: l.b.port,
                    latency_ms: l.latency_ms,
                    capacity_mbps: l.capacity_mbps,
                })
                .collect(),
            endpoints: self.endpoints.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("topology serializes")
    }

    pub fn switches(&self) -> &[Switch] {
        &self.switches
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    pub fn switch_by_name(&self, name: &str) -> Option<&Switch> {
        self.by_name.get(name).map(|&i| &self.switches[i])
    }

    pub fn switch_by_dpid(&self, dpid: Dpid) -> Option<&Switch> {
        self.by_dpid.get(&dpid).map(|&i| &self.switches[i])
    }

    pub fn dpid_of(&self, name: &str) -> Option<Dpid> {
        self.switch_by_name(name).map(|s| s.dpid)
    }

    pub fn name_of(&self, dpid: Dpid) -> Option<&str> {
        self.switch_by_dpid(dpid).map(|s| s.name.as_str())
    }

    /// Looks up an endpoint by (already normalized or raw) city name.
    pub fn endpoint(&self, city: &str) -> Option<&Endpoint> {
        let key = normalize_city(city);
        self.endpoints.iter().find(|e| e.city == key)
    }

    /// Sorted list of known city names.
    pub fn cities(&self) -> Vec<String> {
        let mut v: Vec<String> = self.endpoints.iter().map(|e| e.city.clone()).collect();
        v.sort();
        v
    }

    pub fn attachment(&self, port: PortId) -> Option<Attachment> {
        self.attachments.get(&port).copied()
    }

    pub fn endpoint_port(&self, endpoint: &Endpoint) -> PortId {
        PortId {
            dpid: self.dpid_of(&endpoint.switch).expect("validated endpoint"),
            port: endpoint.port,
        }
    }

    /// Canonical key of the link at `index`.
    pub fn link_key(&self, index: usize) -> LinkKey {
        let l = &self.links[index];
        LinkKey::new(
            PortId {
                dpid: self.dpid_of(&l.a.switch).expect("validated link"),
                port: l.a.port,
            },
            PortId {
                dpid: self.dpid_of(&l.b.switch).expect("validated link"),
                port: l.b.port,
            },
        )
    }

    pub fn link_by_key(&self, key: &LinkKey) -> Option<(usize, &Link)> {
        match self.attachments.get(&key.a)? {
            Attachment::Link { index, peer } if *peer == key.b => {
                Some((*index, &self.links[*index]))
            }
            _ => None,
        }
    }

    /// Neighbor lists keyed by dpid, each sorted by (neighbor, local port).
    pub fn adjacency(&self) -> BTreeMap<Dpid, Vec<Adjacency>> {
        let mut map: BTreeMap<Dpid, Vec<Adjacency>> =
            self.switches.iter().map(|s| (s.dpid, Vec::new())).collect();
        for l in &self.links {
            let a = self.dpid_of(&l.a.switch).expect("validated link");
            let b = self.dpid_of(&l.b.switch).expect("validated link");
            for (from, to, lp, rp) in [(a, b, l.a.port, l.b.port), (b, a, l.b.port, l.a.port)] {
                map.get_mut(&from).expect("declared switch").push(Adjacency {
                    neighbor: to,
                    local_port: lp,
                    remote_port: rp,
                    latency_ms: l.latency_ms,
                    capacity_mbps: l.capacity_mbps,
                });
            }
        }
        for list in map.values_mut() {
            list.sort_by_key(|a| (a.neighbor, a.local_port));
        }
        map
    }

    /// Checks the structural invariants of `path` against this topology.
    pub fn check_path(&self, path: &Path) -> Result<(), String> {
        let first = path.hops.first().ok_or("path has no hops")?;
        let last = path.hops.last().expect("non-empty");
        let ingress = self.endpoint_port(&path.ingress);
        let egress = self.endpoint_port(&path.egress);
        if (first.dpid, first.in_port) != (ingress.dpid, ingress.port) {
            return Err("first hop does not start at the ingress endpoint".into());
        }
        if (last.dpid, last.out_port) != (egress.dpid, egress.port) {
            return Err("last hop does not end at the egress endpoint".into());
        }
        let mut seen = BTreeSet::new();
        for h in &path.hops {
            if !seen.insert(h.dpid) {
                return Err(format!("switch {} repeats", h.dpid));
            }
        }
        for w in path.hops.windows(2) {
            let here = PortId {
                dpid: w[0].dpid,
                port: w[0].out_port,
            };
            let there = PortId {
                dpid: w[1].dpid,
                port: w[1].in_port,
            };
            match self.attachment(here) {
                Some(Attachment::Link { peer, .. }) if peer == there => {}
                _ => return Err(format!("no link joins {} and {}", w[0].dpid, w[1].dpid)),
            }
        }
        Ok(())
    }
}

impl Serialize for Topology {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = TopologyDocument::deserialize(deserializer)?;
        Topology::from_document(doc).map_err(serde::de::Error::custom)
    }
}

/// One switch traversal: where the packet enters and leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub dpid: Dpid,
    pub in_port: u16,
    pub out_port: u16,
}

/// A simple path between two city endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    pub hops: Vec<Hop>,
    pub ingress: Endpoint,
    pub egress: Endpoint,
}

impl Path {
    pub fn dpids(&self) -> Vec<Dpid> {
        self.hops.iter().map(|h| h.dpid).collect()
    }

    /// Number of inter-switch links traversed.
    pub fn hop_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    /// Links traversed, in path order.
    pub fn links(&self) -> Vec<LinkKey> {
        self.hops
            .windows(2)
            .map(|w| {
                LinkKey::new(
                    PortId {
                        dpid: w[0].dpid,
                        port: w[0].out_port,
                    },
                    PortId {
                        dpid: w[1].dpid,
                        port: w[1].in_port,
                    },
                )
            })
            .collect()
    }

    /// The same path traversed in the opposite direction.
    pub fn reversed(&self) -> Path {
        Path {
            hops: self
                .hops
                .iter()
                .rev()
                .map(|h| Hop {
                    dpid: h.dpid,
                    in_port: h.out_port,
                    out_port: h.in_port,
                })
                .collect(),
            ingress: self.egress.clone(),
            egress: self.ingress.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{topo5, TOPO5_JSON};

    fn doc() -> serde_json::Value {
        serde_json::from_str(TOPO5_JSON).unwrap()
    }

    fn parse_value(v: &serde_json::Value) -> Result<Topology, TopologyError> {
        parse_topology(v.to_string().as_bytes())
    }

    #[test]
    fn dpid_rendering() {
        assert_eq!(Dpid(1).to_string(), "00:00:00:00:00:00:00:01");
        assert_eq!(Dpid(0xabcdef).to_string(), "00:00:00:00:00:ab:cd:ef");
        assert_eq!("00:00:00:00:00:AB:cd:ef".parse::<Dpid>().unwrap(), Dpid(0xabcdef));
        assert_eq!("00000000000000ff".parse::<Dpid>().unwrap(), Dpid(255));
        assert!("00:00:00:00:00:00:01".parse::<Dpid>().is_err());
        assert!("zz:00:00:00:00:00:00:01".parse::<Dpid>().is_err());
    }

    #[test]
    fn parses_topo5() {
        let t = topo5();
        assert_eq!(t.switches().len(), 5);
        assert_eq!(t.links().len(), 6);
        assert_eq!(t.endpoints().len(), 3);
        assert_eq!(t.cities(), ["chicago", "denver", "new york"]);
        let ny = t.endpoint("New York").unwrap();
        assert_eq!(ny.switch, "s3");
        assert_eq!(ny.port, 4);
    }

    #[test]
    fn duplicate_city_rejected() {
        let mut v = doc();
        v["endpoints"][1]["city"] = "Denver".into();
        let err = parse_value(&v).unwrap_err();
        assert_eq!(err.invariant(), "duplicate city");
        assert!(err.to_string().contains("duplicate city"));
    }

    #[test]
    fn empty_topology_rejected() {
        let v = serde_json::json!({"version": 1, "switches": [], "links": [], "endpoints": []});
        let err = parse_value(&v).unwrap_err();
        assert_eq!(err, TopologyError::EmptyTopology);
        assert!(err.to_string().contains("empty topology"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_topology(b"{\n  \"version\": 1,\n  \"switches\": [,]\n}").unwrap_err();
        match err {
            TopologyError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn referential_invariants() {
        let mut v = doc();
        v["links"][0]["b"] = "s9".into();
        assert_eq!(parse_value(&v).unwrap_err().invariant(), "unknown switch");

        let mut v = doc();
        v["endpoints"][0]["port"] = 1.into();
        assert_eq!(parse_value(&v).unwrap_err().invariant(), "port in use");

        let mut v = doc();
        v["endpoints"][2]["prefix"] = "10.1.0.128/25".into();
        assert_eq!(parse_value(&v).unwrap_err().invariant(), "overlapping prefix");

        let mut v = doc();
        v["links"][1]["capacity_mbps"] = 0.into();
        assert_eq!(parse_value(&v).unwrap_err().invariant(), "capacity");

        let mut v = doc();
        v["links"][1]["latency_ms"] = (-1.0).into();
        assert_eq!(parse_value(&v).unwrap_err().invariant(), "latency");

        let mut v = doc();
        v["links"].as_array_mut().unwrap().remove(5);
        assert_eq!(parse_value(&v).unwrap_err().invariant(), "connected");

        let mut v = doc();
        v["switches"][1]["dpid"] = "00:00:00:00:00:00:00:01".into();
        assert_eq!(parse_value(&v).unwrap_err().invariant(), "duplicate dpid");
    }

    #[test]
    fn prefix_containment() {
        let p: Ipv4Net = "10.1.0.0/24".parse().unwrap();
        assert!(prefix_contains(&p, "10.1.0.7".parse().unwrap()));
        assert!(!prefix_contains(&p, "10.3.0.7".parse().unwrap()));
        let any: Ipv4Net = "0.0.0.0/0".parse().unwrap();
        assert!(prefix_contains(&any, "203.0.113.9".parse().unwrap()));
    }

    #[test]
    fn adjacency_of_topo5() {
        let t = topo5();
        let adj = t.adjacency();
        let s1: BTreeSet<_> = adj[&Dpid(1)].iter().map(|a| a.neighbor).collect();
        assert_eq!(s1, BTreeSet::from([Dpid(2), Dpid(4)]));
        assert_eq!(adj.values().map(Vec::len).sum::<usize>(), 12);
    }

    #[test]
    fn adjacency_of_single_switch() {
        let v = serde_json::json!({"version": 1, "switches": [{"dpid": "00:00:00:00:00:00:00:07", "name": "solo"}]});
        let t = parse_value(&v).unwrap();
        let adj = t.adjacency();
        assert_eq!(adj.len(), 1);
        assert!(adj[&Dpid(7)].is_empty());
    }

    #[test]
    fn document_round_trip() {
        let t = topo5();
        let again = parse_topology(t.to_json().as_bytes()).unwrap();
        assert_eq!(t, again);
    }
}
