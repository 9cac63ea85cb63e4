//! Intents and the pure half of intent compilation: city resolution,
//! simple-path enumeration, path scoring, best-path selection and flow
//! synthesis.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::flow::{Cookie, FlowEntry, FlowMatch, INTENT_PRIORITY};
use crate::text::normalize_city;
use crate::topo::{Dpid, Endpoint, Hop, LinkKey, Path, Topology};

/// Simple paths beyond this count abort enumeration.
pub const MAX_PATHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IntentType {
    LeastLatency,
    HighBandwidth,
    LeastHopcount,
}

impl IntentType {
    pub const ALL: [IntentType; 3] = [
        IntentType::LeastLatency,
        IntentType::HighBandwidth,
        IntentType::LeastHopcount,
    ];

    /// Canonical spoken form.
    pub fn phrase(self) -> &'static str {
        match self {
            IntentType::LeastLatency => "least latency",
            IntentType::HighBandwidth => "high bandwidth",
            IntentType::LeastHopcount => "least hopcount",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntentType::LeastLatency => "least_latency",
            IntentType::HighBandwidth => "high_bandwidth",
            IntentType::LeastHopcount => "least_hopcount",
        }
    }

    /// Spoken synonyms, as normalized token strings.
    pub fn synonyms(self) -> &'static [&'static str] {
        match self {
            IntentType::LeastLatency => &["least latency", "lowest latency", "fastest"],
            IntentType::HighBandwidth => &["high bandwidth", "highest bandwidth", "widest"],
            IntentType::LeastHopcount => &[
                "least hopcount",
                "least hop count",
                "fewest hops",
                "shortest",
            ],
        }
    }

    /// Parses a spoken or API form: synonyms, `snake_case` or `UPPER_CASE`.
    pub fn parse(text: &str) -> Option<IntentType> {
        let key = normalize_city(&text.replace('_', " "));
        IntentType::ALL
            .into_iter()
            .find(|t| t.synonyms().contains(&key.as_str()))
    }
}

impl fmt::Display for IntentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for IntentType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for IntentType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        IntentType::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown intent type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentRequest {
    pub intent_type: IntentType,
    pub from_city: String,
    pub to_city: String,
    #[serde(default)]
    pub demand_mbps: f64,
}

impl IntentRequest {
    pub fn new(intent_type: IntentType, from_city: &str, to_city: &str) -> Self {
        IntentRequest {
            intent_type,
            from_city: normalize_city(from_city),
            to_city: normalize_city(to_city),
            demand_mbps: 0.0,
        }
    }

    pub fn with_demand(mut self, demand_mbps: f64) -> Self {
        self.demand_mbps = demand_mbps;
        self
    }

    /// Normalizes city names in place.
    pub fn normalized(mut self) -> Self {
        self.from_city = normalize_city(&self.from_city);
        self.to_city = normalize_city(&self.to_city);
        self
    }
}

/// Every way an intent can fail. The stable code strings are what API
/// clients and the voice frontend see.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntentError {
    #[error("unknown city {city:?}; known cities: {}", known.join(", "))]
    UnknownCity { city: String, known: Vec<String> },
    #[error("source and destination are the same city")]
    SameCity,
    #[error("invalid demand {0} mbps")]
    InvalidDemand(f64),
    #[error("no path between the endpoints")]
    NoPath,
    #[error("more than {MAX_PATHS} simple paths")]
    PathExplosion,
    #[error("no path has {demand_mbps} mbps available")]
    NoPathMeetsDemand { demand_mbps: f64 },
    #[error("no link state for {0}")]
    IncompleteState(LinkKey),
    #[error("switch {0} is unreachable")]
    SwitchUnreachable(Dpid),
    #[error("switch {0} did not answer in time")]
    PushTimeout(Dpid),
    #[error("switch {dpid} rejected the flow: {text}")]
    PushRejected { dpid: Dpid, text: String },
    #[error("flows on switch {0} failed verification")]
    VerifyFailed(Dpid),
    #[error("link state inconsistent on {0}")]
    InconsistentState(LinkKey),
    #[error("store error: {0}")]
    Store(String),
}

impl IntentError {
    pub fn code(&self) -> &'static str {
        match self {
            IntentError::UnknownCity { .. } => "UNKNOWN_CITY",
            IntentError::SameCity => "SAME_CITY",
            IntentError::InvalidDemand(_) => "INVALID_DEMAND",
            IntentError::NoPath => "NO_PATH",
            IntentError::PathExplosion => "PATH_EXPLOSION",
            IntentError::NoPathMeetsDemand { .. } => "NO_PATH_MEETS_DEMAND",
            IntentError::IncompleteState(_) => "INCOMPLETE_STATE",
            IntentError::SwitchUnreachable(_) => "SWITCH_UNREACHABLE",
            IntentError::PushTimeout(_) => "PUSH_TIMEOUT",
            IntentError::PushRejected { .. } => "PUSH_REJECTED",
            IntentError::VerifyFailed(_) => "VERIFY_FAILED",
            IntentError::InconsistentState(_) => "INCONSISTENT_STATE",
            IntentError::Store(_) => "STORE_ERROR",
        }
    }
}

/// Maps the request's cities to their endpoints.
pub fn resolve_cities<'t>(
    request: &IntentRequest,
    topology: &'t Topology,
) -> Result<(&'t Endpoint, &'t Endpoint), IntentError> {
    let from = normalize_city(&request.from_city);
    let to = normalize_city(&request.to_city);
    if from == to {
        return Err(IntentError::SameCity);
    }
    let lookup = |city: &str| {
        topology
            .endpoint(city)
            .ok_or_else(|| IntentError::UnknownCity {
                city: city.to_string(),
                known: topology.cities(),
            })
    };
    Ok((lookup(&from)?, lookup(&to)?))
}

/// All simple paths from `ingress` to `egress`, sorted lexicographically by
/// dpid sequence (then by port sequence, which only matters for parallel
/// links).
pub fn enumerate_paths(
    topology: &Topology,
    ingress: &Endpoint,
    egress: &Endpoint,
) -> Result<Vec<Path>, IntentError> {
    enumerate_paths_capped(topology, ingress, egress, MAX_PATHS)
}

pub fn enumerate_paths_capped(
    topology: &Topology,
    ingress: &Endpoint,
    egress: &Endpoint,
    cap: usize,
) -> Result<Vec<Path>, IntentError> {
    let src = topology.endpoint_port(ingress);
    let dst = topology.endpoint_port(egress);
    let adjacency = topology.adjacency();

    struct Walk<'a> {
        adjacency: &'a BTreeMap<Dpid, Vec<crate::topo::Adjacency>>,
        dst: Dpid,
        dst_port: u16,
        cap: usize,
        on_path: BTreeSet<Dpid>,
        hops: Vec<Hop>,
        found: Vec<Vec<Hop>>,
    }

    impl Walk<'_> {
        /// Extends the partial path arriving at `at` through `in_port`.
        fn visit(&mut self, at: Dpid, in_port: u16) -> Result<(), IntentError> {
            if at == self.dst {
                let mut hops = self.hops.clone();
                hops.push(Hop {
                    dpid: at,
                    in_port,
                    out_port: self.dst_port,
                });
                self.found.push(hops);
                if self.found.len() > self.cap {
                    return Err(IntentError::PathExplosion);
                }
                return Ok(());
            }
            self.on_path.insert(at);
            let adjacency = self.adjacency;
            for adj in &adjacency[&at] {
                if self.on_path.contains(&adj.neighbor) {
                    continue;
                }
                self.hops.push(Hop {
                    dpid: at,
                    in_port,
                    out_port: adj.local_port,
                });
                let r = self.visit(adj.neighbor, adj.remote_port);
                self.hops.pop();
                r?;
            }
            self.on_path.remove(&at);
            Ok(())
        }
    }

    let mut walk = Walk {
        adjacency: &adjacency,
        dst: dst.dpid,
        dst_port: dst.port,
        cap,
        on_path: BTreeSet::new(),
        hops: Vec::new(),
        found: Vec::new(),
    };
    walk.visit(src.dpid, src.port)?;
    if walk.found.is_empty() {
        return Err(IntentError::NoPath);
    }
    let mut found = walk.found;
    found.sort_by(|a, b| {
        let key = |h: &Vec<Hop>| h.iter().map(|x| x.dpid).collect::<Vec<_>>();
        key(a).cmp(&key(b)).then_with(|| a.cmp(b))
    });
    Ok(found
        .into_iter()
        .map(|hops| Path {
            hops,
            ingress: ingress.clone(),
            egress: egress.clone(),
        })
        .collect())
}

/// Configured and reserved state of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub latency_ms: f64,
    pub capacity_mbps: f64,
    pub reserved_mbps: f64,
}

impl LinkMetrics {
    pub fn available_mbps(&self) -> f64 {
        (self.capacity_mbps - self.reserved_mbps).max(0.0)
    }
}

pub type LinkState = BTreeMap<LinkKey, LinkMetrics>;

/// Link state straight from the topology, with the given reservations.
pub fn configured_link_state(topology: &Topology, reserved: &BTreeMap<LinkKey, f64>) -> LinkState {
    topology
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let key = topology.link_key(i);
            (
                key,
                LinkMetrics {
                    latency_ms: l.latency_ms,
                    capacity_mbps: l.capacity_mbps,
                    reserved_mbps: reserved.get(&key).copied().unwrap_or(0.0),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    pub latency_ms: f64,
    /// Minimum available bandwidth over the path's links; infinite (`null` in
    /// JSON) for a path that crosses no link.
    #[serde(with = "unbounded")]
    pub bottleneck_mbps: f64,
    pub hop_count: usize,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub fn score_path(path: &Path, link_state: &LinkState) -> Result<PathScore, IntentError> {
    let mut latency_ms = 0.0;
    let mut bottleneck_mbps = f64::INFINITY;
    for key in path.links() {
        let m = link_state
            .get(&key)
            .ok_or(IntentError::IncompleteState(key))?;
        latency_ms += m.latency_ms;
        bottleneck_mbps = bottleneck_mbps.min(m.available_mbps());
    }
    Ok(PathScore {
        latency_ms,
        bottleneck_mbps,
        hop_count: path.hop_count(),
    })
}

/// Orders candidates from best to worst for `intent`: the intent's metric
/// first, then fewer hops, then lower latency, then dpid sequence.
fn compare(
    intent: IntentType,
    (pa, sa): (&Path, &PathScore),
    (pb, sb): (&Path, &PathScore),
) -> Ordering {
    let primary = match intent {
        IntentType::LeastLatency => sa.latency_ms.total_cmp(&sb.latency_ms),
        IntentType::HighBandwidth => sb.bottleneck_mbps.total_cmp(&sa.bottleneck_mbps),
        IntentType::LeastHopcount => sa.hop_count.cmp(&sb.hop_count),
    };
    primary
        .then_with(|| sa.hop_count.cmp(&sb.hop_count))
        .then_with(|| sa.latency_ms.total_cmp(&sb.latency_ms))
        .then_with(|| pa.dpids().cmp(&pb.dpids()))
        .then_with(|| pa.hops.cmp(&pb.hops))
}

/// Index of the best path for `intent`. `paths` and `scores` are aligned and
/// non-empty.
pub fn select_best_path(paths: &[Path], scores: &[PathScore], intent: IntentType) -> usize {
    assert_eq!(paths.len(), scores.len(), "paths and scores must align");
    assert!(!paths.is_empty(), "no candidate paths");
    (0..paths.len())
        .min_by(|&a, &b| compare(intent, (&paths[a], &scores[a]), (&paths[b], &scores[b])))
        .expect("non-empty")
}

/// A selected path with its score and the alternatives it beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub path: Path,
    pub score: PathScore,
    pub candidates: usize,
}

/// Resolve, enumerate, score, drop paths short of the demand, select.
pub fn plan(
    topology: &Topology,
    link_state: &LinkState,
    request: &IntentRequest,
) -> Result<Selection, IntentError> {
    if !(request.demand_mbps.is_finite() && request.demand_mbps >= 0.0) {
        return Err(IntentError::InvalidDemand(request.demand_mbps));
    }
    let (ingress, egress) = resolve_cities(request, topology)?;
    let paths = enumerate_paths(topology, ingress, egress)?;
    let candidates = paths.len();
    let scores = paths
        .iter()
        .map(|p| score_path(p, link_state))
        .collect::<Result<Vec<_>, _>>()?;
    let (paths, scores): (Vec<Path>, Vec<PathScore>) = paths
        .into_iter()
        .zip(scores)
        .filter(|(_, s)| s.bottleneck_mbps >= request.demand_mbps)
        .unzip();
    if paths.is_empty() {
        return Err(IntentError::NoPathMeetsDemand {
            demand_mbps: request.demand_mbps,
        });
    }
    let best = select_best_path(&paths, &scores, request.intent_type);
    Ok(Selection {
        path: paths[best].clone(),
        score: scores[best],
        candidates,
    })
}

/// Bidirectional flows for `path`: per hop, a forward entry from the ingress
/// prefix to the egress prefix and the mirrored reverse entry. All entries use
/// [`INTENT_PRIORITY`] and carry `cookie`.
pub fn synthesize_flows(path: &Path, cookie: Cookie) -> Vec<(Dpid, FlowEntry)> {
    let src = path.ingress.prefix;
    let dst = path.egress.prefix;
    path.hops
        .iter()
        .flat_map(|h| {
            let forward = FlowEntry {
                priority: INTENT_PRIORITY,
                matcher: FlowMatch {
                    in_port: Some(h.in_port),
                    ipv4_src: Some(src),
                    ipv4_dst: Some(dst),
                },
                action_out_port: h.out_port,
                cookie,
            };
            let reverse = FlowEntry {
                priority: INTENT_PRIORITY,
                matcher: FlowMatch {
                    in_port: Some(h.out_port),
                    ipv4_src: Some(dst),
                    ipv4_dst: Some(src),
                },
                action_out_port: h.in_port,
                cookie,
            };
            [(h.dpid, forward), (h.dpid, reverse)]
        })
        .collect()
}
