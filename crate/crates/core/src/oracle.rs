//! Brute-force reference for best-path selection.
//!
//! Deliberately shares nothing with [`crate::intent`] beyond the topology
//! types: paths are grown from the raw link list (no adjacency view), metrics
//! are read straight off the links, and the winner is found by sorting every
//! candidate on an explicit key. Exponential, so only for small networks.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::intent::IntentType;
use crate::topo::{Dpid, Hop, LinkKey, PortId, Topology};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCandidate {
    pub hops: Vec<Hop>,
    pub latency_ms: f64,
    pub bottleneck_mbps: f64,
    pub hop_count: usize,
}

impl OracleCandidate {
    pub fn dpids(&self) -> Vec<Dpid> {
        self.hops.iter().map(|h| h.dpid).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleAnswer {
    /// Every simple path, in no particular order.
    pub candidates: Vec<OracleCandidate>,
    /// The winner, if any candidate meets the demand.
    pub best: Option<OracleCandidate>,
}

/// Finds the best path between two cities by exhaustive search. `reserved`
/// maps links to booked bandwidth.
pub fn best_path(
    topology: &Topology,
    from_city: &str,
    to_city: &str,
    intent: IntentType,
    demand_mbps: f64,
    reserved: &BTreeMap<LinkKey, f64>,
) -> Option<OracleAnswer> {
    let from = topology.endpoint(from_city)?;
    let to = topology.endpoint(to_city)?;
    let src = topology.dpid_of(&from.switch)?;
    let dst = topology.dpid_of(&to.switch)?;

    // Each partial route: switch sequence with the port pairs used between them.
    struct Partial {
        dpids: Vec<Dpid>,
        // (out port on previous switch, in port on next switch, link index)
        joins: Vec<(u16, u16, usize)>,
    }
    let mut complete: Vec<Partial> = Vec::new();
    let mut stack = vec![Partial {
        dpids: vec![src],
        joins: vec![],
    }];
    while let Some(p) = stack.pop() {
        let here = *p.dpids.last().unwrap();
        if here == dst {
            complete.push(p);
            continue;
        }
        for (index, link) in topology.links().iter().enumerate() {
            let a = topology.dpid_of(&link.a.switch).unwrap();
            let b = topology.dpid_of(&link.b.switch).unwrap();
            let step = if a == here {
                Some((b, link.a.port, link.b.port))
            } else if b == here {
                Some((a, link.b.port, link.a.port))
            } else {
                None
            };
            if let Some((next, out_port, in_port)) = step {
                if p.dpids.contains(&next) {
                    continue;
                }
                let mut dpids = p.dpids.clone();
                dpids.push(next);
                let mut joins = p.joins.clone();
                joins.push((out_port, in_port, index));
                stack.push(Partial { dpids, joins });
            }
        }
    }

    let candidates: Vec<OracleCandidate> = complete
        .into_iter()
        .map(|p| {
            let mut hops = Vec::new();
            let mut in_port = from.port;
            for (i, d) in p.dpids.iter().enumerate() {
                let out_port = p.joins.get(i).map_or(to.port, |j| j.0);
                hops.push(Hop {
                    dpid: *d,
                    in_port,
                    out_port,
                });
                if let Some(j) = p.joins.get(i) {
                    in_port = j.1;
                }
            }
            let mut latency_ms = 0.0;
            let mut bottleneck_mbps = f64::INFINITY;
            for (i, j) in p.joins.iter().enumerate() {
                let link = &topology.links()[j.2];
                latency_ms += link.latency_ms;
                let key = LinkKey::new(
                    PortId {
                        dpid: p.dpids[i],
                        port: j.0,
                    },
                    PortId {
                        dpid: p.dpids[i + 1],
                        port: j.1,
                    },
                );
                let booked = reserved.get(&key).copied().unwrap_or(0.0);
                let available = (link.capacity_mbps - booked).max(0.0);
                if available < bottleneck_mbps {
                    bottleneck_mbps = available;
                }
            }
            OracleCandidate {
                hop_count: p.joins.len(),
                hops,
                latency_ms,
                bottleneck_mbps,
            }
        })
        .collect();

    let mut eligible: Vec<&OracleCandidate> = candidates
        .iter()
        .filter(|c| c.bottleneck_mbps >= demand_mbps)
        .collect();
    eligible.sort_by(|x, y| {
        let metric = match intent {
            IntentType::LeastLatency => x.latency_ms.total_cmp(&y.latency_ms),
            IntentType::HighBandwidth => y.bottleneck_mbps.total_cmp(&x.bottleneck_mbps),
            IntentType::LeastHopcount => x.hop_count.cmp(&y.hop_count),
        };
        metric
            .then(x.hop_count.cmp(&y.hop_count))
            .then(x.latency_ms.total_cmp(&y.latency_ms))
            .then(x.dpids().cmp(&y.dpids()))
            .then(x.hops.cmp(&y.hops))
    });
    let best = eligible.first().map(|c| (*c).clone());
    Some(OracleAnswer { candidates, best })
}
