//! Simulated switch state and packet tracing over a set of flow tables.
//!
//! A switch has no control plane of its own: it forwards by flow-table lookup
//! only and drops on table miss.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{Cookie, FlowEntry, FlowMod, FlowTable};
use crate::topo::{Attachment, Dpid, Hop, PortId, Topology};

/// Configured attributes of one switch port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortConfig {
    pub latency_ms: f64,
    /// `None` for ports without a metric (endpoint attachments, spare ports).
    pub capacity_mbps: Option<f64>,
}

/// Per-port report returned for a port stats request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortStats {
    pub port: u16,
    pub latency_ms: f64,
    /// `null` on the wire means unbounded.
    pub capacity_mbps: Option<f64>,
    pub reserved_mbps: f64,
    pub tx_packets: u64,
    pub rx_packets: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowModError {
    #[error("output port {port} does not exist on switch {dpid}")]
    BadOutPort { dpid: Dpid, port: u16 },
    #[error("flow match must constrain at least one field")]
    EmptyMatch,
    #[error("invalid reservation {0} mbps")]
    BadReservation(f64),
}

/// State of one simulated switch.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchState {
    pub dpid: Dpid,
    ports: BTreeMap<u16, PortConfig>,
    table: FlowTable,
    reservations: BTreeMap<Cookie, f64>,
    counters: BTreeMap<u16, (u64, u64)>,
}

impl SwitchState {
    pub fn new(dpid: Dpid, ports: BTreeMap<u16, PortConfig>) -> Self {
        SwitchState {
            dpid,
            ports,
            table: FlowTable::new(),
            reservations: BTreeMap::new(),
            counters: BTreeMap::new(),
        }
    }

    /// Builds the switch `dpid` with port attributes taken from `topology`.
    pub fn from_topology(topology: &Topology, dpid: Dpid) -> Option<Self> {
        let sw = topology.switch_by_dpid(dpid)?;
        let ports = sw
            .ports
            .iter()
            .map(|&port| {
                let cfg = match topology.attachment(PortId { dpid, port }) {
                    Some(Attachment::Link { index, .. }) => {
                        let l = &topology.links()[index];
                        PortConfig {
                            latency_ms: l.latency_ms,
                            capacity_mbps: Some(l.capacity_mbps),
                        }
                    }
                    _ => PortConfig {
                        latency_ms: 0.0,
                        capacity_mbps: None,
                    },
                };
                (port, cfg)
            })
            .collect();
        Some(SwitchState::new(dpid, ports))
    }

    pub fn ports(&self) -> impl Iterator<Item = u16> + '_ {
        self.ports.keys().copied()
    }

    pub fn table(&self) -> &FlowTable {
        &self.table
    }

    /// Applies a flow-mod. ADD overwrites an entry with equal (priority,
    /// match); DELETE removes every entry tagged with the cookie together with
    /// its reservation.
    pub fn apply_flow_mod(&mut self, command: &FlowMod) -> Result<(), FlowModError> {
        match command {
            FlowMod::Add {
                entry,
                reserve_mbps,
            } => {
                if !entry.matcher.is_valid() {
                    return Err(FlowModError::EmptyMatch);
                }
                if !self.ports.contains_key(&entry.action_out_port) {
                    return Err(FlowModError::BadOutPort {
                        dpid: self.dpid,
                        port: entry.action_out_port,
                    });
                }
                if !(reserve_mbps.is_finite() && *reserve_mbps >= 0.0) {
                    return Err(FlowModError::BadReservation(*reserve_mbps));
                }
                self.table.insert(*entry);
                if *reserve_mbps > 0.0 {
                    self.reservations.insert(entry.cookie, *reserve_mbps);
                }
            }
            FlowMod::Delete { cookie } => {
                self.table.delete_cookie(*cookie);
                self.reservations.remove(cookie);
            }
        }
        // A cookie whose last entry was overwritten no longer holds bandwidth.
        let live: BTreeSet<Cookie> = self.table.entries().map(|e| e.cookie).collect();
        self.reservations.retain(|c, _| live.contains(c));
        Ok(())
    }

    /// Bandwidth booked on `port`: the sum of reservations of every cookie
    /// with at least one entry outputting to that port.
    pub fn reserved_on(&self, port: u16) -> f64 {
        let cookies: BTreeSet<Cookie> = self
            .table
            .entries()
            .filter(|e| e.action_out_port == port)
            .map(|e| e.cookie)
            .collect();
        cookies
            .iter()
            .filter_map(|c| self.reservations.get(c))
            .sum()
    }

    pub fn port_stats(&self) -> Vec<PortStats> {
        self.ports
            .iter()
            .map(|(&port, cfg)| {
                let (tx, rx) = self.counters.get(&port).copied().unwrap_or_default();
                PortStats {
                    port,
                    latency_ms: cfg.latency_ms,
                    capacity_mbps: cfg.capacity_mbps,
                    reserved_mbps: self.reserved_on(port),
                    tx_packets: tx,
                    rx_packets: rx,
                }
            })
            .collect()
    }

    pub fn flow_stats(&self) -> Vec<FlowEntry> {
        self.table.entries().copied().collect()
    }

    /// Bumps the rx counter of `in_port` and the tx counter of `out_port`.
    pub fn count_packet(&mut self, in_port: u16, out_port: u16) {
        self.counters.entry(in_port).or_default().1 += 1;
        self.counters.entry(out_port).or_default().0 += 1;
    }
}

/// Test packet injected at a switch port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketProbe {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub ingress: PortId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TraceOutcome {
    /// Left the network on an endpoint port.
    Delivered { city: String },
    /// Table miss, or output to an unattached port.
    Drop { at: Dpid },
    /// A switch was visited twice.
    Loop { at: Dpid },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub hops: Vec<Hop>,
    #[serde(flatten)]
    pub outcome: TraceOutcome,
}

impl Trace {
    pub fn dpids(&self) -> Vec<Dpid> {
        self.hops.iter().map(|h| h.dpid).collect()
    }

    pub fn is_delivered(&self) -> bool {
        matches!(self.outcome, TraceOutcome::Delivered { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("probe ingress {0:?} is not an endpoint or link port")]
    UnknownIngress(PortId),
}

/// Follows `probe` through `tables` by repeated lookup. Switches missing from
/// `tables` behave like empty tables.
///
/// Terminates in at most `|switches|` lookups: revisiting a switch ends the
/// trace with [`TraceOutcome::Loop`].
pub fn trace_packet(
    topology: &Topology,
    tables: &BTreeMap<Dpid, FlowTable>,
    probe: &PacketProbe,
) -> Result<Trace, TraceError> {
    if topology.attachment(probe.ingress).is_none() {
        return Err(TraceError::UnknownIngress(probe.ingress));
    }
    let empty = FlowTable::new();
    let mut hops = Vec::new();
    let mut visited = BTreeSet::new();
    let mut at = probe.ingress;
    loop {
        if !visited.insert(at.dpid) {
            return Ok(Trace {
                hops,
                outcome: TraceOutcome::Loop { at: at.dpid },
            });
        }
        let table = tables.get(&at.dpid).unwrap_or(&empty);
        let Some(entry) = table.lookup(at.port, probe.src_ip, probe.dst_ip) else {
            return Ok(Trace {
                hops,
                outcome: TraceOutcome::Drop { at: at.dpid },
            });
        };
        let out = entry.action_out_port;
        hops.push(Hop {
            dpid: at.dpid,
            in_port: at.port,
            out_port: out,
        });
        match topology.attachment(PortId {
            dpid: at.dpid,
            port: out,
        }) {
            Some(Attachment::Endpoint { index }) => {
                return Ok(Trace {
                    hops,
                    outcome: TraceOutcome::Delivered {
                        city: topology.endpoints()[index].city.clone(),
                    },
                })
            }
            Some(Attachment::Link { peer, .. }) => at = peer,
            None => {
                return Ok(Trace {
                    hops,
                    outcome: TraceOutcome::Drop { at: at.dpid },
                })
            }
        }
    }
}

/// All switches of a topology, held in one place.
#[derive(Debug, Clone)]
pub struct Dataplane {
    switches: BTreeMap<Dpid, SwitchState>,
}

impl Dataplane {
    pub fn new(topology: &Topology) -> Self {
        Dataplane {
            switches: topology
                .switches()
                .iter()
                .map(|s| {
                    (
                        s.dpid,
                        SwitchState::from_topology(topology, s.dpid).expect("declared switch"),
                    )
                })
                .collect(),
        }
    }

    pub fn switch(&self, dpid: Dpid) -> Option<&SwitchState> {
        self.switches.get(&dpid)
    }

    pub fn switch_mut(&mut self, dpid: Dpid) -> Option<&mut SwitchState> {
        self.switches.get_mut(&dpid)
    }

    pub fn tables(&self) -> BTreeMap<Dpid, FlowTable> {
        self.switches
            .iter()
            .map(|(d, s)| (*d, s.table.clone()))
            .collect()
    }

    /// Every (switch, entry) pair in the network.
    pub fn flow_sweep(&self) -> BTreeSet<(Dpid, FlowEntry)> {
        self.switches
            .iter()
            .flat_map(|(d, s)| s.table.entries().map(move |e| (*d, *e)))
            .collect()
    }

    /// Traces `probe` and bumps the tx/rx counters of every port it crossed.
    pub fn trace(&mut self, topology: &Topology, probe: &PacketProbe) -> Result<Trace, TraceError> {
        let trace = trace_packet(topology, &self.tables(), probe)?;
        for h in &trace.hops {
            if let Some(s) = self.switches.get_mut(&h.dpid) {
                s.count_packet(h.in_port, h.out_port);
            }
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::topo5;
    use crate::flow::FlowMatch;

    fn entry(in_port: Option<u16>, out: u16, cookie: u64) -> FlowEntry {
        FlowEntry {
            priority: 100,
            matcher: FlowMatch {
                in_port,
                ipv4_src: None,
                ipv4_dst: Some("10.3.0.0/24".parse().unwrap()),
            },
            action_out_port: out,
            cookie: Cookie(cookie),
        }
    }

    fn probe(dpid: u64, port: u16) -> PacketProbe {
        PacketProbe {
            src_ip: "10.1.0.5".parse().unwrap(),
            dst_ip: "10.3.0.5".parse().unwrap(),
            ingress: PortId {
                dpid: Dpid(dpid),
                port,
            },
        }
    }

    #[test]
    fn empty_tables_drop() {
        let t = topo5();
        let mut dp = Dataplane::new(&t);
        let tr = dp.trace(&t, &probe(1, 4)).unwrap();
        assert_eq!(tr.outcome, TraceOutcome::Drop { at: Dpid(1) });
        assert!(tr.hops.is_empty());
    }

    #[test]
    fn constructed_cycle_is_a_loop() {
        let t = topo5();
        let mut dp = Dataplane::new(&t);
        let add = |e| FlowMod::Add {
            entry: e,
            reserve_mbps: 0.0,
        };
        // s1 sends towards s2 on port 1, s2 sends straight back on its port 1.
        dp.switch_mut(Dpid(1)).unwrap().apply_flow_mod(&add(entry(None, 1, 1))).unwrap();
        dp.switch_mut(Dpid(2)).unwrap().apply_flow_mod(&add(entry(None, 1, 1))).unwrap();
        let tr = dp.trace(&t, &probe(1, 4)).unwrap();
        assert_eq!(tr.outcome, TraceOutcome::Loop { at: Dpid(1) });
        assert_eq!(tr.dpids(), [Dpid(1), Dpid(2)]);
    }

    #[test]
    fn bad_out_port_rejected() {
        let t = topo5();
        let mut s1 = SwitchState::from_topology(&t, Dpid(1)).unwrap();
        let err = s1
            .apply_flow_mod(&FlowMod::Add {
                entry: entry(Some(4), 99, 1),
                reserve_mbps: 0.0,
            })
            .unwrap_err();
        assert_eq!(err, FlowModError::BadOutPort { dpid: Dpid(1), port: 99 });
        assert!(s1.table().is_empty());
    }

    #[test]
    fn port_stats_echo_topology_and_counters() {
        let t = topo5();
        let mut dp = Dataplane::new(&t);
        let s1 = dp.switch(Dpid(1)).unwrap().port_stats();
        let p1 = s1.iter().find(|p| p.port == 1).unwrap();
        assert_eq!((p1.latency_ms, p1.capacity_mbps), (10.0, Some(1000.0)));
        let p4 = s1.iter().find(|p| p.port == 4).unwrap();
        assert_eq!((p4.latency_ms, p4.capacity_mbps), (0.0, None));

        dp.switch_mut(Dpid(1))
            .unwrap()
            .apply_flow_mod(&FlowMod::Add {
                entry: entry(Some(4), 1, 5),
                reserve_mbps: 10.0,
            })
            .unwrap();
        dp.trace(&t, &probe(1, 4)).unwrap();
        let stats = dp.switch(Dpid(1)).unwrap().port_stats();
        let p1 = stats.iter().find(|p| p.port == 1).unwrap();
        assert_eq!(p1.tx_packets, 1);
        assert_eq!(p1.reserved_mbps, 10.0);
        assert_eq!(stats.iter().find(|p| p.port == 4).unwrap().rx_packets, 1);

        dp.switch_mut(Dpid(1))
            .unwrap()
            .apply_flow_mod(&FlowMod::Delete { cookie: Cookie(5) })
            .unwrap();
        assert_eq!(dp.switch(Dpid(1)).unwrap().reserved_on(1), 0.0);
    }

    #[test]
    fn unknown_ingress_is_an_error() {
        let t = topo5();
        let dp = Dataplane::new(&t);
        assert!(trace_packet(&t, &dp.tables(), &probe(1, 9)).is_err());
    }
}
