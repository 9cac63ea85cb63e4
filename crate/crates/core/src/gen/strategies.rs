//! Proptest strategies for wire messages.

use ipnet::Ipv4Net;
use proptest::prelude::*;

use crate::dataplane::PortStats;
use crate::flow::{Cookie, FlowEntry, FlowMatch, FlowMod};
use crate::proto::{Body, ErrorCode, Message, StatsKind, StatsReply};
use crate::topo::Dpid;

pub fn prefix() -> impl Strategy<Value = Option<Ipv4Net>> {
    prop::option::of((any::<u32>(), 0u8..=32).prop_map(|(a, l)| Ipv4Net::new(a.into(), l).unwrap().trunc()))
}

pub fn entry() -> impl Strategy<Value = FlowEntry> {
    (any::<u16>(), prop::option::of(1u16..), prefix(), prefix(), 1u16.., any::<u64>()).prop_map(
        |(priority, in_port, ipv4_src, ipv4_dst, out, cookie)| FlowEntry {
            priority,
            matcher: FlowMatch { in_port, ipv4_src, ipv4_dst },
            action_out_port: out,
            cookie: Cookie(cookie),
        },
    )
}

pub fn port_stats() -> impl Strategy<Value = PortStats> {
    (1u16.., 0u32..1000, prop::option::of(1u32..100_000), 0u32..100_000, any::<u64>(), any::<u64>()).prop_map(
        |(port, lat, cap, res, tx, rx)| PortStats {
            port,
            latency_ms: lat as f64 / 4.0,
            capacity_mbps: cap.map(f64::from),
            reserved_mbps: res as f64,
            tx_packets: tx,
            rx_packets: rx,
        },
    )
}

/// Every message variant.
pub fn body() -> impl Strategy<Value = Body> {
    prop_oneof![
        (any::<u64>(), prop::collection::vec(1u16.., 0..8))
            .prop_map(|(d, ports)| Body::Hello { dpid: Dpid(d), ports }),
        Just(Body::EchoRequest),
        Just(Body::EchoReply),
        (entry(), 0u32..10_000).prop_map(|(entry, r)| Body::FlowMod(FlowMod::Add { entry, reserve_mbps: r as f64 })),
        any::<u64>().prop_map(|c| Body::FlowMod(FlowMod::Delete { cookie: Cookie(c) })),
        Just(Body::FlowModAck),
        prop_oneof![Just(StatsKind::Port), Just(StatsKind::Flow)].prop_map(|kind| Body::StatsRequest { kind }),
        prop::collection::vec(port_stats(), 0..6).prop_map(|v| Body::StatsReply(StatsReply::Port(v))),
        prop::collection::vec(entry(), 0..6).prop_map(|v| Body::StatsReply(StatsReply::Flow(v))),
        (
            prop_oneof![
                Just(ErrorCode::BadOutPort),
                Just(ErrorCode::BadMatch),
                Just(ErrorCode::BadRequest),
                Just(ErrorCode::NotReady)
            ],
            ".*"
        )
            .prop_map(|(code, text)| Body::Error { code, text }),
    ]
}

pub fn message() -> impl Strategy<Value = Message> {
    (any::<u32>(), body()).prop_map(|(xid, body)| Message::new(xid, body))
}
