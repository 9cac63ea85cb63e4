use std::collections::BTreeMap;

use ibn_core::gen::{random_topology, GenParams};
use ibn_core::intent::{configured_link_state, enumerate_paths, plan, score_path, synthesize_flows};
use ibn_core::oracle;
use ibn_core::dataplane::{trace_packet, PacketProbe, TraceOutcome};
use ibn_core::fixtures::topo5;
use ibn_core::flow::FlowTable;
use ibn_core::{Cookie, Dpid, IntentError, IntentRequest, IntentType, LinkKey, Topology};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn names(topo: &Topology, dpids: &[Dpid]) -> Vec<String> {
    dpids.iter().map(|d| topo.name_of(*d).unwrap().to_string()).collect()
}

#[test]
fn topo5_denver_new_york() {
    let topo = topo5();
    let state = configured_link_state(&topo, &BTreeMap::new());
    let want = [
        (IntentType::LeastLatency, vec!["s1", "s2", "s4", "s3"], 17.0),
        (IntentType::HighBandwidth, vec!["s1", "s4", "s3"], 35.0),
        (IntentType::LeastHopcount, vec!["s1", "s2", "s3"], 20.0),
    ];
    for (t, path, latency) in want {
        let sel = plan(&topo, &state, &IntentRequest::new(t, "Denver", "New York")).unwrap();
        assert_eq!(names(&topo, &sel.path.dpids()), path, "{t:?}");
        assert_eq!(sel.score.latency_ms, latency);
        assert_eq!(sel.candidates, 4);
    }
}

#[test]
fn topo5_enumeration_is_lexicographic() {
    let topo = topo5();
    let paths = enumerate_paths(&topo, topo.endpoint("denver").unwrap(), topo.endpoint("new york").unwrap()).unwrap();
    let got: Vec<String> = paths.iter().map(|p| names(&topo, &p.dpids()).join(",")).collect();
    assert_eq!(got, ["s1,s2,s3", "s1,s2,s4,s3", "s1,s4,s2,s3", "s1,s4,s3"]);
}

#[test]
fn topo5_no_path_after_cut() {
    let topo = topo5().retain_links(|l| l.a.switch != "s3" && l.b.switch != "s3");
    let state = configured_link_state(&topo, &BTreeMap::new());
    let err = plan(&topo, &state, &IntentRequest::new(IntentType::LeastHopcount, "denver", "new york")).unwrap_err();
    assert_eq!(err, IntentError::NoPath);
}

#[test]
fn synthesized_flows_trace_the_selected_path() {
    let topo = topo5();
    let state = configured_link_state(&topo, &BTreeMap::new());
    for t in IntentType::ALL {
        let sel = plan(&topo, &state, &IntentRequest::new(t, "denver", "new york")).unwrap();
        let mut tables: BTreeMap<Dpid, FlowTable> = BTreeMap::new();
        for (d, e) in synthesize_flows(&sel.path, Cookie(9)) {
            tables.entry(d).or_default().insert(e);
        }
        let (from, to) = (topo.endpoint("denver").unwrap(), topo.endpoint("new york").unwrap());
        let fwd = trace_packet(
            &topo,
            &tables,
            &PacketProbe {
                src_ip: from.prefix.addr(),
                dst_ip: to.prefix.addr(),
                ingress: topo.endpoint_port(from),
            },
        )
        .unwrap();
        assert_eq!(fwd.hops, sel.path.hops);
        assert_eq!(fwd.outcome, TraceOutcome::Delivered { city: "new york".into() });
        let back = trace_packet(
            &topo,
            &tables,
            &PacketProbe {
                src_ip: to.prefix.addr(),
                dst_ip: from.prefix.addr(),
                ingress: topo.endpoint_port(to),
            },
        )
        .unwrap();
        assert_eq!(back.hops, sel.path.reversed().hops);
    }
}

fn random_reservations(rng: &mut StdRng, topo: &Topology) -> BTreeMap<LinkKey, f64> {
    let mut out = BTreeMap::new();
    for i in 0..topo.links().len() {
        if rng.gen_bool(0.3) {
            let cap = topo.links()[i].capacity_mbps;
            out.insert(topo.link_key(i), (cap * rng.gen_range(0..=4) as f64 / 4.0).floor());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_agrees_with_oracle(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let topo = random_topology(&mut rng, &GenParams::default());
        let reserved = random_reservations(&mut rng, &topo);
        let state = configured_link_state(&topo, &reserved);
        let cities = topo.cities();
        let from = cities[rng.gen_range(0..cities.len())].clone();
        let to = loop {
            let c = &cities[rng.gen_range(0..cities.len())];
            if *c != from { break c.clone(); }
        };
        let demand = [0.0, 10.0, 100.0, 500.0][rng.gen_range(0..4)];
        for t in IntentType::ALL {
            let want = oracle::best_path(&topo, &from, &to, t, demand, &reserved).unwrap();
            let got = plan(&topo, &state, &IntentRequest::new(t, &from, &to).with_demand(demand));
            match (got, want.best) {
                (Ok(sel), Some(best)) => {
                    prop_assert_eq!(&sel.path.hops, &best.hops);
                    prop_assert_eq!(sel.candidates, want.candidates.len());
                }
                (Err(IntentError::NoPathMeetsDemand { .. }), None) => {}
                (got, best) => prop_assert!(false, "engine {:?} vs oracle {:?}", got, best),
            }
        }
    }

    #[test]
    fn selected_path_is_extremal(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let topo = random_topology(&mut rng, &GenParams::default());
        let state = configured_link_state(&topo, &BTreeMap::new());
        let (from, to) = (&topo.endpoints()[0], topo.endpoints().last().unwrap());
        let paths = enumerate_paths(&topo, from, to).unwrap();
        let scores: Vec<_> = paths.iter().map(|p| score_path(p, &state).unwrap()).collect();
        for t in IntentType::ALL {
            let sel = plan(&topo, &state, &IntentRequest::new(t, &from.city, &to.city)).unwrap();
            for s in &scores {
                match t {
                    IntentType::LeastLatency => prop_assert!(sel.score.latency_ms <= s.latency_ms),
                    IntentType::HighBandwidth => prop_assert!(sel.score.bottleneck_mbps >= s.bottleneck_mbps),
                    IntentType::LeastHopcount => prop_assert!(sel.score.hop_count <= s.hop_count),
                }
            }
            topo.check_path(&sel.path).map_err(TestCaseError::fail)?;
        }
    }

    #[test]
    fn reversing_a_path_twice_is_identity(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let topo = random_topology(&mut rng, &GenParams::default());
        let (from, to) = (&topo.endpoints()[0], topo.endpoints().last().unwrap());
        for p in enumerate_paths(&topo, from, to).unwrap() {
            prop_assert_eq!(p.reversed().reversed(), p.clone());
            prop_assert_eq!(p.reversed().hop_count(), p.hop_count());
        }
    }
}
