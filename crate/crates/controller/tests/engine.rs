mod common;

use std::time::Duration;

use common::Harness;
use ibn_controller::engine::WithdrawError;
use ibn_controller::sim::SimSwitch;
use ibn_controller::store::{IntentFilter, IntentState};
use ibn_core::dataplane::SwitchState;
use ibn_core::intent::IntentError;
use ibn_core::{Cookie, Dpid, IntentRequest, IntentType};

fn names(h: &Harness, dpids: &[Dpid]) -> Vec<String> {
    let t = h.topology();
    dpids.iter().map(|d| t.name_of(*d).unwrap().to_string()).collect()
}

fn cookies_in_sweep(h: &Harness) -> std::collections::BTreeSet<Cookie> {
    h.fabric.flow_sweep().iter().map(|(_, e)| e.cookie).collect()
}

#[tokio::test]
async fn create_installs_exactly_the_synthesized_flows() {
    let h = Harness::start().await;
    let e = &h.service.engine;
    let x = e
        .execute(IntentRequest::new(IntentType::LeastLatency, "denver", "new york"))
        .await
        .unwrap();
    assert_eq!(names(&h, &x.record.path.dpids()), ["s1", "s2", "s4", "s3"]);
    assert_eq!(x.devices.len(), 4);
    let sweep: Vec<_> = h.fabric.flow_sweep().into_iter().collect();
    let mut stored: Vec<_> = x.record.flows.iter().map(|r| (r.dpid, r.entry)).collect();
    stored.sort();
    assert_eq!(sweep, stored);
    assert_eq!(sweep.len(), 8);
}

#[tokio::test]
async fn dead_switch_rolls_back_everything() {
    let h = Harness::start().await;
    let e = &h.service.engine;
    let before = h.fabric.flow_sweep();
    h.kill_switch("s4").await;
    let err = e
        .execute(IntentRequest::new(IntentType::LeastLatency, "denver", "new york"))
        .await
        .unwrap_err();
    assert_eq!(err, IntentError::SwitchUnreachable(h.topology().dpid_of("s4").unwrap()));
    assert_eq!(h.fabric.flow_sweep(), before);
    assert!(e.store().query_intents(&IntentFilter::default()).is_empty());
}

#[tokio::test]
async fn failed_supersede_restores_the_old_flows() {
    let h = Harness::start().await;
    let e = &h.service.engine;
    let old = e
        .execute(IntentRequest::new(IntentType::HighBandwidth, "denver", "new york"))
        .await
        .unwrap();
    assert_eq!(names(&h, &old.record.path.dpids()), ["s1", "s4", "s3"]);
    let before = h.fabric.flow_sweep();
    // s2 stops answering: the new least-latency path pushes s1 (overwriting
    // the old entries there) and then times out on s2.
    h.fabric.by_name("s2").unwrap().set_muted(true);
    let err = e
        .execute(IntentRequest::new(IntentType::LeastLatency, "denver", "new york"))
        .await
        .unwrap_err();
    assert_eq!(err.code(), "PUSH_TIMEOUT");
    h.fabric.by_name("s2").unwrap().set_muted(false);
    assert_eq!(h.fabric.flow_sweep(), before);
    let r = e.store().get(old.record.id).unwrap();
    assert_eq!(r.state, IntentState::Active);
    assert_eq!(e.store().query_intents(&IntentFilter::default()).len(), 1);
}

#[tokio::test]
async fn supersede_replaces_flows_and_record() {
    let h = Harness::start().await;
    let e = &h.service.engine;
    let old = e
        .execute(IntentRequest::new(IntentType::LeastLatency, "denver", "new york"))
        .await
        .unwrap();
    let new = e
        .execute(IntentRequest::new(IntentType::LeastHopcount, "new york", "denver"))
        .await
        .unwrap();
    assert_eq!(new.superseded, Some(old.record.id));
    assert_eq!(cookies_in_sweep(&h), [new.record.cookie].into());
    let old = e.store().get(old.record.id).unwrap();
    assert_eq!(old.state, IntentState::Withdrawn);
    assert_eq!(old.superseded_by, Some(new.record.id));
}

#[tokio::test]
async fn withdraw_removes_flows() {
    let h = Harness::start().await;
    let e = &h.service.engine;
    let x = e
        .execute(IntentRequest::new(IntentType::HighBandwidth, "denver", "chicago"))
        .await
        .unwrap();
    let w = e.withdraw(x.record.id).await.unwrap();
    assert!(w.failed.is_empty());
    assert!(h.fabric.flow_sweep().is_empty());
    assert_eq!(e.withdraw(x.record.id).await.unwrap_err(), WithdrawError::AlreadyWithdrawn(x.record.id));
    assert_eq!(e.withdraw(999).await.unwrap_err(), WithdrawError::NotFound(999));
}

#[tokio::test]
async fn reconnecting_switch_is_reconciled() {
    let h = Harness::start().await;
    let e = &h.service.engine;
    let topo = h.topology();
    let a = e
        .execute(IntentRequest::new(IntentType::LeastLatency, "denver", "new york"))
        .await
        .unwrap();
    let b = e
        .execute(IntentRequest::new(IntentType::LeastHopcount, "denver", "chicago"))
        .await
        .unwrap();
    assert!(b.record.path.dpids().contains(&topo.dpid_of("s2").unwrap()));

    // s2 misses the withdraw of `b` while it is away.
    h.kill_switch("s2").await;
    let w = e.withdraw(b.record.id).await.unwrap();
    assert_eq!(w.failed.len(), 1);
    let s2 = h.fabric.by_name("s2").unwrap();
    assert!(s2.state().table().with_cookie(b.record.cookie).count() > 0);
    s2.connect();
    let clean = tokio::time::timeout(Duration::from_secs(5), async {
        while s2.state().table().with_cookie(b.record.cookie).count() > 0 {
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    })
    .await;
    assert!(clean.is_ok(), "stale flows not removed");
    assert!(s2.state().table().with_cookie(a.record.cookie).count() == 2);

    // A replacement s2 with an empty table gets the ACTIVE flows back.
    let s2_dpid = s2.dpid();
    s2.disconnect();
    let fresh = SimSwitch::new(SwitchState::from_topology(&topo, s2_dpid).unwrap(), h.service.southbound_addr);
    fresh.connect();
    let restored = tokio::time::timeout(Duration::from_secs(5), async {
        while fresh.state().table().with_cookie(a.record.cookie).count() < 2 {
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    })
    .await;
    assert!(restored.is_ok(), "active flows not re-installed");
    assert_eq!(fresh.state().table().len(), 2);
}

#[tokio::test]
async fn demand_is_reserved_on_switches() {
    let h = Harness::start().await;
    let e = &h.service.engine;
    let x = e
        .execute(IntentRequest::new(IntentType::LeastHopcount, "denver", "new york").with_demand(60.0))
        .await
        .unwrap();
    assert_eq!(names(&h, &x.record.path.dpids()), ["s1", "s2", "s3"]);
    let s2 = h.fabric.by_name("s2").unwrap().state();
    assert_eq!(s2.reserved_on(2), 60.0);
    // 40 left on s2-s3; least hopcount for 50 must go around.
    let y = e
        .execute(IntentRequest::new(IntentType::LeastHopcount, "chicago", "denver").with_demand(50.0))
        .await
        .unwrap();
    assert_eq!(names(&h, &y.record.path.dpids()), ["s5", "s3", "s4", "s1"]);
    let err = e
        .execute(IntentRequest::new(IntentType::LeastLatency, "new york", "chicago").with_demand(2000.0))
        .await
        .unwrap_err();
    assert_eq!(err, IntentError::NoPathMeetsDemand { demand_mbps: 2000.0 });
}
