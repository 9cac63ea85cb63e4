use std::collections::BTreeMap;

use ibn_controller::store::{FaultPoint, IntentFilter, IntentState, NewIntent, Store, StoreError};
use ibn_core::fixtures::topo5;
use ibn_core::intent::{configured_link_state, plan, synthesize_flows};
use ibn_core::{Cookie, IntentRequest, IntentType};
use proptest::prelude::*;

fn new_intent(store: &Store, t: IntentType, from: &str, to: &str, at: u64) -> NewIntent {
    let topo = topo5();
    let req = IntentRequest::new(t, from, to);
    let sel = plan(&topo, &configured_link_state(&topo, &BTreeMap::new()), &req).unwrap();
    let cookie = store.allocate_cookie().unwrap();
    NewIntent {
        flows: synthesize_flows(&sel.path, cookie),
        request: req,
        path: sel.path,
        score: sel.score,
        cookie,
        created_at_ms: at,
    }
}

#[test]
fn state_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = Store::open(&path, &topo5()).unwrap();
    let a = s
        .commit_intent(new_intent(&s, IntentType::LeastLatency, "denver", "new york", 10), None)
        .unwrap();
    let b = s
        .commit_intent(new_intent(&s, IntentType::HighBandwidth, "denver", "chicago", 20), None)
        .unwrap();
    s.withdraw(a.id, 30).unwrap();
    let before = s.query_intents(&IntentFilter::default());
    drop(s);

    let s = Store::open(&path, &topo5()).unwrap();
    assert_eq!(s.query_intents(&IntentFilter::default()), before);
    let state = s.load_state();
    assert_eq!(state.active.len(), 1);
    assert_eq!(state.active[0].id, b.id);
    assert_eq!(state.endpoints, topo5().endpoints().to_vec());
    // Ids and cookies continue past what was handed out before.
    let c = s.allocate_cookie().unwrap();
    assert!(c > b.cookie);
    let r = s
        .commit_intent(new_intent(&s, IntentType::LeastHopcount, "new york", "chicago", 40), None)
        .unwrap();
    assert!(r.id > b.id);
}

#[test]
fn injected_faults_leave_the_previous_state() {
    for point in [FaultPoint::BeforeWrite, FaultPoint::BeforeRename] {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let s = Store::open(&path, &topo5()).unwrap();
        let kept = s
            .commit_intent(new_intent(&s, IntentType::LeastLatency, "denver", "new york", 10), None)
            .unwrap();
        let file_before = std::fs::read(&path).unwrap();
        let listing_before = s.query_intents(&IntentFilter::default());

        let next = new_intent(&s, IntentType::HighBandwidth, "denver", "chicago", 20);
        let file_mid = std::fs::read(&path).unwrap();
        s.inject_fault(Some(point));
        let err = s.commit_intent(next.clone(), None).unwrap_err();
        assert!(matches!(err, StoreError::Injected(p) if p == point));
        assert_eq!(std::fs::read(&path).unwrap(), file_mid, "{point:?}");
        assert_eq!(s.query_intents(&IntentFilter::default()), listing_before);

        s.inject_fault(Some(point));
        assert!(s.withdraw(kept.id, 30).is_err());
        assert!(s.get(kept.id).unwrap().is_active());

        // A restart sees the last good file.
        drop(s);
        let s = Store::open(&path, &topo5()).unwrap();
        assert_eq!(s.query_intents(&IntentFilter::default()), listing_before);
        assert_ne!(file_before, Vec::<u8>::new());

        // And the fault was one-shot.
        s.commit_intent(next, None).unwrap();
        assert_eq!(s.load_state().active.len(), 2);
    }
}

#[test]
fn supersede_is_a_single_write() {
    let dir = tempfile::tempdir().unwrap();
    let s = Store::open(&dir.path().join("s.json"), &topo5()).unwrap();
    let old = s
        .commit_intent(new_intent(&s, IntentType::LeastLatency, "denver", "new york", 10), None)
        .unwrap();
    // Same pair in the other direction counts as the same pair.
    let n = new_intent(&s, IntentType::HighBandwidth, "new york", "denver", 20);
    assert!(matches!(s.commit_intent(n.clone(), None), Err(StoreError::PairInUse { .. })));
    s.inject_fault(Some(FaultPoint::BeforeRename));
    assert!(s.commit_intent(n.clone(), Some(old.id)).is_err());
    assert!(s.get(old.id).unwrap().is_active());

    let new = s.commit_intent(n, Some(old.id)).unwrap();
    let old = s.get(old.id).unwrap();
    assert_eq!(old.state, IntentState::Withdrawn);
    assert_eq!(old.superseded_by, Some(new.id));
    assert_eq!(s.active_for_pair("denver", "new york").unwrap().id, new.id);
}

#[test]
fn tokens_are_stored_as_digests_and_expire() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = Store::open(&path, &topo5()).unwrap();
    s.ensure_user("admin", "pw").unwrap();
    assert!(s.verify_user("admin", "pw"));
    assert!(!s.verify_user("admin", "nope"));
    assert!(!s.verify_user("root", "pw"));

    s.insert_token("tok-123", "admin", 1_000, 0).unwrap();
    let file = std::fs::read_to_string(&path).unwrap();
    assert!(!file.contains("tok-123"));
    assert!(!file.contains("\"pw\""));
    assert_eq!(s.token_user("tok-123", 999).as_deref(), Some("admin"));
    assert_eq!(s.token_user("tok-123", 1_000), None);
    assert_eq!(s.token_user("tok-124", 0), None);
    drop(s);
    let s = Store::open(&path, &topo5()).unwrap();
    assert_eq!(s.token_user("tok-123", 500).as_deref(), Some("admin"));
}

#[test]
fn query_filters_and_orders() {
    let dir = tempfile::tempdir().unwrap();
    let s = Store::open(&dir.path().join("s.json"), &topo5()).unwrap();
    let a = s
        .commit_intent(new_intent(&s, IntentType::LeastLatency, "denver", "new york", 10), None)
        .unwrap();
    let b = s
        .commit_intent(new_intent(&s, IntentType::LeastLatency, "denver", "chicago", 10), None)
        .unwrap();
    let c = s
        .commit_intent(new_intent(&s, IntentType::LeastLatency, "new york", "chicago", 5), None)
        .unwrap();
    s.withdraw(b.id, 20).unwrap();
    let ids = |f: IntentFilter| s.query_intents(&f).iter().map(|r| r.id).collect::<Vec<_>>();
    // Newest first; equal timestamps by id descending.
    assert_eq!(ids(IntentFilter::default()), vec![b.id, a.id, c.id]);
    assert_eq!(
        ids(IntentFilter {
            state: Some(IntentState::Active),
            pair: None
        }),
        vec![a.id, c.id]
    );
    assert_eq!(
        ids(IntentFilter {
            state: None,
            pair: Some(("denver".into(), "chicago".into()))
        }),
        vec![b.id]
    );
}

#[derive(Debug, Clone)]
enum Op {
    Create(IntentType, usize, usize),
    Withdraw(usize),
    Fault(bool),
}

fn op() -> impl Strategy<Value = Op> {
    let t = prop_oneof![
        Just(IntentType::LeastLatency),
        Just(IntentType::HighBandwidth),
        Just(IntentType::LeastHopcount)
    ];
    prop_oneof![
        4 => (t, 0..3usize, 0..3usize).prop_map(|(t, a, b)| Op::Create(t, a, b)),
        2 => (0..8usize).prop_map(Op::Withdraw),
        1 => any::<bool>().prop_map(Op::Fault),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Whatever sequence of writes (some failing) runs, the file on disk
    /// always reloads to exactly what readers saw, and no two ACTIVE intents
    /// share a pair or a cookie.
    #[test]
    fn reopen_matches_memory(ops in prop::collection::vec(op(), 1..16)) {
        const CITIES: [&str; 3] = ["denver", "new york", "chicago"];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let s = Store::open(&path, &topo5()).unwrap();
        let mut now = 0;
        for op in ops {
            now += 1;
            match op {
                Op::Fault(rename) => s.inject_fault(Some(if rename { FaultPoint::BeforeRename } else { FaultPoint::BeforeWrite })),
                Op::Create(t, a, b) if a != b => {
                    let Ok(cookie) = s.allocate_cookie() else { continue };
                    let mut n = new_intent(&s, t, CITIES[a], CITIES[b], now);
                    n.cookie = cookie;
                    n.flows.iter_mut().for_each(|(_, e)| e.cookie = cookie);
                    let old = s.active_for_pair(CITIES[a], CITIES[b]).map(|r| r.id);
                    let _ = s.commit_intent(n, old);
                }
                Op::Create(..) => {}
                Op::Withdraw(i) => {
                    let _ = s.withdraw(i as u64 + 1, now);
                }
            }
            let active = s.load_state().active;
            let pairs: std::collections::BTreeSet<_> = active.iter().map(|r| r.pair()).collect();
            let cookies: std::collections::BTreeSet<Cookie> = active.iter().map(|r| r.cookie).collect();
            prop_assert_eq!(pairs.len(), active.len());
            prop_assert_eq!(cookies.len(), active.len());
        }
        s.inject_fault(None);
        let seen = s.query_intents(&IntentFilter::default());
        drop(s);
        let again = Store::open(&path, &topo5()).unwrap();
        prop_assert_eq!(again.query_intents(&IntentFilter::default()), seen);
    }
}
