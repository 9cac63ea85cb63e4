mod common;

use common::Harness;
use ibn_controller::store::IntentFilter;
use ibn_core::dialogue::{RequestKind, WebhookRequest};

fn turn(session: &str, kind: RequestKind, transcript: &str) -> WebhookRequest {
    WebhookRequest {
        session_id: session.into(),
        kind,
        slots: Default::default(),
        transcript: transcript.into(),
    }
}

#[tokio::test]
async fn late_confirmation_does_not_provision() {
    let h = Harness::start().await;
    let v = &h.service.voice;
    v.handle_webhook_at(&turn("a", RequestKind::Launch, ""), 0).await;
    let r = v
        .handle_webhook_at(&turn("a", RequestKind::Utterance, "setup a fastest path from denver to chicago"), 1_000)
        .await;
    assert!(!r.should_end_session);
    // Past the 8 s turn timeout: the confirmation lands on a fresh session.
    let r = v.handle_webhook_at(&turn("a", RequestKind::Utterance, "yes"), 9_001).await;
    assert!(!r.speech_text.starts_with("Done"), "{}", r.speech_text);
    assert!(h.service.engine.store().query_intents(&IntentFilter::default()).is_empty());
}

#[tokio::test]
async fn confirmation_just_inside_the_timeout_provisions() {
    let h = Harness::start().await;
    let v = &h.service.voice;
    v.handle_webhook_at(&turn("b", RequestKind::Launch, ""), 0).await;
    v.handle_webhook_at(&turn("b", RequestKind::Utterance, "setup a fastest path from denver to chicago"), 1_000)
        .await;
    let r = v.handle_webhook_at(&turn("b", RequestKind::Utterance, "yes"), 9_000).await;
    assert!(r.should_end_session);
    assert!(r.speech_text.starts_with("Done"), "{}", r.speech_text);
    assert_eq!(h.service.engine.store().load_state().active.len(), 1);
}

#[tokio::test]
async fn sweep_forgets_idle_sessions() {
    let h = Harness::start().await;
    let v = &h.service.voice;
    v.handle_webhook_at(&turn("x", RequestKind::Launch, ""), 0).await;
    v.handle_webhook_at(&turn("y", RequestKind::Launch, ""), 5_000).await;
    assert_eq!(v.session_count(), 2);
    assert_eq!(v.expire_sessions(8_001), vec!["x".to_string()]);
    assert_eq!(v.session_count(), 1);
    assert_eq!(v.expire_sessions(20_000), vec!["y".to_string()]);
    assert_eq!(v.session_count(), 0);
}
