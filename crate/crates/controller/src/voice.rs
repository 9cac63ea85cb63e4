//! Webhook-facing dialogue service: one [`DialogueSession`] per session id,
//! turns within a session serialized, confirmed requests run through the
//! engine.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ibn_core::dialogue::{
    interpret, session_closed_response, DialogueSession, InteractionModel, Provisioned, Step, WebhookRequest,
    WebhookResponse,
};
use tokio::task::JoinHandle;
use tracing::debug;

use crate::engine::Engine;
use crate::now_ms;

type Slot = Arc<tokio::sync::Mutex<DialogueSession>>;

pub struct Voice {
    model: InteractionModel,
    engine: Arc<Engine>,
    turn_timeout_ms: u64,
    sessions: Mutex<HashMap<String, Slot>>,
}

impl Voice {
    pub fn new(model: InteractionModel, engine: Arc<Engine>, turn_timeout_ms: u64) -> Self {
        Voice {
            model,
            engine,
            turn_timeout_ms,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &InteractionModel {
        &self.model
    }

    fn slot(&self, id: &str, now: u64) -> Slot {
        self.sessions
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(tokio::sync::Mutex::new(DialogueSession::new(id, now))))
            .clone()
    }

    pub async fn handle_webhook(&self, request: &WebhookRequest) -> WebhookResponse {
        self.handle_webhook_at(request, now_ms()).await
    }

    /// One turn at time `now` (milliseconds).
    pub async fn handle_webhook_at(&self, request: &WebhookRequest, now: u64) -> WebhookResponse {
        let slot = self.slot(&request.session_id, now);
        let mut session = slot.lock().await;
        // An expired session the sweep has not reached yet counts as unknown.
        if session.is_expired(now, self.turn_timeout_ms) {
            *session = DialogueSession::new(request.session_id.clone(), now);
        }
        let event = interpret(&self.model, &mut session, request);
        match session.advance(event, now) {
            Err(_) => session_closed_response(),
            Ok(Step::Reply(r)) => r,
            Ok(Step::Execute(req)) => {
                let outcome = self.engine.execute(req).await.map(|x| Provisioned {
                    path: x
                        .record
                        .path
                        .dpids()
                        .iter()
                        .map(|d| self.engine.topology().name_of(*d).unwrap_or("?").to_string())
                        .collect(),
                });
                session.complete(outcome, now_ms().max(now))
            }
        }
    }

    /// Closes and forgets sessions idle longer than the turn timeout, plus
    /// closed sessions past it. Returns the ids that were open.
    pub fn expire_sessions(&self, now: u64) -> Vec<String> {
        let mut sessions = self.sessions.lock().unwrap();
        let mut expired = Vec::new();
        sessions.retain(|id, slot| {
            // A session mid-turn is busy, not idle.
            let Ok(s) = slot.try_lock() else { return true };
            let idle = now.saturating_sub(s.last_activity_ms) > self.turn_timeout_ms;
            if s.is_expired(now, self.turn_timeout_ms) {
                expired.push(id.clone());
            }
            !idle
        });
        expired.sort();
        expired
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn spawn_sweeper(self: &Arc<Self>, every: Duration) -> JoinHandle<()> {
        let voice = Arc::downgrade(self);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let Some(v) = voice.upgrade() else { return };
                let closed = v.expire_sessions(now_ms());
                if !closed.is_empty() {
                    debug!(?closed, "expired dialogue sessions");
                }
            }
        })
    }
}
