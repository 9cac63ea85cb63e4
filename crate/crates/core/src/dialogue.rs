//! Slot-filling conversation for the voice frontend.
//!
//! Transcripts are normalized into tokens and matched against sample
//! templates. A [`DialogueSession`] funnels the user from an open command to a
//! fully specified, confirmed [`IntentRequest`]. The session never runs the
//! intent itself: a confirmed turn yields [`Step::Execute`], and the caller
//! reports the result back through [`DialogueSession::complete`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent::{IntentError, IntentRequest, IntentType};
use crate::text::normalize;

pub use crate::text::normalize as normalize_transcript;

/// Invocation name used when none is configured.
pub const DEFAULT_INVOCATION: &str = "vivonet";

/// Per-turn idle timeout used when none is configured.
pub const DEFAULT_TURN_TIMEOUT_MS: u64 = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    AwaitingCommand,
    AwaitingSlots,
    AwaitingConfirmation,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntentName {
    LaunchRequest,
    CreateIntent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotName {
    IntentType,
    FromCity,
    ToCity,
    Confirmation,
    /// A bare city answering whichever city slot is still missing.
    City,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Word(String),
    Slot(SlotName),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub intent: IntentName,
    parts: Vec<Part>,
    stages: Vec<Stage>,
}

impl Template {
    /// Parses `"setup a {intent_type} path from {from_city} to {to_city}"`.
    fn parse(intent: IntentName, text: &str, stages: &[Stage]) -> Template {
        let parts = text
            .split_whitespace()
            .map(|w| match w {
                "{intent_type}" => Part::Slot(SlotName::IntentType),
                "{from_city}" => Part::Slot(SlotName::FromCity),
                "{to_city}" => Part::Slot(SlotName::ToCity),
                "{confirmation}" => Part::Slot(SlotName::Confirmation),
                "{city}" => Part::Slot(SlotName::City),
                w if w.starts_with('{') => panic!("undefined slot {w} in template {text:?}"),
                w => Part::Word(w.to_string()),
            })
            .collect::<Vec<_>>();
        assert!(!parts.is_empty(), "empty template");
        Template {
            intent,
            parts,
            stages: stages.to_vec(),
        }
    }

    fn legal_in(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

/// Slot values captured from one turn, or accumulated over a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Slots {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_type: Option<IntentType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmation: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matched {
    pub intent: IntentName,
    pub slots: Slots,
}

/// Utterance templates and slot vocabularies.
#[derive(Debug, Clone)]
pub struct InteractionModel {
    invocation: Vec<String>,
    templates: Vec<Template>,
}

impl Default for InteractionModel {
    fn default() -> Self {
        InteractionModel::new(DEFAULT_INVOCATION)
    }
}

const YES: &[&str] = &["yes", "yeah", "confirm"];
const NO: &[&str] = &["no", "cancel", "stop"];

fn parse_confirmation(text: &str) -> Option<bool> {
    let key = normalize(text).join(" ");
    if YES.contains(&key.as_str()) {
        Some(true)
    } else if NO.contains(&key.as_str()) {
        Some(false)
    } else {
        None
    }
}

impl InteractionModel {
    pub fn new(invocation_name: &str) -> Self {
        use IntentName::*;
        use Stage::*;
        let invocation = normalize(invocation_name);
        assert!(!invocation.is_empty(), "invocation name must not be empty");
        let inv = invocation.join(" ");
        let mut templates = Vec::new();
        for verb in ["launch", "open", "start"] {
            templates.push(Template::parse(
                LaunchRequest,
                &format!("{verb} {inv}"),
                &[AwaitingCommand],
            ));
        }
        let command_stages = [AwaitingCommand, AwaitingSlots, AwaitingConfirmation];
        for verb in ["setup", "set up", "create"] {
            for tail in [
                "a {intent_type} path from {from_city} to {to_city}",
                "a path from {from_city} to {to_city}",
                "a {intent_type} path",
                "a path",
            ] {
                templates.push(Template::parse(
                    CreateIntent,
                    &format!("{verb} {tail}"),
                    &command_stages,
                ));
            }
        }
        templates.push(Template::parse(
            CreateIntent,
            "{confirmation}",
            &[AwaitingConfirmation],
        ));
        let slot_stages = [AwaitingSlots, AwaitingConfirmation];
        for t in [
            "{intent_type}",
            "{intent_type} path",
            "from {from_city} to {to_city}",
            "{from_city} to {to_city}",
            "from {from_city}",
            "to {to_city}",
        ] {
            templates.push(Template::parse(CreateIntent, t, &slot_stages));
        }
        templates.push(Template::parse(CreateIntent, "{city}", &[AwaitingSlots]));
        InteractionModel {
            invocation,
            templates,
        }
    }

    pub fn invocation(&self) -> String {
        self.invocation.join(" ")
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    /// Matches `tokens` against the templates legal in `stage`, in
    /// declaration order. A leading invocation name is optional on every
    /// template except the launch phrases.
    pub fn match_utterance(&self, tokens: &[String], stage: Stage) -> Option<Matched> {
        let stripped = tokens
            .strip_prefix(self.invocation.as_slice())
            .filter(|rest| !rest.is_empty());
        for t in self.templates.iter().filter(|t| t.legal_in(stage)) {
            let mut candidates = vec![tokens];
            if let (Some(rest), IntentName::CreateIntent) = (stripped, t.intent) {
                candidates.push(rest);
            }
            for input in candidates {
                let mut captured = Vec::new();
                if match_parts(&t.parts, input, &mut captured) {
                    return Some(Matched {
                        intent: t.intent,
                        slots: slots_from(captured),
                    });
                }
            }
        }
        None
    }
}

fn slot_value_ok(slot: SlotName, tokens: &[String]) -> bool {
    if tokens.is_empty() {
        return false;
    }
    let text = tokens.join(" ");
    match slot {
        SlotName::IntentType => IntentType::parse(&text).is_some(),
        SlotName::Confirmation => parse_confirmation(&text).is_some(),
        SlotName::FromCity | SlotName::ToCity | SlotName::City => true,
    }
}

/// Template matcher. A slot followed by a literal anchor captures up to an
/// occurrence of that anchor, trying the leftmost occurrence first; a
/// trailing slot captures the rest of the input.
fn match_parts(parts: &[Part], tokens: &[String], captured: &mut Vec<(SlotName, String)>) -> bool {
    match parts.split_first() {
        None => tokens.is_empty(),
        Some((Part::Word(w), rest)) => {
            tokens.first().is_some_and(|t| t == w) && match_parts(rest, &tokens[1..], captured)
        }
        Some((Part::Slot(slot), rest)) => {
            let ends: Vec<usize> = match rest.first() {
                None => vec![tokens.len()],
                Some(Part::Word(anchor)) => (1..tokens.len()).filter(|&j| &tokens[j] == anchor).collect(),
                Some(Part::Slot(_)) => (1..tokens.len()).collect(),
            };
            for end in ends {
                let value = &tokens[..end];
                if !slot_value_ok(*slot, value) {
                    continue;
                }
                let mark = captured.len();
                captured.push((*slot, value.join(" ")));
                if match_parts(rest, &tokens[end..], captured) {
                    return true;
                }
                captured.truncate(mark);
            }
            false
        }
    }
}

fn slots_from(captured: Vec<(SlotName, String)>) -> Slots {
    let mut s = Slots::default();
    for (slot, value) in captured {
        match slot {
            SlotName::IntentType => s.intent_type = IntentType::parse(&value),
            SlotName::FromCity => s.from_city = Some(value),
            SlotName::ToCity => s.to_city = Some(value),
            SlotName::Confirmation => s.confirmation = parse_confirmation(&value),
            SlotName::City => s.city = Some(value),
        }
    }
    s
}

/// Free function form of [`InteractionModel::match_utterance`].
pub fn match_utterance(tokens: &[String], stage: Stage, model: &InteractionModel) -> Option<Matched> {
    model.match_utterance(tokens, stage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequestKind {
    Launch,
    Intent,
    Utterance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebhookRequest {
    pub session_id: String,
    #[serde(rename = "type")]
    pub kind: RequestKind,
    #[serde(default)]
    pub slots: BTreeMap<String, String>,
    #[serde(default)]
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebhookResponse {
    pub speech_text: String,
    pub should_end_session: bool,
    #[serde(default)]
    pub session_attributes: BTreeMap<String, String>,
}

/// What happened in one turn, after matching.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Launch,
    /// Slot values supplied by the user (possibly none).
    Fill(Slots),
    Confirm(bool),
    NoMatch,
    Timeout,
}

impl Event {
    pub fn from_match(m: Option<Matched>) -> Event {
        match m {
            None => Event::NoMatch,
            Some(Matched {
                intent: IntentName::LaunchRequest,
                ..
            }) => Event::Launch,
            Some(Matched { slots, .. }) => match slots.confirmation {
                Some(yes) => Event::Confirm(yes),
                None => Event::Fill(slots),
            },
        }
    }
}

/// Result of advancing a session by one event.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Reply(WebhookResponse),
    /// The user confirmed; run the request and call
    /// [`DialogueSession::complete`] with the result.
    Execute(IntentRequest),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialogueError {
    #[error("session {0} is closed")]
    SessionClosed(String),
}

/// Successful provisioning, as reported back to the user.
#[derive(Debug, Clone, PartialEq)]
pub struct Provisioned {
    /// Switch names along the installed path.
    pub path: Vec<String>,
}

const EXAMPLE: &str = "setup a least latency path from denver to new york";

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueSession {
    pub session_id: String,
    pub filled: Slots,
    pub stage: Stage,
    pub last_activity_ms: u64,
}

impl DialogueSession {
    pub fn new(session_id: impl Into<String>, now_ms: u64) -> Self {
        DialogueSession {
            session_id: session_id.into(),
            filled: Slots::default(),
            stage: Stage::AwaitingCommand,
            last_activity_ms: now_ms,
        }
    }

    pub fn is_expired(&self, now_ms: u64, timeout_ms: u64) -> bool {
        self.stage != Stage::Closed && now_ms.saturating_sub(self.last_activity_ms) > timeout_ms
    }

    /// Overwrites slots present in `slots`. A bare city fills the first
    /// missing city slot.
    pub fn merge(&mut self, slots: &Slots) {
        if let Some(t) = slots.intent_type {
            self.filled.intent_type = Some(t);
        }
        if let Some(c) = &slots.from_city {
            self.filled.from_city = Some(c.clone());
        }
        if let Some(c) = &slots.to_city {
            self.filled.to_city = Some(c.clone());
        }
        if let Some(c) = &slots.city {
            if self.filled.from_city.is_none() {
                self.filled.from_city = Some(c.clone());
            } else if self.filled.to_city.is_none() {
                self.filled.to_city = Some(c.clone());
            }
        }
    }

    fn request(&self) -> Option<IntentRequest> {
        Some(IntentRequest::new(
            self.filled.intent_type?,
            self.filled.from_city.as_deref()?,
            self.filled.to_city.as_deref()?,
        ))
    }

    fn attributes(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let stage = serde_json::to_value(self.stage).expect("stage serializes");
        m.insert("stage".into(), stage.as_str().unwrap_or_default().to_string());
        if let Some(t) = self.filled.intent_type {
            m.insert("intent_type".into(), t.phrase().to_string());
        }
        if let Some(c) = &self.filled.from_city {
            m.insert("from_city".into(), c.clone());
        }
        if let Some(c) = &self.filled.to_city {
            m.insert("to_city".into(), c.clone());
        }
        m
    }

    fn reply(&self, speech: impl Into<String>) -> Step {
        Step::Reply(WebhookResponse {
            speech_text: speech.into(),
            should_end_session: self.stage == Stage::Closed,
            session_attributes: self.attributes(),
        })
    }

    /// Prompt for the first missing slot, or read the request back and ask
    /// for confirmation once everything is filled.
    fn funnel(&mut self) -> Step {
        let prompt = if self.filled.intent_type.is_none() {
            "Which intent type would you like? You can say least latency, high bandwidth or least hopcount."
        } else if self.filled.from_city.is_none() {
            "Which city should the path start from?"
        } else if self.filled.to_city.is_none() {
            "Which city should the path go to?"
        } else {
            let req = self.request().expect("all slots filled");
            self.stage = Stage::AwaitingConfirmation;
            return self.reply(format!(
                "You asked to setup a {} path from {} to {}. Should I go ahead?",
                req.intent_type.phrase(),
                req.from_city,
                req.to_city
            ));
        };
        self.stage = Stage::AwaitingSlots;
        self.reply(prompt)
    }

    /// Advances the session by one event.
    pub fn advance(&mut self, event: Event, now_ms: u64) -> Result<Step, DialogueError> {
        if self.stage == Stage::Closed {
            return Err(DialogueError::SessionClosed(self.session_id.clone()));
        }
        self.last_activity_ms = now_ms;
        let step = match event {
            Event::Timeout => {
                self.stage = Stage::Closed;
                self.reply("The session timed out. Goodbye.")
            }
            Event::Launch => {
                self.filled = Slots::default();
                self.stage = Stage::AwaitingCommand;
                self.reply(format!(
                    "Welcome to intent-based networking. What would you like to do? For example, say {EXAMPLE}."
                ))
            }
            Event::Fill(slots) => {
                self.merge(&slots);
                self.funnel()
            }
            Event::Confirm(yes) if self.stage == Stage::AwaitingConfirmation => {
                if yes {
                    return Ok(Step::Execute(self.request().expect("confirmation stage has all slots")));
                }
                self.stage = Stage::Closed;
                self.reply("Cancelled. No changes were made.")
            }
            Event::Confirm(_) | Event::NoMatch => match self.stage {
                Stage::AwaitingCommand => {
                    self.reply(format!("Sorry, I did not get that. You can say {EXAMPLE}."))
                }
                Stage::AwaitingConfirmation => self.reply("Please say yes or no."),
                _ => self.funnel(),
            },
        };
        Ok(step)
    }

    /// Reports the outcome of a confirmed request and closes the session.
    pub fn complete(&mut self, outcome: Result<Provisioned, IntentError>, now_ms: u64) -> WebhookResponse {
        let req = self.request();
        self.last_activity_ms = now_ms;
        self.stage = Stage::Closed;
        let speech = match (outcome, req) {
            (Ok(p), Some(req)) => format!(
                "Done. The {} path from {} to {} is active through {}.",
                req.intent_type.phrase(),
                req.from_city,
                req.to_city,
                p.path.join(", ")
            ),
            (Ok(p), None) => format!("Done. The path is active through {}.", p.path.join(", ")),
            (Err(e), _) => format!("Sorry, the intent failed with {}: {e}.", e.code()),
        };
        match self.reply(speech) {
            Step::Reply(r) => r,
            Step::Execute(_) => unreachable!(),
        }
    }
}

/// The response given for turns on a closed session.
pub fn session_closed_response() -> WebhookResponse {
    WebhookResponse {
        speech_text: "This session has ended. Say launch to start again.".into(),
        should_end_session: true,
        session_attributes: BTreeMap::from([("error".to_string(), "SESSION_CLOSED".to_string())]),
    }
}

/// Turns a webhook request into an event for `session`: pre-filled slots are
/// merged first, then any transcript is matched in the resulting stage.
pub fn interpret(model: &InteractionModel, session: &mut DialogueSession, request: &WebhookRequest) -> Event {
    match request.kind {
        RequestKind::Launch => Event::Launch,
        RequestKind::Intent => {
            if let Some(c) = request.slots.get("confirmation") {
                return match parse_confirmation(c) {
                    Some(yes) => Event::Confirm(yes),
                    None => Event::NoMatch,
                };
            }
            let slots = Slots {
                intent_type: request.slots.get("intent_type").and_then(|t| IntentType::parse(t)),
                from_city: request
                    .slots
                    .get("from_city")
                    .map(|c| normalize(c).join(" "))
                    .filter(|c| !c.is_empty()),
                to_city: request
                    .slots
                    .get("to_city")
                    .map(|c| normalize(c).join(" "))
                    .filter(|c| !c.is_empty()),
                ..Default::default()
            };
            let tokens = normalize(&request.transcript);
            if tokens.is_empty() {
                return Event::Fill(slots);
            }
            session.merge(&slots);
            Event::from_match(model.match_utterance(&tokens, session.stage))
        }
        RequestKind::Utterance => {
            let tokens = normalize(&request.transcript);
            Event::from_match(model.match_utterance(&tokens, session.stage))
        }
    }
}
