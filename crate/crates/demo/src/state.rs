//! Everything the page does, without any browser types.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use ibn_core::dataplane::{Dataplane, PacketProbe, TraceOutcome};
use ibn_core::dialogue::{
    interpret, session_closed_response, DialogueSession, InteractionModel, Provisioned, RequestKind, Step,
    WebhookRequest,
};
use ibn_core::intent::{
    configured_link_state, enumerate_paths, plan, resolve_cities, score_path, synthesize_flows, IntentError,
};
use ibn_core::{Cookie, Dpid, FlowMod, IntentRequest, IntentType, LinkKey, Path, Topology};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub code: String,
    pub message: String,
}

impl From<IntentError> for Failure {
    fn from(e: IntentError) -> Self {
        Failure {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub switches: Vec<String>,
    pub latency_ms: f64,
    pub bottleneck_mbps: Option<f64>,
    pub hop_count: usize,
    pub meets_demand: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exploration {
    pub candidates: Vec<Candidate>,
    /// Index into `candidates` of the selected path.
    pub chosen: Option<usize>,
    pub error: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Installed {
    pub intent_type: IntentType,
    pub from_city: String,
    pub to_city: String,
    pub switches: Vec<String>,
    pub cookie: Cookie,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceResult {
    pub switches: Vec<String>,
    pub outcome: TraceOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub speech: String,
    pub ended: bool,
    pub installed: Option<Installed>,
}

struct Active {
    request: IntentRequest,
    path: Path,
    cookie: Cookie,
}

pub struct DemoState {
    topology: Topology,
    dataplane: Dataplane,
    active: BTreeMap<(String, String), Active>,
    next_cookie: u64,
    model: InteractionModel,
    session: DialogueSession,
    sessions_started: u64,
}

fn pair(a: &str, b: &str) -> (String, String) {
    let (a, b) = (ibn_core::text::normalize_city(a), ibn_core::text::normalize_city(b));
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl DemoState {
    pub fn new(topology: Topology) -> Self {
        DemoState {
            dataplane: Dataplane::new(&topology),
            topology,
            active: BTreeMap::new(),
            next_cookie: 1,
            model: InteractionModel::default(),
            session: DialogueSession::new("demo-1", 0),
            sessions_started: 1,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    fn names(&self, dpids: &[Dpid]) -> Vec<String> {
        dpids
            .iter()
            .map(|d| self.topology.name_of(*d).unwrap_or("?").to_string())
            .collect()
    }

    fn reserved(&self) -> BTreeMap<LinkKey, f64> {
        let mut out = BTreeMap::new();
        for a in self.active.values() {
            for k in a.path.links() {
                *out.entry(k).or_insert(0.0) += a.request.demand_mbps;
            }
        }
        out
    }

    /// Every simple path between the cities with its score, and the one the
    /// controller would pick.
    pub fn explore(&self, intent: &str, from: &str, to: &str, demand_mbps: f64) -> Exploration {
        let failed = |e: IntentError| Exploration {
            candidates: vec![],
            chosen: None,
            error: Some(e.into()),
        };
        let Some(t) = IntentType::parse(intent) else {
            return Exploration {
                candidates: vec![],
                chosen: None,
                error: Some(Failure {
                    code: "UNKNOWN_INTENT".into(),
                    message: format!("unknown intent type {intent:?}"),
                }),
            };
        };
        let request = IntentRequest::new(t, from, to).with_demand(demand_mbps).normalized();
        let state = configured_link_state(&self.topology, &self.reserved());
        let (ingress, egress) = match resolve_cities(&request, &self.topology) {
            Ok(x) => x,
            Err(e) => return failed(e),
        };
        let paths = match enumerate_paths(&self.topology, ingress, egress) {
            Ok(p) => p,
            Err(e) => return failed(e),
        };
        let mut candidates = Vec::with_capacity(paths.len());
        for p in &paths {
            let s = match score_path(p, &state) {
                Ok(s) => s,
                Err(e) => return failed(e),
            };
            candidates.push(Candidate {
                switches: self.names(&p.dpids()),
                latency_ms: s.latency_ms,
                bottleneck_mbps: s.bottleneck_mbps.is_finite().then_some(s.bottleneck_mbps),
                hop_count: s.hop_count,
                meets_demand: s.bottleneck_mbps >= request.demand_mbps,
            });
        }
        match plan(&self.topology, &state, &request) {
            Ok(sel) => Exploration {
                chosen: paths.iter().position(|p| *p == sel.path),
                candidates,
                error: None,
            },
            Err(e) => Exploration {
                candidates,
                chosen: None,
                error: Some(e.into()),
            },
        }
    }

    /// Installs the intent into the in-page switches, replacing any intent on
    /// the same city pair.
    pub fn provision(&mut self, request: IntentRequest) -> Result<Installed, Failure> {
        let request = request.normalized();
        let key = pair(&request.from_city, &request.to_city);
        // The intent being replaced gives its bandwidth back first.
        let previous = self.active.remove(&key);
        let mut state = configured_link_state(&self.topology, &self.reserved());
        if let Some(old) = &previous {
            for k in old.path.links() {
                if let Some(m) = state.get_mut(&k) {
                    m.reserved_mbps += old.request.demand_mbps;
                }
            }
        }
        let sel = match plan(&self.topology, &state, &request) {
            Ok(s) => s,
            Err(e) => {
                if let Some(old) = previous {
                    self.active.insert(key, old);
                }
                return Err(e.into());
            }
        };
        let cookie = Cookie(self.next_cookie);
        self.next_cookie += 1;
        for (dpid, entry) in synthesize_flows(&sel.path, cookie) {
            let sw = self.dataplane.switch_mut(dpid).expect("path switch exists");
            sw.apply_flow_mod(&FlowMod::Add {
                entry,
                reserve_mbps: request.demand_mbps,
            })
            .expect("synthesized flows are valid");
        }
        if let Some(old) = previous {
            for dpid in old.path.dpids() {
                if let Some(sw) = self.dataplane.switch_mut(dpid) {
                    let _ = sw.apply_flow_mod(&FlowMod::Delete { cookie: old.cookie });
                }
            }
        }
        let installed = Installed {
            intent_type: request.intent_type,
            from_city: request.from_city.clone(),
            to_city: request.to_city.clone(),
            switches: self.names(&sel.path.dpids()),
            cookie,
        };
        self.active.insert(
            key,
            Active {
                request,
                path: sel.path,
                cookie,
            },
        );
        Ok(installed)
    }

    /// Installed intents, oldest cookie first.
    pub fn installed(&self) -> Vec<Installed> {
        let mut v: Vec<Installed> = self
            .active
            .values()
            .map(|a| Installed {
                intent_type: a.request.intent_type,
                from_city: a.request.from_city.clone(),
                to_city: a.request.to_city.clone(),
                switches: self.names(&a.path.dpids()),
                cookie: a.cookie,
            })
            .collect();
        v.sort_by_key(|i| i.cookie);
        v
    }

    /// Sends a packet from the endpoint owning `src` towards `dst`.
    pub fn trace(&mut self, src: Ipv4Addr, dst: Ipv4Addr) -> Result<TraceResult, Failure> {
        let ingress = self
            .topology
            .endpoints()
            .iter()
            .find(|e| e.prefix.contains(&src))
            .ok_or_else(|| Failure {
                code: "NO_ENDPOINT".into(),
                message: format!("{src} is not inside any endpoint prefix"),
            })?;
        let probe = PacketProbe {
            src_ip: src,
            dst_ip: dst,
            ingress: self.topology.endpoint_port(ingress),
        };
        let t = self.dataplane.trace(&self.topology, &probe).map_err(|e| Failure {
            code: "BAD_PROBE".into(),
            message: e.to_string(),
        })?;
        Ok(TraceResult {
            switches: self.names(&t.dpids()),
            outcome: t.outcome,
        })
    }

    /// One spoken turn. An empty transcript (or a turn after the previous
    /// conversation ended) starts a new conversation.
    pub fn say(&mut self, transcript: &str, now_ms: u64) -> Turn {
        let closed = session_closed_response().speech_text;
        let fresh = transcript.trim().is_empty();
        if fresh {
            self.sessions_started += 1;
            self.session = DialogueSession::new(format!("demo-{}", self.sessions_started), now_ms);
        }
        let request = WebhookRequest {
            session_id: self.session.session_id.clone(),
            kind: if fresh { RequestKind::Launch } else { RequestKind::Utterance },
            slots: BTreeMap::new(),
            transcript: transcript.to_string(),
        };
        let event = interpret(&self.model, &mut self.session, &request);
        match self.session.advance(event, now_ms) {
            Err(_) => Turn {
                speech: closed,
                ended: true,
                installed: None,
            },
            Ok(Step::Reply(r)) => Turn {
                speech: r.speech_text,
                ended: r.should_end_session,
                installed: None,
            },
            Ok(Step::Execute(req)) => {
                let result = self.provision(req);
                let outcome = match &result {
                    Ok(i) => Ok(Provisioned {
                        path: i.switches.clone(),
                    }),
                    Err(f) => Err(IntentError::Store(f.message.clone())),
                };
                let r = self.session.complete(outcome, now_ms);
                Turn {
                    speech: r.speech_text,
                    ended: r.should_end_session,
                    installed: result.ok(),
                }
            }
        }
    }
}
