//! Northbound HTTP routes.
//!
//! Request bodies are parsed by hand so that every malformed body is a 400
//! with the parser's message.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ibn_core::dataplane::{trace_packet, PacketProbe, TraceOutcome};
use ibn_core::dialogue::WebhookRequest;
use ibn_core::flow::FlowTable;
use ibn_core::intent::IntentError;
use ibn_core::topo::prefix_contains;
use ibn_core::{Dpid, IntentRequest, Topology};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::auth::{new_token, secrets_equal};
use crate::config::AuthConfig;
use crate::engine::{Engine, WithdrawError};
use crate::now_ms;
use crate::store::{IntentFilter, IntentRecord, IntentState};
use crate::voice::Voice;

pub const WEBHOOK_SECRET_HEADER: &str = "x-webhook-secret";

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub voice: Arc<Voice>,
    pub auth: Arc<AuthConfig>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Option<(&'static str, Value)>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            extra: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    fn unauthorized() -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, "UNAUTHORIZED", "missing, invalid or expired credentials")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<IntentError> for ApiError {
    fn from(e: IntentError) -> Self {
        let status = match &e {
            IntentError::UnknownCity { .. } => StatusCode::NOT_FOUND,
            IntentError::SameCity | IntentError::InvalidDemand(_) => StatusCode::BAD_REQUEST,
            IntentError::NoPath | IntentError::NoPathMeetsDemand { .. } | IntentError::PathExplosion => {
                StatusCode::CONFLICT
            }
            IntentError::SwitchUnreachable(_)
            | IntentError::PushTimeout(_)
            | IntentError::PushRejected { .. }
            | IntentError::VerifyFailed(_)
            | IntentError::IncompleteState(_)
            | IntentError::InconsistentState(_) => StatusCode::BAD_GATEWAY,
            IntentError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut out = ApiError::new(status, e.code(), e.to_string());
        if let IntentError::UnknownCity { known, .. } = &e {
            out.extra = Some(("known_cities", json!(known)));
        }
        out
    }
}

impl From<WithdrawError> for ApiError {
    fn from(e: WithdrawError) -> Self {
        let status = match e {
            WithdrawError::NotFound(_) => StatusCode::NOT_FOUND,
            WithdrawError::AlreadyWithdrawn(_) => StatusCode::CONFLICT,
            WithdrawError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/api/topology", get(topology))
        .route("/api/intents", get(list_intents).post(create_intent))
        .route("/api/intents/{id}", get(get_intent).delete(withdraw_intent))
        .route("/api/intents/{id}/path", get(intent_path))
        .route("/api/switches", get(switches))
        .route("/api/trace", post(trace))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/api/login", post(login))
        .route("/ask/alexa", post(webhook))
        .merge(protected)
        .with_state(state)
}

/// Every route that requires a bearer token, as (method, path template).
pub const PROTECTED_ROUTES: &[(&str, &str)] = &[
    ("GET", "/api/topology"),
    ("GET", "/api/intents"),
    ("POST", "/api/intents"),
    ("GET", "/api/intents/{id}"),
    ("DELETE", "/api/intents/{id}"),
    ("GET", "/api/intents/{id}/path"),
    ("GET", "/api/switches"),
    ("POST", "/api/trace"),
];

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    let token = request
        .headers()
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match token.and_then(|t| state.engine.store().token_user(t, now_ms())) {
        Some(_) => next.run(request).await,
        None => ApiError::unauthorized().into_response(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginBody {
    username: String,
    password: String,
    #[serde(default)]
    second_factor: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginReply {
    pub token: String,
    /// Unix time in milliseconds.
    pub expires_at: u64,
    pub user: String,
}

async fn login(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<LoginReply>> {
    let body: LoginBody = parse_body(&body)?;
    if let Some(want) = &state.auth.second_factor {
        let given = body.second_factor.as_deref().unwrap_or_default();
        if !secrets_equal(given, want) {
            return Err(ApiError::unauthorized());
        }
    }
    let store = state.engine.store().clone();
    let (user, password) = (body.username.clone(), body.password);
    let ok = tokio::task::spawn_blocking(move || store.verify_user(&user, &password))
        .await
        .unwrap_or(false);
    if !ok {
        return Err(ApiError::unauthorized());
    }
    let token = new_token();
    let now = now_ms();
    let expires_at = now + state.auth.token_ttl_s * 1000;
    state
        .engine
        .store()
        .insert_token(&token, &body.username, expires_at, now)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "STORE_ERROR", e.to_string()))?;
    Ok(Json(LoginReply {
        token,
        expires_at,
        user: body.username,
    }))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TopologyNode {
    pub id: String,
    pub label: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TopologyEdge {
    pub source: String,
    pub target: String,
    pub latency_ms: f64,
    /// `null` for endpoint attachments (unbounded).
    pub capacity_mbps: Option<f64>,
    pub available_mbps: Option<f64>,
    pub src_port: Option<u16>,
    pub dst_port: u16,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TopologyView {
    pub nodes: Vec<TopologyNode>,
    pub edges: Vec<TopologyEdge>,
}

/// Node id of a city endpoint.
pub fn endpoint_node_id(city: &str) -> String {
    format!("ep:{city}")
}

pub fn topology_view(topo: &Topology, reserved: &BTreeMap<ibn_core::LinkKey, f64>) -> TopologyView {
    let mut nodes: Vec<TopologyNode> = topo
        .switches()
        .iter()
        .map(|s| TopologyNode {
            id: s.name.clone(),
            label: s.name.clone(),
            kind: "switch".into(),
            dpid: Some(s.dpid.to_string()),
            prefix: None,
        })
        .collect();
    nodes.extend(topo.endpoints().iter().map(|e| TopologyNode {
        id: endpoint_node_id(&e.city),
        label: e.city.clone(),
        kind: "endpoint".into(),
        dpid: None,
        prefix: Some(e.prefix.to_string()),
    }));
    let mut edges: Vec<TopologyEdge> = topo
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let booked = reserved.get(&topo.link_key(i)).copied().unwrap_or(0.0);
            TopologyEdge {
                source: l.a.switch.clone(),
                target: l.b.switch.clone(),
                latency_ms: l.latency_ms,
                capacity_mbps: Some(l.capacity_mbps),
                available_mbps: Some((l.capacity_mbps - booked).max(0.0)),
                src_port: Some(l.a.port),
                dst_port: l.b.port,
            }
        })
        .collect();
    edges.extend(topo.endpoints().iter().map(|e| TopologyEdge {
        source: endpoint_node_id(&e.city),
        target: e.switch.clone(),
        latency_ms: 0.0,
        capacity_mbps: None,
        available_mbps: None,
        src_port: None,
        dst_port: e.port,
    }));
    TopologyView { nodes, edges }
}

async fn topology(State(state): State<AppState>) -> Json<TopologyView> {
    Json(topology_view(state.engine.topology(), &state.engine.reservations()))
}

/// An intent record as served, with switch names along the path.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct IntentView {
    #[serde(flatten)]
    pub record: IntentRecord,
    pub switches: Vec<String>,
}

fn view(topo: &Topology, record: IntentRecord) -> IntentView {
    IntentView {
        switches: names(topo, &record.path.dpids()),
        record,
    }
}

fn names(topo: &Topology, dpids: &[Dpid]) -> Vec<String> {
    dpids
        .iter()
        .map(|d| topo.name_of(*d).map_or_else(|| d.to_string(), str::to_string))
        .collect()
}

#[derive(Deserialize)]
struct ListQuery {
    state: Option<String>,
    from: Option<String>,
    to: Option<String>,
}

async fn list_intents(State(state): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult<Json<Vec<IntentView>>> {
    let filter_state = match q.state.as_deref().map(str::to_ascii_uppercase).as_deref() {
        None => None,
        Some("ACTIVE") => Some(IntentState::Active),
        Some("WITHDRAWN") => Some(IntentState::Withdrawn),
        Some(other) => return Err(ApiError::bad_request(format!("unknown state {other:?}"))),
    };
    let pair = match (q.from, q.to) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(ApiError::bad_request("from and to must be given together")),
    };
    let filter = IntentFilter {
        state: filter_state,
        pair,
    };
    let topo = state.engine.topology();
    Ok(Json(
        state
            .engine
            .store()
            .query_intents(&filter)
            .into_iter()
            .map(|r| view(topo, r))
            .collect(),
    ))
}

async fn create_intent(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<IntentView>)> {
    let request: IntentRequest = parse_body(&body)?;
    let done = state.engine.execute(request).await?;
    Ok((StatusCode::CREATED, Json(view(state.engine.topology(), done.record))))
}

fn parse_id(raw: &str) -> ApiResult<u64> {
    raw.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("intent {raw:?} not found")))
}

fn find(state: &AppState, raw: &str) -> ApiResult<IntentRecord> {
    let id = parse_id(raw)?;
    state
        .engine
        .store()
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("intent {id} not found")))
}

async fn get_intent(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<IntentView>> {
    let r = find(&state, &id)?;
    Ok(Json(view(state.engine.topology(), r)))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PathEdge {
    pub source: String,
    pub target: String,
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PathView {
    pub id: u64,
    pub state: IntentState,
    pub switches: Vec<String>,
    /// Inter-switch links in path order.
    pub edges: Vec<PathEdge>,
}

async fn intent_path(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<PathView>> {
    let r = find(&state, &id)?;
    let topo = state.engine.topology();
    let switches = names(topo, &r.path.dpids());
    let edges = r
        .path
        .hops
        .windows(2)
        .zip(switches.windows(2))
        .map(|(h, n)| PathEdge {
            source: n[0].clone(),
            target: n[1].clone(),
            src_port: h[0].out_port,
            dst_port: h[1].in_port,
        })
        .collect();
    Ok(Json(PathView {
        id: r.id,
        state: r.state,
        switches,
        edges,
    }))
}

async fn withdraw_intent(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let id = parse_id(&id)?;
    let w = state.engine.withdraw(id).await?;
    let failed: Vec<Value> = w
        .failed
        .iter()
        .map(|(d, e)| json!({"dpid": d.to_string(), "error": e}))
        .collect();
    Ok(Json(json!({
        "intent": view(state.engine.topology(), w.record),
        "failed_switches": failed,
    })))
}

async fn switches(State(state): State<AppState>) -> Json<Value> {
    Json(json!(state.engine.southbound().sessions()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceBody {
    src_ip: Ipv4Addr,
    dst_ip: Ipv4Addr,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceHop {
    pub switch: String,
    pub dpid: Dpid,
    pub in_port: u16,
    pub out_port: u16,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceView {
    pub hops: Vec<TraceHop>,
    #[serde(flatten)]
    pub outcome: TraceOutcome,
    /// Switches whose tables could not be read (treated as empty).
    pub unreachable: Vec<String>,
}

/// Traces a probe over the flow tables the switches report right now. The
/// probe enters at the endpoint whose prefix holds `src_ip`.
async fn trace(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<TraceView>> {
    let body: TraceBody = parse_body(&body)?;
    let topo = state.engine.topology();
    let ingress = topo
        .endpoints()
        .iter()
        .find(|e| prefix_contains(&e.prefix, body.src_ip))
        .ok_or_else(|| ApiError::bad_request(format!("{} is not inside any endpoint prefix", body.src_ip)))?;
    let sb = state.engine.southbound();
    let mut tables = BTreeMap::new();
    let mut unreachable = Vec::new();
    for s in topo.switches() {
        match sb.flow_stats(s.dpid).await {
            Ok(entries) => {
                tables.insert(s.dpid, entries.into_iter().collect::<FlowTable>());
            }
            Err(_) => unreachable.push(s.name.clone()),
        }
    }
    let probe = PacketProbe {
        src_ip: body.src_ip,
        dst_ip: body.dst_ip,
        ingress: topo.endpoint_port(ingress),
    };
    let t = trace_packet(topo, &tables, &probe).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let hops = t
        .hops
        .iter()
        .map(|h| TraceHop {
            switch: topo.name_of(h.dpid).unwrap_or("?").to_string(),
            dpid: h.dpid,
            in_port: h.in_port,
            out_port: h.out_port,
        })
        .collect();
    Ok(Json(TraceView {
        hops,
        outcome: t.outcome,
        unreachable,
    }))
}

async fn webhook(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let secret = headers
        .get(WEBHOOK_SECRET_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default();
    let want = &state.auth.webhook_secret;
    if want.is_empty() || !secrets_equal(secret, want) {
        return ApiError::unauthorized().into_response();
    }
    let request: WebhookRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    Json(state.voice.handle_webhook(&request).await).into_response()
}
