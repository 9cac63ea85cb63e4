//! Controller side of the switch channel: accepts switch connections, keeps
//! one READY session per dpid, and offers request/reply primitives (flow
//! push, verify, stats) to the intent engine.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ibn_core::dataplane::PortStats;
use ibn_core::intent::{IntentError, LinkMetrics, LinkState};
use ibn_core::proto::{self, Body, ErrorCode, Message, ProtoError, StatsKind, StatsReply};
use ibn_core::{Cookie, Dpid, FlowEntry, FlowMod, LinkKey, PortId, Topology};
use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::OwnedReadHalf;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::{interval_at, timeout, Instant, MissedTickBehavior};
use tracing::{debug, info, warn};

use crate::config::SouthboundConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    Handshaking,
    Ready,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SouthboundError {
    #[error("switch {0} has no ready session")]
    Unreachable(Dpid),
    #[error("switch {0} did not answer in time")]
    Timeout(Dpid),
    #[error("switch {dpid} rejected the request ({code:?}): {text}")]
    Rejected {
        dpid: Dpid,
        code: ErrorCode,
        text: String,
    },
    #[error("switch {dpid} answered with an unexpected {got} message")]
    Unexpected { dpid: Dpid, got: &'static str },
}

impl From<SouthboundError> for IntentError {
    fn from(e: SouthboundError) -> Self {
        match e {
            SouthboundError::Unreachable(d) => IntentError::SwitchUnreachable(d),
            SouthboundError::Timeout(d) => IntentError::PushTimeout(d),
            SouthboundError::Rejected { dpid, text, .. } => IntentError::PushRejected { dpid, text },
            e @ SouthboundError::Unexpected { dpid, .. } => IntentError::PushRejected {
                dpid,
                text: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SouthboundEvent {
    Ready(Dpid),
    Closed(Dpid),
}

/// Snapshot of one registered session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInfo {
    pub dpid: Dpid,
    pub session: u64,
    pub state: SessionState,
    pub ports: Vec<u16>,
    pub peer: SocketAddr,
}

struct Session {
    dpid: Dpid,
    id: u64,
    peer: SocketAddr,
    ports: Vec<u16>,
    outbox: mpsc::UnboundedSender<Message>,
    pending: Mutex<HashMap<u32, oneshot::Sender<Body>>>,
    next_xid: AtomicU32,
    state: Mutex<SessionState>,
    shutdown: watch::Sender<bool>,
}

impl Session {
    fn state(&self) -> SessionState {
        *self.state.lock().unwrap()
    }

    fn xid(&self) -> u32 {
        self.next_xid.fetch_add(1, Ordering::Relaxed)
    }

    fn close(&self) {
        *self.state.lock().unwrap() = SessionState::Dead;
        let _ = self.shutdown.send(true);
    }

    fn info(&self) -> SessionInfo {
        SessionInfo {
            dpid: self.dpid,
            session: self.id,
            state: self.state(),
            ports: self.ports.clone(),
            peer: self.peer,
        }
    }
}

/// Merged view of one link's stats from its two ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkReport {
    /// `None` when neither end answered.
    pub metrics: Option<LinkMetrics>,
    /// Set when at least one end did not answer.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LinkStateReport {
    pub links: BTreeMap<LinkKey, LinkReport>,
}

impl LinkStateReport {
    /// Links with at least one reporting end.
    pub fn link_state(&self) -> LinkState {
        self.links
            .iter()
            .filter_map(|(k, r)| r.metrics.map(|m| (*k, m)))
            .collect()
    }

    pub fn partial(&self) -> Vec<LinkKey> {
        self.links
            .iter()
            .filter(|(_, r)| r.partial)
            .map(|(k, _)| *k)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkStateError {
    #[error("ends of link {0:?} disagree on configured attributes")]
    Inconsistent(LinkKey),
}

impl From<LinkStateError> for IntentError {
    fn from(e: LinkStateError) -> Self {
        match e {
            LinkStateError::Inconsistent(k) => IntentError::InconsistentState(k),
        }
    }
}

struct Inner {
    config: SouthboundConfig,
    sessions: Mutex<HashMap<Dpid, Arc<Session>>>,
    next_session: AtomicU64,
    events: broadcast::Sender<SouthboundEvent>,
}

/// Handle to the session registry. Cheap to clone.
#[derive(Clone)]
pub struct Southbound {
    inner: Arc<Inner>,
}

impl Southbound {
    pub fn new(config: SouthboundConfig) -> Self {
        Southbound {
            inner: Arc::new(Inner {
                config,
                sessions: Mutex::new(HashMap::new()),
                next_session: AtomicU64::new(1),
                events: broadcast::channel(256).0,
            }),
        }
    }

    pub fn config(&self) -> &SouthboundConfig {
        &self.inner.config
    }

    /// Binds `addr` and accepts switches until the returned task is aborted.
    pub async fn listen(&self, addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
        let listener = TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        info!(%local, "southbound listening");
        let this = self.clone();
        let task = tokio::spawn(async move {
            loop {
                match listener.accept().await {
                    Ok((stream, peer)) => {
                        let this = this.clone();
                        tokio::spawn(async move { this.serve_connection(stream, peer).await });
                    }
                    Err(e) => warn!(error = %e, "southbound accept failed"),
                }
            }
        });
        Ok((local, task))
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SouthboundEvent> {
        self.inner.events.subscribe()
    }

    pub fn sessions(&self) -> Vec<SessionInfo> {
        let mut v: Vec<_> = self
            .inner
            .sessions
            .lock()
            .unwrap()
            .values()
            .map(|s| s.info())
            .collect();
        v.sort_by_key(|s| s.dpid);
        v
    }

    pub fn is_ready(&self, dpid: Dpid) -> bool {
        self.session(dpid).is_some()
    }

    /// Polls until every dpid in `dpids` has a READY session.
    pub async fn wait_ready(&self, dpids: &[Dpid], within: Duration) -> bool {
        let deadline = Instant::now() + within;
        loop {
            if dpids.iter().all(|d| self.is_ready(*d)) {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }

    /// Closes the session for `dpid`, if any.
    pub fn disconnect(&self, dpid: Dpid) {
        if let Some(s) = self.inner.sessions.lock().unwrap().get(&dpid) {
            s.close();
        }
    }

    fn session(&self, dpid: Dpid) -> Option<Arc<Session>> {
        let sessions = self.inner.sessions.lock().unwrap();
        sessions
            .get(&dpid)
            .filter(|s| s.state() == SessionState::Ready)
            .cloned()
    }

    async fn request(&self, dpid: Dpid, body: Body) -> Result<Body, SouthboundError> {
        let session = self.session(dpid).ok_or(SouthboundError::Unreachable(dpid))?;
        let xid = session.xid();
        let (tx, rx) = oneshot::channel();
        session.pending.lock().unwrap().insert(xid, tx);
        if session.outbox.send(Message::new(xid, body)).is_err() {
            session.pending.lock().unwrap().remove(&xid);
            return Err(SouthboundError::Unreachable(dpid));
        }
        match timeout(self.inner.config.request_timeout(), rx).await {
            Ok(Ok(Body::Error { code, text })) => Err(SouthboundError::Rejected { dpid, code, text }),
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(_)) => Err(SouthboundError::Unreachable(dpid)),
            Err(_) => {
                session.pending.lock().unwrap().remove(&xid);
                Err(SouthboundError::Timeout(dpid))
            }
        }
    }

    /// Sends a FLOW_MOD and waits for its ack.
    pub async fn push_flow(&self, dpid: Dpid, command: FlowMod) -> Result<(), SouthboundError> {
        match self.request(dpid, Body::FlowMod(command)).await? {
            Body::FlowModAck => Ok(()),
            other => Err(SouthboundError::Unexpected {
                dpid,
                got: other.type_name(),
            }),
        }
    }

    pub async fn flow_stats(&self, dpid: Dpid) -> Result<Vec<FlowEntry>, SouthboundError> {
        match self.request(dpid, Body::StatsRequest { kind: StatsKind::Flow }).await? {
            Body::StatsReply(StatsReply::Flow(v)) => Ok(v),
            other => Err(SouthboundError::Unexpected {
                dpid,
                got: other.type_name(),
            }),
        }
    }

    pub async fn port_stats(&self, dpid: Dpid) -> Result<Vec<PortStats>, SouthboundError> {
        match self.request(dpid, Body::StatsRequest { kind: StatsKind::Port }).await? {
            Body::StatsReply(StatsReply::Port(v)) => Ok(v),
            other => Err(SouthboundError::Unexpected {
                dpid,
                got: other.type_name(),
            }),
        }
    }

    /// True iff every entry of `expected` is installed on `dpid` and the
    /// switch holds no other entry tagged `cookie`.
    pub async fn verify_flows(&self, dpid: Dpid, cookie: Cookie, expected: &[FlowEntry]) -> Result<bool, SouthboundError> {
        let installed = self.flow_stats(dpid).await?;
        let tagged: Vec<&FlowEntry> = installed.iter().filter(|e| e.cookie == cookie).collect();
        Ok(tagged.len() == expected.len() && expected.iter().all(|e| tagged.contains(&e)))
    }

    /// Asks every switch of `topology` for port stats in parallel and merges
    /// both ends of each link.
    pub async fn collect_link_state(&self, topology: &Topology) -> Result<LinkStateReport, LinkStateError> {
        let mut tasks = tokio::task::JoinSet::new();
        for sw in topology.switches() {
            let this = self.clone();
            let dpid = sw.dpid;
            tasks.spawn(async move { (dpid, this.port_stats(dpid).await) });
        }
        let mut stats: HashMap<Dpid, HashMap<u16, PortStats>> = HashMap::new();
        while let Some(joined) = tasks.join_next().await {
            if let Ok((dpid, Ok(ports))) = joined {
                stats.insert(dpid, ports.into_iter().map(|p| (p.port, p)).collect());
            }
        }
        let end = |p: PortId| stats.get(&p.dpid).and_then(|m| m.get(&p.port));
        let mut report = LinkStateReport::default();
        for index in 0..topology.links().len() {
            let key = topology.link_key(index);
            let (x, y) = (end(key.a), end(key.b));
            for s in [x, y].into_iter().flatten() {
                if s.capacity_mbps.is_none() {
                    return Err(LinkStateError::Inconsistent(key));
                }
            }
            let metrics = |s: &PortStats, reserved: f64| LinkMetrics {
                latency_ms: s.latency_ms,
                capacity_mbps: s.capacity_mbps.unwrap_or_default(),
                reserved_mbps: reserved,
            };
            let entry = match (x, y) {
                (Some(x), Some(y)) => {
                    if x.latency_ms != y.latency_ms || x.capacity_mbps != y.capacity_mbps {
                        return Err(LinkStateError::Inconsistent(key));
                    }
                    LinkReport {
                        metrics: Some(metrics(x, x.reserved_mbps.max(y.reserved_mbps))),
                        partial: false,
                    }
                }
                (Some(s), None) | (None, Some(s)) => LinkReport {
                    metrics: Some(metrics(s, s.reserved_mbps)),
                    partial: true,
                },
                (None, None) => LinkReport {
                    metrics: None,
                    partial: true,
                },
            };
            report.links.insert(key, entry);
        }
        Ok(report)
    }

    async fn serve_connection(&self, stream: TcpStream, peer: SocketAddr) {
        let _ = stream.set_nodelay(true);
        let (rd, mut wr) = stream.into_split();
        let (frames_tx, mut frames) = mpsc::unbounded_channel();
        let reader = tokio::spawn(read_frames(rd, frames_tx));

        let (dpid, ports) = match timeout(self.inner.config.hello_timeout(), frames.recv()).await {
            Ok(Some(Ok(Message {
                body: Body::Hello { dpid, ports },
                ..
            }))) => (dpid, ports),
            Ok(Some(Ok(m))) => {
                debug!(%peer, got = m.body.type_name(), "expected hello");
                reader.abort();
                return;
            }
            _ => {
                debug!(%peer, "no hello; closing");
                reader.abort();
                return;
            }
        };

        let (outbox, mut outgoing) = mpsc::unbounded_channel::<Message>();
        let (shutdown, mut shutdown_rx) = watch::channel(false);
        let session = Arc::new(Session {
            dpid,
            id: self.inner.next_session.fetch_add(1, Ordering::Relaxed),
            peer,
            ports,
            outbox,
            pending: Mutex::new(HashMap::new()),
            next_xid: AtomicU32::new(1),
            state: Mutex::new(SessionState::Handshaking),
            shutdown,
        });
        let writer = tokio::spawn(async move {
            while let Some(m) = outgoing.recv().await {
                let Ok(bytes) = proto::encode_frame(&m) else { continue };
                if wr.write_all(&bytes).await.is_err() {
                    break;
                }
            }
        });

        *session.state.lock().unwrap() = SessionState::Ready;
        let replaced = self.inner.sessions.lock().unwrap().insert(dpid, session.clone());
        if let Some(old) = replaced {
            info!(%dpid, old = old.id, new = session.id, "duplicate hello; replacing session");
            old.close();
        }
        info!(%dpid, %peer, "switch ready");
        let _ = self.inner.events.send(SouthboundEvent::Ready(dpid));

        let period = self.inner.config.echo_interval();
        let mut ticker = interval_at(Instant::now() + period, period);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let mut echo_xid = session.xid();
        let _ = session.outbox.send(Message::new(echo_xid, Body::EchoRequest));
        let mut echo_answered = false;
        let mut misses = 0u32;

        loop {
            tokio::select! {
                _ = shutdown_rx.changed() => break,
                _ = ticker.tick() => {
                    if echo_answered {
                        misses = 0;
                    } else {
                        misses += 1;
                        if misses >= self.inner.config.echo_misses {
                            warn!(%dpid, misses, "echo timeout; session dead");
                            break;
                        }
                    }
                    echo_xid = session.xid();
                    echo_answered = false;
                    let _ = session.outbox.send(Message::new(echo_xid, Body::EchoRequest));
                }
                frame = frames.recv() => match frame {
                    None => break,
                    Some(Err(e)) => {
                        warn!(%dpid, error = %e, "protocol error; closing session");
                        let _ = session.outbox.send(Message::new(0, Body::Error {
                            code: ErrorCode::BadRequest,
                            text: e.to_string(),
                        }));
                        break;
                    }
                    Some(Ok(m)) => match m.body {
                        Body::EchoRequest => {
                            let _ = session.outbox.send(Message::new(m.xid, Body::EchoReply));
                        }
                        Body::EchoReply if m.xid == echo_xid => echo_answered = true,
                        Body::EchoReply | Body::FlowModAck | Body::StatsReply(_) | Body::Error { .. } => {
                            if let Some(tx) = session.pending.lock().unwrap().remove(&m.xid) {
                                let _ = tx.send(m.body);
                            }
                        }
                        Body::Hello { .. } => {}
                        other => {
                            let _ = session.outbox.send(Message::new(m.xid, Body::Error {
                                code: ErrorCode::BadRequest,
                                text: format!("{} is not accepted by the controller", other.type_name()),
                            }));
                        }
                    },
                },
            }
        }

        session.close();
        session.pending.lock().unwrap().clear();
        {
            let mut sessions = self.inner.sessions.lock().unwrap();
            if sessions.get(&dpid).is_some_and(|s| s.id == session.id) {
                sessions.remove(&dpid);
            }
        }
        reader.abort();
        // Let queued frames (such as a final error) drain before dropping the socket.
        drop(session);
        let _ = timeout(Duration::from_millis(100), writer).await;
        info!(%dpid, "switch session closed");
        let _ = self.inner.events.send(SouthboundEvent::Closed(dpid));
    }
}

/// Reads frames until EOF or a framing error; the error is forwarded.
async fn read_frames(mut rd: OwnedReadHalf, tx: mpsc::UnboundedSender<Result<Message, ProtoError>>) {
    let mut header = [0u8; proto::HEADER_LEN];
    loop {
        if rd.read_exact(&mut header).await.is_err() {
            return;
        }
        let len = match proto::frame_len(header) {
            Ok(n) => n,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        };
        let mut body = vec![0u8; len];
        if rd.read_exact(&mut body).await.is_err() {
            return;
        }
        let decoded = proto::decode_body(&body);
        let failed = decoded.is_err();
        if tx.send(decoded).is_err() || failed {
            return;
        }
    }
}
