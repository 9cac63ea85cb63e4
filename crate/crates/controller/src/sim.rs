//! Simulated switches. Each one holds a [`SwitchState`], dials the
//! controller, says HELLO and then serves FLOW_MOD, STATS and ECHO requests in
//! order. Flow tables survive loss of the control channel.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use ibn_core::dataplane::{trace_packet, FlowModError, PacketProbe, PortStats, SwitchState, Trace, TraceError};
use ibn_core::flow::FlowTable;
use ibn_core::proto::{self, Body, ErrorCode, Message, StatsKind, StatsReply};
use ibn_core::{Dpid, FlowEntry, Topology};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::task::JoinHandle;
use tracing::debug;

const RECONNECT_DELAY: Duration = Duration::from_millis(100);

/// One simulated switch.
pub struct SimSwitch {
    dpid: Dpid,
    controller: SocketAddr,
    state: Arc<Mutex<SwitchState>>,
    muted: Arc<AtomicBool>,
    task: Mutex<Option<JoinHandle<()>>>,
}

impl SimSwitch {
    pub fn new(state: SwitchState, controller: SocketAddr) -> Self {
        SimSwitch {
            dpid: state.dpid,
            controller,
            state: Arc::new(Mutex::new(state)),
            muted: Arc::new(AtomicBool::new(false)),
            task: Mutex::new(None),
        }
    }

    pub fn dpid(&self) -> Dpid {
        self.dpid
    }

    /// Starts (or restarts) the control channel, reconnecting whenever it drops.
    pub fn connect(&self) {
        let mut task = self.task.lock().unwrap();
        if let Some(t) = task.take() {
            t.abort();
        }
        let (state, muted, addr) = (self.state.clone(), self.muted.clone(), self.controller);
        *task = Some(tokio::spawn(async move {
            loop {
                if let Ok(stream) = TcpStream::connect(addr).await {
                    if let Err(e) = run_channel(stream, &state, &muted).await {
                        debug!(error = %e, "switch channel ended");
                    }
                }
                tokio::time::sleep(RECONNECT_DELAY).await;
            }
        }));
    }

    /// Kills the control channel. The flow table is kept.
    pub fn disconnect(&self) {
        if let Some(t) = self.task.lock().unwrap().take() {
            t.abort();
        }
    }

    pub fn is_connected(&self) -> bool {
        self.task.lock().unwrap().is_some()
    }

    /// A muted switch keeps its connection but ignores every request.
    pub fn set_muted(&self, muted: bool) {
        self.muted.store(muted, Ordering::SeqCst);
    }

    pub fn state(&self) -> SwitchState {
        self.state.lock().unwrap().clone()
    }

    pub fn port_stats(&self) -> Vec<PortStats> {
        self.state.lock().unwrap().port_stats()
    }

    fn lock(&self) -> MutexGuard<'_, SwitchState> {
        self.state.lock().unwrap()
    }
}

impl Drop for SimSwitch {
    fn drop(&mut self) {
        self.disconnect();
    }
}

fn handle(state: &Mutex<SwitchState>, body: Body) -> Option<Body> {
    Some(match body {
        Body::EchoRequest => Body::EchoReply,
        Body::FlowMod(cmd) => match state.lock().unwrap().apply_flow_mod(&cmd) {
            Ok(()) => Body::FlowModAck,
            Err(e) => Body::Error {
                code: match e {
                    FlowModError::BadOutPort { .. } => ErrorCode::BadOutPort,
                    FlowModError::EmptyMatch => ErrorCode::BadMatch,
                    FlowModError::BadReservation(_) => ErrorCode::BadRequest,
                },
                text: e.to_string(),
            },
        },
        Body::StatsRequest { kind } => {
            let s = state.lock().unwrap();
            Body::StatsReply(match kind {
                StatsKind::Port => StatsReply::Port(s.port_stats()),
                StatsKind::Flow => StatsReply::Flow(s.flow_stats()),
            })
        }
        Body::EchoReply | Body::Error { .. } | Body::FlowModAck | Body::StatsReply(_) | Body::Hello { .. } => {
            return None
        }
    })
}

#[derive(Debug, thiserror::Error)]
enum ChannelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Proto(#[from] proto::ProtoError),
}

async fn run_channel(mut stream: TcpStream, state: &Mutex<SwitchState>, muted: &AtomicBool) -> Result<(), ChannelError> {
    stream.set_nodelay(true)?;
    let hello = {
        let s = state.lock().unwrap();
        Body::Hello {
            dpid: s.dpid,
            ports: s.ports().collect(),
        }
    };
    stream.write_all(&proto::encode_frame(&Message::new(0, hello))?).await?;
    let mut header = [0u8; proto::HEADER_LEN];
    loop {
        stream.read_exact(&mut header).await?;
        let mut body = vec![0u8; proto::frame_len(header)?];
        stream.read_exact(&mut body).await?;
        let m = proto::decode_body(&body)?;
        if muted.load(Ordering::SeqCst) {
            continue;
        }
        if let Some(reply) = handle(state, m.body) {
            stream.write_all(&proto::encode_frame(&Message::new(m.xid, reply))?).await?;
        }
    }
}

/// Every switch of a topology.
pub struct Fabric {
    topology: Arc<Topology>,
    switches: BTreeMap<Dpid, SimSwitch>,
}

impl Fabric {
    /// Builds the switches without connecting them.
    pub fn new(topology: Arc<Topology>, controller: SocketAddr) -> Self {
        let switches = topology
            .switches()
            .iter()
            .map(|s| {
                let state = SwitchState::from_topology(&topology, s.dpid).expect("declared switch");
                (s.dpid, SimSwitch::new(state, controller))
            })
            .collect();
        Fabric { topology, switches }
    }

    /// Builds and connects every switch.
    pub fn start(topology: Arc<Topology>, controller: SocketAddr) -> Self {
        let f = Fabric::new(topology, controller);
        for s in f.switches.values() {
            s.connect();
        }
        f
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn dpids(&self) -> Vec<Dpid> {
        self.switches.keys().copied().collect()
    }

    pub fn switch(&self, dpid: Dpid) -> Option<&SimSwitch> {
        self.switches.get(&dpid)
    }

    pub fn by_name(&self, name: &str) -> Option<&SimSwitch> {
        self.switch(self.topology.dpid_of(name)?)
    }

    /// Every (switch, entry) pair, read under all switch locks at once.
    pub fn flow_sweep(&self) -> BTreeSet<(Dpid, FlowEntry)> {
        let guards: Vec<_> = self.switches.values().map(|s| s.lock()).collect();
        guards
            .iter()
            .flat_map(|g| g.table().entries().map(|e| (g.dpid, *e)))
            .collect()
    }

    /// Traces `probe` over a point-in-time copy of all tables and counts the
    /// packet on every port it crossed.
    pub fn trace(&self, probe: &PacketProbe) -> Result<Trace, TraceError> {
        let mut guards: BTreeMap<Dpid, _> = self.switches.iter().map(|(d, s)| (*d, s.lock())).collect();
        let tables: BTreeMap<Dpid, FlowTable> = guards.iter().map(|(d, g)| (*d, g.table().clone())).collect();
        let trace = trace_packet(&self.topology, &tables, probe)?;
        for h in &trace.hops {
            if let Some(g) = guards.get_mut(&h.dpid) {
                g.count_packet(h.in_port, h.out_port);
            }
        }
        Ok(trace)
    }
}
