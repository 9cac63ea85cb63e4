//! The intent pipeline: resolve, collect link state, select, synthesize, push
//! and verify per switch, persist. Create and withdraw run one at a time
//! under a single writer lock.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ibn_core::intent::{plan, resolve_cities, synthesize_flows, IntentError, LinkMetrics, LinkState, Selection};
use ibn_core::{Cookie, Dpid, FlowEntry, FlowMod, IntentRequest, Topology};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::Mutex;
use tracing::{info, warn};

use crate::southbound::{SouthboundError, SouthboundEvent, Southbound};
use crate::store::{FlowRow, IntentRecord, NewIntent, Store, StoreError};
use crate::now_ms;

/// Time spent on one switch of a successful create.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviceTiming {
    pub dpid: Dpid,
    /// Flow synthesis, push and verify for this switch.
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub record: IntentRecord,
    pub superseded: Option<u64>,
    pub selection: Selection,
    pub devices: Vec<DeviceTiming>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WithdrawError {
    #[error("intent {0} not found")]
    NotFound(u64),
    #[error("intent {0} is already withdrawn")]
    AlreadyWithdrawn(u64),
    #[error("store error: {0}")]
    Store(String),
}

impl WithdrawError {
    pub fn code(&self) -> &'static str {
        match self {
            WithdrawError::NotFound(_) => "NOT_FOUND",
            WithdrawError::AlreadyWithdrawn(_) => "ALREADY_WITHDRAWN",
            WithdrawError::Store(_) => "STORE_ERROR",
        }
    }
}

/// Outcome of a withdraw. Switches that could not be cleaned are listed;
/// they are cleaned when they next connect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Withdrawal {
    pub record: IntentRecord,
    pub failed: Vec<(Dpid, String)>,
}

pub struct Engine {
    topology: Arc<Topology>,
    southbound: Southbound,
    store: Arc<Store>,
    writer: Mutex<()>,
}

fn store_err(e: StoreError) -> IntentError {
    IntentError::Store(e.to_string())
}

/// Groups `flows` by switch, keeping the order switches first appear in.
fn per_switch(flows: &[(Dpid, FlowEntry)]) -> Vec<(Dpid, Vec<FlowEntry>)> {
    let mut out: Vec<(Dpid, Vec<FlowEntry>)> = Vec::new();
    for (d, e) in flows {
        match out.iter_mut().find(|(x, _)| x == d) {
            Some((_, v)) => v.push(*e),
            None => out.push((*d, vec![*e])),
        }
    }
    out
}

impl Engine {
    pub fn new(topology: Arc<Topology>, southbound: Southbound, store: Arc<Store>) -> Self {
        Engine {
            topology,
            southbound,
            store,
            writer: Mutex::new(()),
        }
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn southbound(&self) -> &Southbound {
        &self.southbound
    }

    /// Link state as reported by the switches. Links neither end reports on
    /// fall back to configured attributes and stored reservations, so that
    /// selection still works and the push reports the unreachable switch.
    async fn link_state(&self) -> Result<LinkState, IntentError> {
        let report = self.southbound.collect_link_state(&self.topology).await?;
        let mut state = report.link_state();
        let reserved = self.store.reserved_by_link();
        for (i, link) in self.topology.links().iter().enumerate() {
            let key = self.topology.link_key(i);
            state.entry(key).or_insert(LinkMetrics {
                latency_ms: link.latency_ms,
                capacity_mbps: link.capacity_mbps,
                reserved_mbps: reserved.get(&key).copied().unwrap_or(0.0),
            });
        }
        Ok(state)
    }

    /// Creates the intent. On any push or verify failure every flow pushed
    /// under the new cookie is deleted and nothing is persisted.
    pub async fn execute(&self, request: IntentRequest) -> Result<Execution, IntentError> {
        let _w = self.writer.lock().await;
        let request = request.normalized();
        if !(request.demand_mbps.is_finite() && request.demand_mbps >= 0.0) {
            return Err(IntentError::InvalidDemand(request.demand_mbps));
        }
        resolve_cities(&request, &self.topology)?;
        let state = self.link_state().await?;
        let selection = plan(&self.topology, &state, &request)?;
        let cookie = self.store.allocate_cookie().map_err(store_err)?;
        let old = self.store.active_for_pair(&request.from_city, &request.to_city);

        let mut touched: Vec<Dpid> = Vec::new();
        let mut flows: Vec<(Dpid, FlowEntry)> = Vec::new();
        let mut devices = Vec::new();
        for hop in &selection.path.hops {
            let started = Instant::now();
            let entries: Vec<FlowEntry> = synthesize_flows(&selection.path, cookie)
                .into_iter()
                .filter(|(d, _)| *d == hop.dpid)
                .map(|(_, e)| e)
                .collect();
            touched.push(hop.dpid);
            if let Err(e) = self.install(hop.dpid, cookie, &entries, request.demand_mbps).await {
                self.rollback(&touched, cookie, old.as_ref()).await;
                return Err(e);
            }
            devices.push(DeviceTiming {
                dpid: hop.dpid,
                elapsed: started.elapsed(),
            });
            flows.extend(entries.into_iter().map(|e| (hop.dpid, e)));
        }

        let new = NewIntent {
            request,
            path: selection.path.clone(),
            score: selection.score,
            flows,
            cookie,
            created_at_ms: now_ms(),
        };
        let record = match self.store.commit_intent(new, old.as_ref().map(|r| r.id)) {
            Ok(r) => r,
            Err(e) => {
                self.rollback(&touched, cookie, old.as_ref()).await;
                return Err(store_err(e));
            }
        };
        if let Some(old) = &old {
            // The new flows already overwrote any entry sharing a match, so
            // this only removes what the old path had elsewhere.
            for (dpid, _) in per_switch(&rows(old)) {
                if let Err(e) = self.southbound.push_flow(dpid, FlowMod::Delete { cookie: old.cookie }).await {
                    warn!(%dpid, error = %e, "could not remove superseded flows; will retry on reconnect");
                }
            }
        }
        info!(id = record.id, cookie = %cookie, "intent active");
        Ok(Execution {
            record,
            superseded: old.map(|r| r.id),
            selection,
            devices,
        })
    }

    async fn install(&self, dpid: Dpid, cookie: Cookie, entries: &[FlowEntry], reserve_mbps: f64) -> Result<(), IntentError> {
        for entry in entries {
            self.southbound
                .push_flow(
                    dpid,
                    FlowMod::Add {
                        entry: *entry,
                        reserve_mbps,
                    },
                )
                .await?;
        }
        if self.southbound.verify_flows(dpid, cookie, entries).await? {
            Ok(())
        } else {
            Err(IntentError::VerifyFailed(dpid))
        }
    }

    /// Deletes `cookie` from `touched` and re-installs the flows of the intent
    /// that would have been superseded, since equal matches were overwritten.
    async fn rollback(&self, touched: &[Dpid], cookie: Cookie, old: Option<&IntentRecord>) {
        for dpid in touched {
            if let Err(e) = self.southbound.push_flow(*dpid, FlowMod::Delete { cookie }).await {
                warn!(%dpid, error = %e, "rollback delete failed");
            }
        }
        if let Some(old) = old {
            for (dpid, entries) in per_switch(&rows(old)) {
                if !touched.contains(&dpid) {
                    continue;
                }
                for entry in entries {
                    let restore = FlowMod::Add {
                        entry,
                        reserve_mbps: old.request.demand_mbps,
                    };
                    if let Err(e) = self.southbound.push_flow(dpid, restore).await {
                        warn!(%dpid, error = %e, "restoring superseded flow failed");
                    }
                }
            }
        }
    }

    pub async fn withdraw(&self, id: u64) -> Result<Withdrawal, WithdrawError> {
        let _w = self.writer.lock().await;
        let record = self.store.withdraw(id, now_ms()).map_err(|e| match e {
            StoreError::NotFound(id) => WithdrawError::NotFound(id),
            StoreError::AlreadyWithdrawn(id) => WithdrawError::AlreadyWithdrawn(id),
            other => WithdrawError::Store(other.to_string()),
        })?;
        let mut failed = Vec::new();
        for (dpid, _) in per_switch(&rows(&record)) {
            if let Err(e) = self.southbound.push_flow(dpid, FlowMod::Delete { cookie: record.cookie }).await {
                failed.push((dpid, e.to_string()));
            }
        }
        info!(id, failed = failed.len(), "intent withdrawn");
        Ok(Withdrawal { record, failed })
    }

    /// Brings a (re)connected switch in line with the store: removes flows of
    /// cookies that are not ACTIVE and re-installs every ACTIVE flow for it.
    pub async fn reconcile(&self, dpid: Dpid) -> Result<(), SouthboundError> {
        let _w = self.writer.lock().await;
        let active = self.store.load_state().active;
        let live: BTreeSet<Cookie> = active.iter().map(|r| r.cookie).collect();
        let installed = self.southbound.flow_stats(dpid).await?;
        let stale: BTreeSet<Cookie> = installed.iter().map(|e| e.cookie).filter(|c| !live.contains(c)).collect();
        for cookie in stale {
            self.southbound.push_flow(dpid, FlowMod::Delete { cookie }).await?;
        }
        // ACTIVE intents cover distinct city pairs, so their matches never collide.
        for r in &active {
            for row in r.flows.iter().filter(|f| f.dpid == dpid) {
                if !installed.contains(&row.entry) {
                    self.southbound
                        .push_flow(
                            dpid,
                            FlowMod::Add {
                                entry: row.entry,
                                reserve_mbps: r.request.demand_mbps,
                            },
                        )
                        .await?;
                }
            }
        }
        Ok(())
    }

    /// Runs [`Engine::reconcile`] for every switch that says HELLO.
    pub fn spawn_reconciler(self: &Arc<Self>) -> tokio::task::JoinHandle<()> {
        let mut events = self.southbound.subscribe();
        let engine = Arc::downgrade(self);
        tokio::spawn(async move {
            loop {
                match events.recv().await {
                    Ok(SouthboundEvent::Ready(dpid)) => {
                        let Some(engine) = engine.upgrade() else { return };
                        if let Err(e) = engine.reconcile(dpid).await {
                            warn!(%dpid, error = %e, "reconcile failed");
                        }
                    }
                    Ok(SouthboundEvent::Closed(_)) => {}
                    Err(tokio::sync::broadcast::error::RecvError::Lagged(_)) => {}
                    Err(_) => return,
                }
            }
        })
    }

    /// Sum of ACTIVE demands per link, from the store.
    pub fn reservations(&self) -> BTreeMap<ibn_core::LinkKey, f64> {
        self.store.reserved_by_link()
    }
}

fn rows(r: &IntentRecord) -> Vec<(Dpid, FlowEntry)> {
    r.flows.iter().map(|FlowRow { dpid, entry }| (*dpid, *entry)).collect()
}
