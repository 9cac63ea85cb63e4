//! Durable service state in a single JSON file.
//!
//! Every mutation is applied to a copy of the state, written to a temporary
//! file, fsynced and renamed over the store file, and only then published to
//! readers. A crash at any point leaves either the old or the new file.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Mutex, RwLock};

use ibn_core::intent::PathScore;
use ibn_core::text::normalize_city;
use ibn_core::{Cookie, Dpid, Endpoint, FlowEntry, IntentRequest, LinkKey, Path, Topology};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{token_digest, PasswordHash};

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntentState {
    Active,
    Withdrawn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRow {
    pub dpid: Dpid,
    #[serde(flatten)]
    pub entry: FlowEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentRecord {
    pub id: u64,
    pub request: IntentRequest,
    pub path: Path,
    pub score: PathScore,
    pub flows: Vec<FlowRow>,
    pub cookie: Cookie,
    pub state: IntentState,
    pub created_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub withdrawn_at_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<u64>,
}

impl IntentRecord {
    /// The unordered city pair this intent governs (flows run both ways).
    pub fn pair(&self) -> (String, String) {
        unordered(&self.request.from_city, &self.request.to_city)
    }

    pub fn is_active(&self) -> bool {
        self.state == IntentState::Active
    }
}

fn unordered(a: &str, b: &str) -> (String, String) {
    let (a, b) = (normalize_city(a), normalize_city(b));
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub name: String,
    pub password: PasswordHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRow {
    pub digest: String,
    pub user: String,
    pub expires_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreData {
    version: u32,
    endpoints: Vec<Endpoint>,
    intents: Vec<IntentRecord>,
    users: Vec<UserRow>,
    tokens: Vec<TokenRow>,
    next_id: u64,
    next_cookie: u64,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("store {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("an ACTIVE intent ({existing}) already covers {from} <-> {to}")]
    PairInUse { from: String, to: String, existing: u64 },
    #[error("cookie {0} is already used by an ACTIVE intent")]
    CookieInUse(Cookie),
    #[error("intent {0} not found")]
    NotFound(u64),
    #[error("intent {0} is already withdrawn")]
    AlreadyWithdrawn(u64),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("injected fault at {0:?}")]
    Injected(FaultPoint),
}

/// Where a test can make the next write fail, as if the process died there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Before anything is written.
    BeforeWrite,
    /// Temporary file written and synced, not yet renamed.
    BeforeRename,
}

/// What a restarted service needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedState {
    pub endpoints: Vec<Endpoint>,
    pub active: Vec<IntentRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntentFilter {
    pub state: Option<IntentState>,
    /// Ordered (from, to) city pair.
    pub pair: Option<(String, String)>,
}

/// A record about to be committed; the store assigns the id.
#[derive(Debug, Clone, PartialEq)]
pub struct NewIntent {
    pub request: IntentRequest,
    pub path: Path,
    pub score: PathScore,
    pub flows: Vec<(Dpid, FlowEntry)>,
    pub cookie: Cookie,
    pub created_at_ms: u64,
}

pub struct Store {
    path: PathBuf,
    data: RwLock<StoreData>,
    write: Mutex<Option<FaultPoint>>,
}

impl Store {
    /// Opens `path`, creating it with endpoints seeded from `topology` when
    /// absent. A file that does not parse is an error, never a reset.
    pub fn open(path: &FsPath, topology: &Topology) -> Result<Store, StoreError> {
        let data = match fs::read(path) {
            Ok(bytes) => {
                let data: StoreData = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?;
                if data.version != STORE_VERSION {
                    return Err(StoreError::Corrupt {
                        path: path.to_path_buf(),
                        message: format!("unsupported version {}", data.version),
                    });
                }
                data
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let data = StoreData {
                    version: STORE_VERSION,
                    endpoints: topology.endpoints().to_vec(),
                    intents: vec![],
                    users: vec![],
                    tokens: vec![],
                    next_id: 1,
                    next_cookie: 1,
                };
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|source| StoreError::Io {
                        path: dir.to_path_buf(),
                        source,
                    })?;
                }
                write_atomic(path, &data, None)?;
                data
            }
            Err(source) => {
                return Err(StoreError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        Ok(Store {
            path: path.to_path_buf(),
            data: RwLock::new(data),
            write: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &FsPath {
        &self.path
    }

    /// Makes the next write fail at `point`.
    pub fn inject_fault(&self, point: Option<FaultPoint>) {
        *self.write.lock().unwrap() = point;
    }

    /// Applies `f` to a copy of the state and persists it. The lock on
    /// `write` serializes writers; readers keep seeing the old state until the
    /// new file is in place.
    fn mutate<T>(&self, f: impl FnOnce(&mut StoreData) -> Result<T, StoreError>) -> Result<T, StoreError> {
        let mut fault = self.write.lock().unwrap();
        let mut next = self.data.read().unwrap().clone();
        let out = f(&mut next)?;
        let point = fault.take();
        write_atomic(&self.path, &next, point)?;
        *self.data.write().unwrap() = next;
        Ok(out)
    }

    pub fn load_state(&self) -> LoadedState {
        let data = self.data.read().unwrap();
        LoadedState {
            endpoints: data.endpoints.clone(),
            active: sorted(data.intents.iter().filter(|r| r.is_active()).cloned().collect()),
        }
    }

    /// Next unused cookie. Cookies are never handed out twice by one process.
    pub fn allocate_cookie(&self) -> Result<Cookie, StoreError> {
        self.mutate(|d| {
            let c = Cookie(d.next_cookie);
            d.next_cookie += 1;
            Ok(c)
        })
    }

    /// Inserts `intent` as ACTIVE and, in the same write, marks `superseded`
    /// WITHDRAWN. Rejects records that would leave two ACTIVE intents on one
    /// city pair (in either direction) or reuse an ACTIVE cookie.
    pub fn commit_intent(&self, intent: NewIntent, superseded: Option<u64>) -> Result<IntentRecord, StoreError> {
        if intent.flows.is_empty() || intent.flows.iter().any(|(_, e)| e.cookie != intent.cookie) {
            return Err(StoreError::Invalid("flows must be non-empty and carry the intent cookie".into()));
        }
        self.mutate(|d| {
            let id = d.next_id;
            if let Some(old) = superseded {
                let rec = d.intents.iter_mut().find(|r| r.id == old).ok_or(StoreError::NotFound(old))?;
                if !rec.is_active() {
                    return Err(StoreError::AlreadyWithdrawn(old));
                }
                rec.state = IntentState::Withdrawn;
                rec.withdrawn_at_ms = Some(intent.created_at_ms);
                rec.superseded_by = Some(id);
            }
            let pair = unordered(&intent.request.from_city, &intent.request.to_city);
            if let Some(r) = d.intents.iter().find(|r| r.is_active() && r.pair() == pair) {
                return Err(StoreError::PairInUse {
                    from: intent.request.from_city.clone(),
                    to: intent.request.to_city.clone(),
                    existing: r.id,
                });
            }
            if d.intents.iter().any(|r| r.is_active() && r.cookie == intent.cookie) {
                return Err(StoreError::CookieInUse(intent.cookie));
            }
            let record = IntentRecord {
                id,
                request: intent.request,
                path: intent.path,
                score: intent.score,
                flows: intent
                    .flows
                    .into_iter()
                    .map(|(dpid, entry)| FlowRow { dpid, entry })
                    .collect(),
                cookie: intent.cookie,
                state: IntentState::Active,
                created_at_ms: intent.created_at_ms,
                withdrawn_at_ms: None,
                superseded_by: None,
            };
            d.next_id += 1;
            d.next_cookie = d.next_cookie.max(intent.cookie.0 + 1);
            d.intents.push(record.clone());
            Ok(record)
        })
    }

    pub fn withdraw(&self, id: u64, now_ms: u64) -> Result<IntentRecord, StoreError> {
        self.mutate(|d| {
            let rec = d.intents.iter_mut().find(|r| r.id == id).ok_or(StoreError::NotFound(id))?;
            if !rec.is_active() {
                return Err(StoreError::AlreadyWithdrawn(id));
            }
            rec.state = IntentState::Withdrawn;
            rec.withdrawn_at_ms = Some(now_ms);
            Ok(rec.clone())
        })
    }

    pub fn get(&self, id: u64) -> Option<IntentRecord> {
        self.data.read().unwrap().intents.iter().find(|r| r.id == id).cloned()
    }

    /// Matching records, newest first.
    pub fn query_intents(&self, filter: &IntentFilter) -> Vec<IntentRecord> {
        let pair = filter
            .pair
            .as_ref()
            .map(|(a, b)| (normalize_city(a), normalize_city(b)));
        let data = self.data.read().unwrap();
        sorted(
            data.intents
                .iter()
                .filter(|r| filter.state.is_none_or(|s| r.state == s))
                .filter(|r| {
                    pair.as_ref()
                        .is_none_or(|(a, b)| r.request.from_city == *a && r.request.to_city == *b)
                })
                .cloned()
                .collect(),
        )
    }

    /// The ACTIVE intent covering the city pair in either direction.
    pub fn active_for_pair(&self, a: &str, b: &str) -> Option<IntentRecord> {
        let pair = unordered(a, b);
        let data = self.data.read().unwrap();
        data.intents.iter().find(|r| r.is_active() && r.pair() == pair).cloned()
    }

    /// Sum of ACTIVE demands per link.
    pub fn reserved_by_link(&self) -> BTreeMap<LinkKey, f64> {
        let data = self.data.read().unwrap();
        let mut out = BTreeMap::new();
        for r in data.intents.iter().filter(|r| r.is_active()) {
            for k in r.path.links() {
                *out.entry(k).or_insert(0.0) += r.request.demand_mbps;
            }
        }
        out
    }

    /// Adds `name`, or replaces its password if it no longer verifies.
    pub fn ensure_user(&self, name: &str, password: &str) -> Result<(), StoreError> {
        if self.verify_user(name, password) {
            return Ok(());
        }
        let row = UserRow {
            name: name.to_string(),
            password: PasswordHash::new(password),
        };
        self.mutate(|d| {
            d.users.retain(|u| u.name != name);
            d.users.push(row);
            Ok(())
        })
    }

    pub fn verify_user(&self, name: &str, password: &str) -> bool {
        let data = self.data.read().unwrap();
        match data.users.iter().find(|u| u.name == name) {
            Some(u) => u.password.verify(password),
            None => {
                // Spend the same time as a real check.
                let _ = PasswordHash::new(password);
                false
            }
        }
    }

    /// Persists a session token (by digest) and drops expired ones.
    pub fn insert_token(&self, token: &str, user: &str, expires_at_ms: u64, now_ms: u64) -> Result<(), StoreError> {
        let row = TokenRow {
            digest: token_digest(token),
            user: user.to_string(),
            expires_at_ms,
        };
        self.mutate(|d| {
            d.tokens.retain(|t| t.expires_at_ms > now_ms);
            d.tokens.push(row);
            Ok(())
        })
    }

    /// The user owning an unexpired `token`.
    pub fn token_user(&self, token: &str, now_ms: u64) -> Option<String> {
        let digest = token_digest(token);
        let data = self.data.read().unwrap();
        data.tokens
            .iter()
            .find(|t| crate::auth::secrets_equal(&t.digest, &digest))
            .filter(|t| t.expires_at_ms > now_ms)
            .map(|t| t.user.clone())
    }
}

fn sorted(mut v: Vec<IntentRecord>) -> Vec<IntentRecord> {
    v.sort_by(|a, b| b.created_at_ms.cmp(&a.created_at_ms).then(b.id.cmp(&a.id)));
    v
}

fn write_atomic(path: &FsPath, data: &StoreData, fault: Option<FaultPoint>) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    if fault == Some(FaultPoint::BeforeWrite) {
        return Err(StoreError::Injected(FaultPoint::BeforeWrite));
    }
    let bytes = serde_json::to_vec_pretty(data).expect("store state serializes");
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    if fault == Some(FaultPoint::BeforeRename) {
        return Err(StoreError::Injected(FaultPoint::BeforeRename));
    }
    fs::rename(&tmp, path).map_err(io)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}
