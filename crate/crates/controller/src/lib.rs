//! Controller service: southbound switch sessions, the intent engine, the
//! persistent store, the dialogue webhook and the HTTP gateway, plus a
//! simulated switch fabric that speaks the same wire protocol.

pub mod api;
pub mod auth;
pub mod config;
pub mod engine;
pub mod server;
pub mod sim;
pub mod southbound;
pub mod store;
pub mod voice;

/// Wall-clock time in Unix milliseconds.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}
