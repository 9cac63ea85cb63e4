//! WebAssembly bindings for the browser demo. Each call returns JSON text
//! that the page parses.

pub mod state;

use ibn_core::fixtures::topo5;
use ibn_core::{IntentRequest, IntentType};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use crate::state::DemoState;

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo views serialize")
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    /// The five-switch network.
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo {
            state: DemoState::new(topo5()),
        }
    }

    /// Topology document as JSON.
    pub fn topology(&self) -> String {
        self.state.topology().to_json()
    }

    pub fn explore(&self, intent: &str, from: &str, to: &str, demand_mbps: f64) -> String {
        json(&self.state.explore(intent, from, to, demand_mbps))
    }

    pub fn provision(&mut self, intent: &str, from: &str, to: &str, demand_mbps: f64) -> Result<String, JsError> {
        let t = IntentType::parse(intent).ok_or_else(|| JsError::new(&format!("unknown intent type {intent:?}")))?;
        let installed = self
            .state
            .provision(IntentRequest::new(t, from, to).with_demand(demand_mbps))
            .map_err(|f| JsError::new(&f.message))?;
        Ok(json(&installed))
    }

    pub fn installed(&self) -> String {
        json(&self.state.installed())
    }

    pub fn trace(&mut self, src_ip: &str, dst_ip: &str) -> Result<String, JsError> {
        let src = src_ip.trim().parse().map_err(|_| JsError::new(&format!("bad address {src_ip:?}")))?;
        let dst = dst_ip.trim().parse().map_err(|_| JsError::new(&format!("bad address {dst_ip:?}")))?;
        let t = self.state.trace(src, dst).map_err(|f| JsError::new(&f.message))?;
        Ok(json(&t))
    }

    /// One dialogue turn; an empty transcript launches a new conversation.
    pub fn say(&mut self, transcript: &str, now_ms: f64) -> String {
        json(&self.state.say(transcript, now_ms.max(0.0) as u64))
    }
}

impl Default for Demo {
    fn default() -> Self {
        Demo::new()
    }
}
