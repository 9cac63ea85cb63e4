#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use ibn_controller::api::LoginReply;
use ibn_controller::config::Config;
use ibn_controller::server::Service;
use ibn_controller::sim::Fabric;
use ibn_core::fixtures::TOPO5_JSON;
use serde_json::{json, Value};
use tempfile::TempDir;

pub struct Harness {
    pub service: Service,
    pub fabric: Fabric,
    pub dir: TempDir,
    pub http: reqwest::Client,
}

pub fn config_in(dir: &TempDir) -> Config {
    let topo = dir.path().join("topo.json");
    if !topo.exists() {
        std::fs::write(&topo, TOPO5_JSON).unwrap();
    }
    let mut c = Config::ephemeral(topo, dir.path().join("store.json"));
    c.southbound.request_timeout_ms = 500;
    c
}

impl Harness {
    pub async fn start() -> Harness {
        let dir = tempfile::tempdir().unwrap();
        Harness::start_with(dir, |_| {}).await
    }

    pub async fn start_with(dir: TempDir, tweak: impl FnOnce(&mut Config)) -> Harness {
        let mut config = config_in(&dir);
        tweak(&mut config);
        let service = Service::start(config).await.unwrap();
        let fabric = Fabric::start(service.engine.topology().clone(), service.southbound_addr);
        assert!(
            service
                .engine
                .southbound()
                .wait_ready(&fabric.dpids(), Duration::from_secs(5))
                .await
        );
        Harness {
            service,
            fabric,
            dir,
            http: reqwest::Client::new(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.service.base_url())
    }

    pub async fn login(&self) -> String {
        let r = self
            .http
            .post(self.url("/api/login"))
            .json(&json!({"username": "admin", "password": "admin"}))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), 200);
        r.json::<LoginReply>().await.unwrap().token
    }

    pub async fn call(&self, method: reqwest::Method, path: &str, token: &str, body: Option<Value>) -> (u16, Value) {
        let mut req = self.http.request(method, self.url(path)).bearer_auth(token);
        if let Some(b) = body {
            req = req.json(&b);
        }
        let r = req.send().await.unwrap();
        let status = r.status().as_u16();
        let text = r.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    pub async fn webhook(&self, body: Value) -> (u16, Value) {
        let r = self
            .http
            .post(self.url("/ask/alexa"))
            .header("X-Webhook-Secret", "webhook-secret")
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub fn topology(&self) -> Arc<ibn_core::Topology> {
        self.service.engine.topology().clone()
    }

    /// Stops the switch and waits until the controller has dropped its session.
    pub async fn kill_switch(&self, name: &str) {
        let sw = self.fabric.by_name(name).unwrap();
        sw.disconnect();
        let sb = self.service.engine.southbound();
        for _ in 0..400 {
            if !sb.is_ready(sw.dpid()) {
                return;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("session for {name} still ready");
    }
}

pub fn intent_body(kind: &str, from: &str, to: &str) -> Value {
    json!({"intent_type": kind, "from_city": from, "to_city": to})
}
