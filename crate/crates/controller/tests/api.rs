mod common;

use common::{intent_body, Harness};
use ibn_controller::api::{TopologyView, PROTECTED_ROUTES};
use reqwest::Method;
use serde_json::{json, Value};

fn method(m: &str) -> Method {
    m.parse().unwrap()
}

#[tokio::test]
async fn protected_routes_require_a_valid_token() {
    let h = Harness::start().await;
    let store = h.service.engine.store();
    store.insert_token("expired", "admin", 1, 0).unwrap();
    for (m, path) in PROTECTED_ROUTES {
        let path = path.replace("{id}", "1");
        let bare = h.http.request(method(m), h.url(&path)).send().await.unwrap();
        assert_eq!(bare.status(), 401, "{m} {path} without token");
        let body: Value = bare.json().await.unwrap();
        assert_eq!(body["error"], "UNAUTHORIZED");
        for token in ["garbage", "expired"] {
            let (status, _) = h.call(method(m), &path, token, None).await;
            assert_eq!(status, 401, "{m} {path} with {token} token");
        }
    }
    let token = h.login().await;
    let (status, _) = h.call(Method::GET, "/api/intents", &token, None).await;
    assert_eq!(status, 200);
}

#[tokio::test]
async fn login_rejects_bad_credentials() {
    let h = Harness::start().await;
    for body in [
        json!({"username": "admin", "password": "wrong"}),
        json!({"username": "nobody", "password": "admin"}),
    ] {
        let r = h.http.post(h.url("/api/login")).json(&body).send().await.unwrap();
        assert_eq!(r.status(), 401);
    }
    let r = h.http.post(h.url("/api/login")).body("{").send().await.unwrap();
    assert_eq!(r.status(), 400);
}

#[tokio::test]
async fn second_factor_is_enforced_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start_with(dir, |c| c.auth.second_factor = Some("424242".into())).await;
    let login = |f: Option<&str>| {
        let mut body = json!({"username": "admin", "password": "admin"});
        if let Some(f) = f {
            body["second_factor"] = json!(f);
        }
        h.http.post(h.url("/api/login")).json(&body).send()
    };
    assert_eq!(login(None).await.unwrap().status(), 401);
    assert_eq!(login(Some("000000")).await.unwrap().status(), 401);
    assert_eq!(login(Some("424242")).await.unwrap().status(), 200);
}

#[tokio::test]
async fn topology_lists_switches_endpoints_and_capacity() {
    let h = Harness::start().await;
    let token = h.login().await;
    let (status, body) = h.call(Method::GET, "/api/topology", &token, None).await;
    assert_eq!(status, 200);
    let view: TopologyView = serde_json::from_value(body).unwrap();
    assert_eq!(view.nodes.len(), 8);
    assert_eq!(view.edges.len(), 9);
    let s2s3 = view.edges.iter().find(|e| e.source == "s2" && e.target == "s3").unwrap();
    assert_eq!(s2s3.available_mbps, Some(100.0));
    let denver = view.edges.iter().find(|e| e.source == "ep:denver").unwrap();
    assert_eq!((denver.target.as_str(), denver.dst_port, denver.capacity_mbps), ("s1", 4, None));

    let mut body = intent_body("least hopcount", "denver", "new york");
    body["demand_mbps"] = json!(30);
    assert_eq!(h.call(Method::POST, "/api/intents", &token, Some(body)).await.0, 201);
    let (_, body) = h.call(Method::GET, "/api/topology", &token, None).await;
    let view: TopologyView = serde_json::from_value(body).unwrap();
    let s2s3 = view.edges.iter().find(|e| e.source == "s2" && e.target == "s3").unwrap();
    assert_eq!(s2s3.available_mbps, Some(70.0));
}

#[tokio::test]
async fn intent_lifecycle() {
    let h = Harness::start().await;
    let token = h.login().await;
    let (status, created) = h
        .call(Method::POST, "/api/intents", &token, Some(intent_body("high bandwidth", "denver", "new york")))
        .await;
    assert_eq!(status, 201);
    assert_eq!(created["state"], "ACTIVE");
    assert_eq!(created["switches"], json!(["s1", "s4", "s3"]));
    assert_eq!(created["request"]["intent_type"], "high_bandwidth");
    let id = created["id"].as_u64().unwrap();

    let (status, got) = h.call(Method::GET, &format!("/api/intents/{id}"), &token, None).await;
    assert_eq!(status, 200);
    assert_eq!(got, created);

    let (_, path) = h.call(Method::GET, &format!("/api/intents/{id}/path"), &token, None).await;
    assert_eq!(path["switches"], json!(["s1", "s4", "s3"]));
    assert_eq!(
        path["edges"],
        json!([
            {"source": "s1", "target": "s4", "src_port": 2, "dst_port": 1},
            {"source": "s4", "target": "s3", "src_port": 2, "dst_port": 2},
        ])
    );

    let (_, other) = h
        .call(Method::POST, "/api/intents", &token, Some(intent_body("fastest", "chicago", "denver")))
        .await;
    let (_, list) = h.call(Method::GET, "/api/intents", &token, None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
    let (_, list) = h
        .call(Method::GET, "/api/intents?from=chicago&to=denver", &token, None)
        .await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["id"], other["id"]);

    let (status, gone) = h.call(Method::DELETE, &format!("/api/intents/{id}"), &token, None).await;
    assert_eq!(status, 200);
    assert_eq!(gone["intent"]["state"], "WITHDRAWN");
    assert_eq!(gone["failed_switches"], json!([]));
    let (status, again) = h.call(Method::DELETE, &format!("/api/intents/{id}"), &token, None).await;
    assert_eq!((status, again["error"].as_str()), (409, Some("ALREADY_WITHDRAWN")));
    let (_, active) = h.call(Method::GET, "/api/intents?state=active", &token, None).await;
    assert_eq!(active.as_array().unwrap().len(), 1);
    let (_, withdrawn) = h.call(Method::GET, "/api/intents?state=WITHDRAWN", &token, None).await;
    assert_eq!(withdrawn[0]["id"].as_u64(), Some(id));
    assert_eq!(h.call(Method::GET, "/api/intents?state=maybe", &token, None).await.0, 400);
    assert_eq!(h.call(Method::GET, "/api/intents?from=denver", &token, None).await.0, 400);
}

#[tokio::test]
async fn errors_map_to_codes() {
    let h = Harness::start().await;
    let token = h.login().await;
    let post = |body: Value| h.call(Method::POST, "/api/intents", &token, Some(body));

    let (status, body) = post(intent_body("least latency", "denver", "atlantis")).await;
    assert_eq!((status, body["error"].as_str()), (404, Some("UNKNOWN_CITY")));
    assert_eq!(body["known_cities"], json!(["chicago", "denver", "new york"]));

    let (status, body) = post(intent_body("least latency", "Denver", "denver")).await;
    assert_eq!((status, body["error"].as_str()), (400, Some("SAME_CITY")));

    let mut b = intent_body("least latency", "denver", "chicago");
    b["demand_mbps"] = json!(-1);
    let (status, body) = post(b).await;
    assert_eq!((status, body["error"].as_str()), (400, Some("INVALID_DEMAND")));

    let mut b = intent_body("least latency", "denver", "chicago");
    b["demand_mbps"] = json!(5000);
    let (status, body) = post(b).await;
    assert_eq!((status, body["error"].as_str()), (409, Some("NO_PATH_MEETS_DEMAND")));

    for bad in [json!({"intent_type": "least latency"}), json!({"intent_type": "teleport", "from_city": "denver", "to_city": "chicago"}), json!([1])] {
        let (status, body) = post(bad).await;
        assert_eq!((status, body["error"].as_str()), (400, Some("BAD_REQUEST")));
    }
    let raw = h
        .http
        .post(h.url("/api/intents"))
        .bearer_auth(&token)
        .body("not json")
        .send()
        .await
        .unwrap();
    assert_eq!(raw.status(), 400);

    assert_eq!(h.call(Method::GET, "/api/intents/77", &token, None).await.0, 404);
    assert_eq!(h.call(Method::GET, "/api/intents/x/path", &token, None).await.0, 404);
    assert_eq!(h.call(Method::DELETE, "/api/intents/77", &token, None).await.0, 404);

    h.kill_switch("s1").await;
    let (status, body) = post(intent_body("least latency", "denver", "chicago")).await;
    assert_eq!((status, body["error"].as_str()), (502, Some("SWITCH_UNREACHABLE")));
}

#[tokio::test]
async fn trace_route_follows_installed_flows() {
    let h = Harness::start().await;
    let token = h.login().await;
    let probe = json!({"src_ip": "10.1.0.9", "dst_ip": "10.3.0.9"});
    let (status, t) = h.call(Method::POST, "/api/trace", &token, Some(probe.clone())).await;
    assert_eq!(status, 200);
    assert_eq!(t["outcome"], "drop");
    assert_eq!(t["hops"], json!([]));

    h.call(Method::POST, "/api/intents", &token, Some(intent_body("least latency", "denver", "new york")))
        .await;
    let (_, t) = h.call(Method::POST, "/api/trace", &token, Some(probe)).await;
    assert_eq!(t["outcome"], "delivered");
    assert_eq!(t["city"], "new york");
    let hops: Vec<&str> = t["hops"].as_array().unwrap().iter().map(|x| x["switch"].as_str().unwrap()).collect();
    assert_eq!(hops, ["s1", "s2", "s4", "s3"]);

    let (status, _) = h
        .call(Method::POST, "/api/trace", &token, Some(json!({"src_ip": "192.168.0.1", "dst_ip": "10.3.0.9"})))
        .await;
    assert_eq!(status, 400);
    let (status, _) = h
        .call(Method::POST, "/api/trace", &token, Some(json!({"src_ip": "nope", "dst_ip": "10.3.0.9"})))
        .await;
    assert_eq!(status, 400);
}

#[tokio::test]
async fn switches_route_lists_sessions() {
    let h = Harness::start().await;
    let token = h.login().await;
    let (_, list) = h.call(Method::GET, "/api/switches", &token, None).await;
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 5);
    assert!(list.iter().all(|s| s["state"] == "READY"));
}

#[tokio::test]
async fn webhook_checks_the_shared_secret() {
    let h = Harness::start().await;
    let launch = json!({"session_id": "a", "type": "Launch"});
    for secret in [None, Some("wrong"), Some("")] {
        let mut r = h.http.post(h.url("/ask/alexa")).json(&launch);
        if let Some(s) = secret {
            r = r.header("X-Webhook-Secret", s);
        }
        assert_eq!(r.send().await.unwrap().status(), 401);
    }
    let (status, _) = h.webhook(json!({"type": "Launch"})).await;
    assert_eq!(status, 400);
    let (status, reply) = h.webhook(launch).await;
    assert_eq!(status, 200);
    assert_eq!(reply["should_end_session"], false);
}

#[tokio::test]
async fn webhook_conversation_provisions_an_intent() {
    let h = Harness::start().await;
    let turn = |kind: &str, transcript: &str| json!({"session_id": "s", "type": kind, "transcript": transcript});
    h.webhook(turn("Launch", "")).await;
    let (_, r) = h.webhook(turn("Utterance", "setup a high bandwidth path from denver to new york")).await;
    assert_eq!(r["should_end_session"], false);
    let (_, r) = h.webhook(turn("Utterance", "yes")).await;
    assert_eq!(r["should_end_session"], true);
    assert!(r["speech_text"].as_str().unwrap().contains("s1, s4, s3"), "{r}");
    let token = h.login().await;
    let (_, list) = h.call(Method::GET, "/api/intents?state=ACTIVE", &token, None).await;
    assert_eq!(list[0]["switches"], json!(["s1", "s4", "s3"]));
}

#[tokio::test]
async fn static_dir_is_served_at_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let www = dir.path().join("www");
    std::fs::create_dir(&www).unwrap();
    std::fs::write(www.join("index.html"), "<h1>ui</h1>").unwrap();
    let h = Harness::start_with(dir, |c| c.http.static_dir = Some(www)).await;
    let r = h.http.get(h.url("/")).send().await.unwrap();
    assert_eq!(r.status(), 200);
    assert_eq!(r.text().await.unwrap(), "<h1>ui</h1>");
    assert_eq!(h.http.get(h.url("/api/topology")).send().await.unwrap().status(), 401);
}
