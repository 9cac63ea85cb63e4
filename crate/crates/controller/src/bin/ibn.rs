use std::io::{BufRead, Write};
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ibn_controller::api::{LoginReply, TraceView, WEBHOOK_SECRET_HEADER};
use ibn_controller::config::Config;
use ibn_controller::server::{load_topology, Service};
use ibn_controller::sim::Fabric;
use ibn_core::dialogue::{RequestKind, WebhookRequest, WebhookResponse};
use ibn_core::dataplane::TraceOutcome;
use ibn_core::fixtures::topo5;
use ibn_core::{IntentType, Topology};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ibn", version, about = "Intent-based networking controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the controller and HTTP gateway.
    Serve {
        #[arg(long, env = "IBN_CONFIG")]
        config: PathBuf,
        /// Also start simulated switches for every switch in the topology.
        #[arg(long)]
        sim: bool,
    },
    /// Launch simulated switches against a running controller.
    Sim {
        #[arg(long)]
        topology: PathBuf,
        /// Southbound address of the controller.
        #[arg(long, default_value = "127.0.0.1:6653")]
        controller: SocketAddr,
    },
    /// Interactive transcript REPL against the dialogue webhook.
    Utter {
        #[arg(long, env = "IBN_URL", default_value = "http://127.0.0.1:8080")]
        url: String,
        #[arg(long, env = "IBN_WEBHOOK_SECRET")]
        secret: String,
    },
    /// Send a probe through the live flow tables and print the hops.
    Trace {
        src_ip: Ipv4Addr,
        dst_ip: Ipv4Addr,
        #[arg(long, env = "IBN_URL", default_value = "http://127.0.0.1:8080")]
        url: String,
        #[arg(long, env = "IBN_USER", default_value = "admin")]
        user: String,
        #[arg(long, env = "IBN_PASSWORD")]
        password: String,
    },
    /// Brute-force best path, for cross-checking the controller.
    Oracle {
        intent_type: String,
        from: String,
        to: String,
        /// Topology document; the built-in five-switch network if omitted.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        demand: f64,
    },
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { config, sim } => serve(config, sim).await,
        Command::Sim { topology, controller } => {
            let topology = Arc::new(load_topology(&topology)?);
            let fabric = Fabric::start(topology, controller);
            eprintln!("{} simulated switches dialing {controller}", fabric.dpids().len());
            tokio::signal::ctrl_c().await?;
            Ok(())
        }
        Command::Utter { url, secret } => utter(&url, &secret).await,
        Command::Trace {
            src_ip,
            dst_ip,
            url,
            user,
            password,
        } => trace(&url, &user, &password, src_ip, dst_ip).await,
        Command::Oracle {
            intent_type,
            from,
            to,
            topology,
            demand,
        } => oracle(&intent_type, &from, &to, topology, demand),
    }
}

async fn serve(path: PathBuf, sim: bool) -> Result<()> {
    let config = Config::load(&path)?;
    let service = Service::start(config).await?;
    eprintln!("http on {}, southbound on {}", service.http_addr, service.southbound_addr);
    let _fabric = sim.then(|| Fabric::start(service.engine.topology().clone(), service.southbound_addr));
    tokio::signal::ctrl_c().await?;
    service.shutdown();
    Ok(())
}

async fn utter(url: &str, secret: &str) -> Result<()> {
    let client = reqwest::Client::new();
    let session_id = format!("cli-{}", std::process::id());
    let send = |kind: RequestKind, transcript: String| {
        let request = WebhookRequest {
            session_id: session_id.clone(),
            kind,
            slots: Default::default(),
            transcript,
        };
        let client = client.clone();
        async move {
            let resp = client
                .post(format!("{url}/ask/alexa"))
                .header(WEBHOOK_SECRET_HEADER, secret)
                .json(&request)
                .send()
                .await
                .context("webhook unreachable")?;
            if !resp.status().is_success() {
                bail!("webhook returned {}", resp.status());
            }
            Ok::<WebhookResponse, anyhow::Error>(resp.json().await?)
        }
    };
    let mut reply = send(RequestKind::Launch, String::new()).await?;
    let stdin = std::io::stdin();
    loop {
        println!("< {}", reply.speech_text);
        if reply.should_end_session {
            return Ok(());
        }
        print!("> ");
        std::io::stdout().flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            return Ok(());
        }
        reply = send(RequestKind::Utterance, line.trim().to_string()).await?;
    }
}

async fn trace(url: &str, user: &str, password: &str, src_ip: Ipv4Addr, dst_ip: Ipv4Addr) -> Result<()> {
    let client = reqwest::Client::new();
    let login = client
        .post(format!("{url}/api/login"))
        .json(&json!({"username": user, "password": password}))
        .send()
        .await
        .context("gateway unreachable")?;
    if !login.status().is_success() {
        bail!("login failed: {}", login.status());
    }
    let login: LoginReply = login.json().await?;
    let resp = client
        .post(format!("{url}/api/trace"))
        .bearer_auth(&login.token)
        .json(&json!({"src_ip": src_ip, "dst_ip": dst_ip}))
        .send()
        .await?;
    if !resp.status().is_success() {
        bail!("trace failed: {} {}", resp.status(), resp.text().await.unwrap_or_default());
    }
    let t: TraceView = resp.json().await?;
    for (i, h) in t.hops.iter().enumerate() {
        println!("{:>2}  {:<6} {}  in {} out {}", i + 1, h.switch, h.dpid, h.in_port, h.out_port);
    }
    match t.outcome {
        TraceOutcome::Delivered { city } => println!("delivered to {city}"),
        TraceOutcome::Drop { at } => println!("dropped at {at}"),
        TraceOutcome::Loop { at } => println!("loop at {at}"),
    }
    if !t.unreachable.is_empty() {
        println!("unreachable: {}", t.unreachable.join(", "));
    }
    Ok(())
}

fn oracle(intent: &str, from: &str, to: &str, topology: Option<PathBuf>, demand: f64) -> Result<()> {
    let intent = IntentType::parse(intent).with_context(|| format!("unknown intent type {intent:?}"))?;
    let topology: Topology = match topology {
        Some(p) => load_topology(&p)?,
        None => topo5(),
    };
    let reserved = Default::default();
    let answer = ibn_core::oracle::best_path(&topology, from, to, intent, demand, &reserved)
        .with_context(|| format!("unknown city; known: {}", topology.cities().join(", ")))?;
    let Some(best) = answer.best else {
        bail!("no path meets {demand} Mbps ({} candidates)", answer.candidates.len());
    };
    let names: Vec<&str> = best.dpids().iter().map(|d| topology.name_of(*d).unwrap_or("?")).collect();
    println!("{}", names.join(","));
    println!(
        "latency {} ms, bottleneck {} Mbps, {} hops, {} candidates",
        best.latency_ms,
        best.bottleneck_mbps,
        best.hop_count,
        answer.candidates.len()
    );
    Ok(())
}
